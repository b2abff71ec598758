#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <variant>
#include <vector>

#include <toml.hpp>

#include "topicattn/coherence.hpp"
#include "topicattn/corpus.hpp"
#include "topicattn/detail/binary_io.hpp"
#include "topicattn/error.hpp"
#include "topicattn/lda.hpp"
#include "topicattn/nmf.hpp"
#include "topicattn/word_vectors.hpp"

namespace topicattn {

enum class Clusterer { gmm, kmeans };

/// Everything a `run` needs. Layers are 1-based here and in every table, as in
/// the usual reporting convention; the library below takes 0-based layers.
struct ExperimentConfig {
  struct Dataset {
    std::filesystem::path path;
    std::string format = "jsonl"; // dir_per_class | csv_labeled | jsonl | prepared
  } dataset;

  PreprocessConfig preprocess;
  std::string stopwords = "default"; // default | none | path to a word-per-line file

  std::vector<std::size_t> lda_grid{20};
  std::vector<std::size_t> nmf_grid{20};
  LdaConfig lda;
  NmfConfig nmf;

  std::optional<std::filesystem::path> archive;
  std::optional<std::vector<std::size_t>> layers; // unset: all layers
  WordVectorConfig vectors;
  Clusterer clusterer = Clusterer::gmm;
  std::vector<std::size_t> gmm_grid{2};
  std::size_t gmm_max_iter = 200;
  double gmm_tol = 1e-4;

  struct Seeds {
    std::uint64_t lda = 1, nmf = 1, gmm = 1;
  } seeds;

  CoherenceConfig coherence;

  std::filesystem::path output_dir = "results";
  std::size_t workers = 1;

  void validate() const
  {
    if (dataset.path.empty())
      throw ConfigError("dataset.path is required");
    if (lda_grid.empty() || nmf_grid.empty() || gmm_grid.empty())
      throw ConfigError("topic and cluster grids must be nonempty");
    for (const auto* grid : {&lda_grid, &nmf_grid, &gmm_grid})
      for (auto k : *grid)
        if (k < 1)
          throw ConfigError("grid values must be >= 1");
    if (layers) {
      if (layers->empty())
        throw ConfigError("plm.layers must be \"all\" or a nonempty list");
      for (auto l : *layers)
        if (l < 1)
          throw ConfigError("plm.layers are 1-based");
    }
    if (vectors.length < 1 || vectors.max_occurrences < 1)
      throw ConfigError("plm.length and plm.max_occurrences must be >= 1");
    if (workers < 1)
      throw ConfigError("output.workers must be >= 1");
    preprocess.validate();
    coherence.validate();
    LdaConfig l = lda;
    l.n_topics = 1;
    l.validate();
    NmfConfig n = nmf;
    n.n_topics = 1;
    n.validate();
  }
};

namespace detail {

inline std::unordered_set<std::string> load_stopwords(const std::string& spec, const std::filesystem::path& base)
{
  if (spec == "default")
    return default_stopwords();
  if (spec == "none")
    return {};
  std::filesystem::path p = spec;
  if (p.is_relative())
    p = base / p;
  std::istringstream in(read_text_file(p));
  std::unordered_set<std::string> words;
  for (std::string w; in >> w;)
    words.insert(ascii_lower(w));
  return words;
}

// Typed access to one TOML table that rejects keys nobody asked about.
class Section {
public:
  Section(const toml::table* t, std::string name) : table_(t), name_(std::move(name)) {}

  template <class T>
  void get(const std::string& key, T& out)
  {
    seen_.insert(key);
    const toml::node* n = table_ ? table_->get(key) : nullptr;
    if (!n)
      return;
    if constexpr (std::is_same_v<T, bool>) {
      if (!n->is_boolean())
        fail(key, "a boolean");
      out = n->as_boolean()->get();
    } else if constexpr (std::is_integral_v<T>) {
      if (!n->is_integer() || n->as_integer()->get() < 0)
        fail(key, "a nonnegative integer");
      out = static_cast<T>(n->as_integer()->get());
    } else if constexpr (std::is_floating_point_v<T>) {
      if (n->is_integer())
        out = static_cast<T>(n->as_integer()->get());
      else if (n->is_floating_point())
        out = static_cast<T>(n->as_floating_point()->get());
      else
        fail(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n->is_string())
        fail(key, "a string");
      out = n->as_string()->get();
    } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
      const auto* arr = n->as_array();
      if (!arr)
        fail(key, "an array of integers");
      out.clear();
      for (const auto& e : *arr) {
        if (!e.is_integer() || e.as_integer()->get() < 0)
          fail(key, "an array of nonnegative integers");
        out.push_back(static_cast<std::size_t>(e.as_integer()->get()));
      }
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

  const toml::node* raw(const std::string& key)
  {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  void finish() const
  {
    if (!table_)
      return;
    for (const auto& [k, v] : *table_)
      if (!seen_.count(std::string(k.str())))
        throw ConfigError("unknown key '" + name_ + "." + std::string(k.str()) + "'");
  }

  [[noreturn]] void fail(const std::string& key, const char* what) const
  {
    throw ConfigError("'" + name_ + "." + key + "' must be " + what);
  }

private:
  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

inline std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base)
{
  std::filesystem::path path = p;
  return path.is_relative() ? (base / path).lexically_normal() : path.lexically_normal();
}

// Applies "section.key=value" where value is TOML syntax (bare words become strings).
inline void apply_override(toml::table& root, const std::string& assignment)
{
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq)
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  std::string value = assignment.substr(eq + 1);
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + value);
  } catch (const toml::parse_error&) {
    parsed = toml::table{{"v", value}};
  }
  if (!root.contains(section))
    root.insert(section, toml::table{});
  auto* sec = root[section].as_table();
  if (!sec)
    throw ConfigError("'" + section + "' is not a table");
  sec->insert_or_assign(key, *parsed.get("v"));
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const toml::table& root, const std::filesystem::path& base)
{
  using detail::Section;
  ExperimentConfig cfg;
  auto section = [&](const char* name) {
    const auto* n = root.get(name);
    if (n && !n->is_table())
      throw ConfigError("'" + std::string(name) + "' must be a table");
    return Section(n ? n->as_table() : nullptr, name);
  };

  static const std::set<std::string> known{"dataset", "preprocess", "topics", "lda", "nmf", "plm",
                                           "gmm",     "seeds",      "coherence", "output"};
  for (const auto& [k, v] : root)
    if (!known.count(std::string(k.str())))
      throw ConfigError("unknown section '" + std::string(k.str()) + "'");

  auto ds = section("dataset");
  std::string path;
  ds.get("path", path);
  if (!path.empty())
    cfg.dataset.path = detail::resolve_path(path, base);
  ds.get("format", cfg.dataset.format);
  if (cfg.dataset.format != "prepared")
    parse_corpus_format(cfg.dataset.format);
  ds.finish();

  auto pp = section("preprocess");
  pp.get("lowercase", cfg.preprocess.lowercase);
  pp.get("stopwords", cfg.stopwords);
  pp.get("min_doc_freq", cfg.preprocess.min_doc_freq);
  pp.get("max_doc_freq_fraction", cfg.preprocess.max_doc_freq_fraction);
  pp.get("keep_non_ascii", cfg.preprocess.keep_non_ascii);
  pp.finish();
  if (cfg.stopwords != "default" && cfg.stopwords != "none")
    cfg.stopwords = detail::resolve_path(cfg.stopwords, base).string();
  cfg.preprocess.stopword_list = detail::load_stopwords(cfg.stopwords, base);

  auto tp = section("topics");
  tp.get("lda", cfg.lda_grid);
  tp.get("nmf", cfg.nmf_grid);
  tp.finish();

  auto lda = section("lda");
  if (const auto* a = lda.raw("alpha")) {
    double alpha = 0.0;
    if (a->is_integer())
      alpha = static_cast<double>(a->as_integer()->get());
    else if (a->is_floating_point())
      alpha = a->as_floating_point()->get();
    else
      lda.fail("alpha", "a number");
    cfg.lda.alpha = alpha;
  }
  lda.get("beta", cfg.lda.beta);
  lda.get("iterations", cfg.lda.n_iterations);
  lda.get("burn_in", cfg.lda.burn_in);
  lda.get("sample_lag", cfg.lda.sample_lag);
  lda.finish();

  auto nmf = section("nmf");
  nmf.get("iterations", cfg.nmf.n_iterations);
  nmf.get("tol", cfg.nmf.tol);
  std::string weighting = "tfidf";
  nmf.get("weighting", weighting);
  cfg.nmf.weighting = parse_nmf_weighting(weighting);
  nmf.finish();

  auto plm = section("plm");
  std::string archive;
  plm.get("archive", archive);
  if (!archive.empty())
    cfg.archive = detail::resolve_path(archive, base);
  if (const auto* l = plm.raw("layers")) {
    if (l->is_string()) {
      if (l->as_string()->get() != "all")
        plm.fail("layers", "\"all\" or an array of integers");
    } else {
      std::vector<std::size_t> layers;
      plm.get("layers", layers);
      cfg.layers = layers;
    }
  }
  std::string feature = "row_padded";
  plm.get("feature", feature);
  cfg.vectors.feature = parse_attention_feature(feature);
  plm.get("length", cfg.vectors.length);
  plm.get("max_occurrences", cfg.vectors.max_occurrences);
  std::string clusterer = "gmm";
  plm.get("clusterer", clusterer);
  if (clusterer != "gmm" && clusterer != "kmeans")
    throw ConfigError("plm.clusterer must be gmm or kmeans");
  cfg.clusterer = clusterer == "gmm" ? Clusterer::gmm : Clusterer::kmeans;
  plm.finish();

  auto gmm = section("gmm");
  gmm.get("grid", cfg.gmm_grid);
  gmm.get("max_iter", cfg.gmm_max_iter);
  gmm.get("tol", cfg.gmm_tol);
  gmm.finish();

  auto seeds = section("seeds");
  seeds.get("lda", cfg.seeds.lda);
  seeds.get("nmf", cfg.seeds.nmf);
  seeds.get("gmm", cfg.seeds.gmm);
  seeds.finish();

  auto coh = section("coherence");
  coh.get("window_size", cfg.coherence.window_size);
  coh.get("top_k", cfg.coherence.top_k);
  coh.get("gamma", cfg.coherence.gamma);
  coh.get("epsilon", cfg.coherence.epsilon);
  coh.finish();

  auto out = section("output");
  std::string dir;
  out.get("dir", dir);
  if (!dir.empty())
    cfg.output_dir = detail::resolve_path(dir, base);
  else
    cfg.output_dir = detail::resolve_path("results", base);
  out.get("workers", cfg.workers);
  out.finish();

  cfg.vectors.seed = cfg.seeds.gmm;
  cfg.validate();
  return cfg;
}

/// Reads a TOML config, applies "section.key=value" overrides, and resolves
/// relative paths against the config file's directory.
inline ExperimentConfig load_experiment_config(const std::filesystem::path& file,
                                               const std::vector<std::string>& overrides = {})
{
  toml::table root;
  try {
    root = toml::parse(detail::read_text_file(file), file.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << file.string() << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& o : overrides)
    detail::apply_override(root, o);
  return parse_experiment_config(root, std::filesystem::absolute(file).parent_path());
}

/// Fully resolved config as TOML. With `reproducible_only`, settings that
/// cannot change any result (output location, worker count) are left out.
inline std::string to_toml(const ExperimentConfig& cfg, bool reproducible_only = false)
{
  auto array = [](const std::vector<std::size_t>& v) {
    toml::array a;
    for (auto x : v)
      a.push_back(static_cast<std::int64_t>(x));
    return a;
  };
  auto i64 = [](auto v) { return static_cast<std::int64_t>(v); };

  toml::table lda{{"beta", cfg.lda.beta},
                  {"iterations", i64(cfg.lda.n_iterations)},
                  {"burn_in", i64(cfg.lda.burn_in)},
                  {"sample_lag", i64(cfg.lda.sample_lag)}};
  if (cfg.lda.alpha)
    lda.insert("alpha", *cfg.lda.alpha);

  toml::table plm{{"feature", std::string(to_string(cfg.vectors.feature))},
                  {"length", i64(cfg.vectors.length)},
                  {"max_occurrences", i64(cfg.vectors.max_occurrences)},
                  {"clusterer", cfg.clusterer == Clusterer::gmm ? "gmm" : "kmeans"}};
  if (cfg.archive)
    plm.insert("archive", cfg.archive->string());
  if (cfg.layers)
    plm.insert("layers", array(*cfg.layers));
  else
    plm.insert("layers", "all");

  toml::table root{
      {"dataset", toml::table{{"path", cfg.dataset.path.string()}, {"format", cfg.dataset.format}}},
      {"preprocess", toml::table{{"lowercase", cfg.preprocess.lowercase},
                                 {"stopwords", cfg.stopwords},
                                 {"min_doc_freq", i64(cfg.preprocess.min_doc_freq)},
                                 {"max_doc_freq_fraction", cfg.preprocess.max_doc_freq_fraction},
                                 {"keep_non_ascii", cfg.preprocess.keep_non_ascii}}},
      {"topics", toml::table{{"lda", array(cfg.lda_grid)}, {"nmf", array(cfg.nmf_grid)}}},
      {"lda", lda},
      {"nmf", toml::table{{"iterations", i64(cfg.nmf.n_iterations)},
                          {"tol", cfg.nmf.tol},
                          {"weighting", cfg.nmf.weighting == NmfWeighting::tfidf ? "tfidf" : "counts"}}},
      {"plm", plm},
      {"gmm", toml::table{{"grid", array(cfg.gmm_grid)}, {"max_iter", i64(cfg.gmm_max_iter)}, {"tol", cfg.gmm_tol}}},
      {"seeds", toml::table{{"lda", i64(cfg.seeds.lda)}, {"nmf", i64(cfg.seeds.nmf)}, {"gmm", i64(cfg.seeds.gmm)}}},
      {"coherence", toml::table{{"window_size", i64(cfg.coherence.window_size)},
                                {"top_k", i64(cfg.coherence.top_k)},
                                {"gamma", cfg.coherence.gamma},
                                {"epsilon", cfg.coherence.epsilon}}},
  };
  if (!reproducible_only)
    root.insert("output", toml::table{{"dir", cfg.output_dir.string()}, {"workers", i64(cfg.workers)}});
  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace topicattn
