#pragma once

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicattn/attention_archive.hpp"
#include "topicattn/coherence.hpp"
#include "topicattn/corpus.hpp"
#include "topicattn/corpus_io.hpp"
#include "topicattn/detail/parallel.hpp"
#include "topicattn/experiment_config.hpp"
#include "topicattn/gmm.hpp"
#include "topicattn/lda.hpp"
#include "topicattn/nmf.hpp"
#include "topicattn/overlap.hpp"
#include "topicattn/word_vectors.hpp"

namespace topicattn {

enum class TableKind { ptm_coherence, plm_coherence, overlap };

inline std::string_view to_string(TableKind k)
{
  switch (k) {
  case TableKind::ptm_coherence:
    return "ptm_coherence";
  case TableKind::plm_coherence:
    return "plm_coherence";
  case TableKind::overlap:
    return "overlap";
  }
  return "";
}

struct ResultsTable {
  TableKind kind = TableKind::ptm_coherence;
  std::string name; // file stem
  std::string row_header;
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<double>>> cells; // rows x columns, nullopt prints NA
  std::string provenance;

  std::string to_csv() const
  {
    std::string out = "# " + provenance + "\n" + row_header;
    for (const auto& c : columns)
      out += "," + c;
    out += "\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out += rows[r];
      for (const auto& cell : cells[r]) {
        out += ",";
        out += cell ? format_cell(*cell) : "NA";
      }
      out += "\n";
    }
    return out;
  }

  std::string format_cell(double v) const
  {
    char buf[64];
    if (kind == TableKind::overlap)
      std::snprintf(buf, sizeof buf, "%.0f", v);
    else
      std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
  }
};

/// The maximum cell of each table; tied cells are all reported in row order.
inline nlohmann::json report_best(const std::vector<ResultsTable>& tables)
{
  nlohmann::json out = nlohmann::json::array();
  for (const auto& t : tables) {
    std::optional<double> best;
    for (const auto& row : t.cells)
      for (const auto& c : row)
        if (c && (!best || *c > *best))
          best = c;
    if (!best)
      throw InputError("report_best: table '" + t.name + "' has no values");
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t r = 0; r < t.rows.size(); ++r)
      for (std::size_t c = 0; c < t.columns.size(); ++c)
        if (t.cells[r][c] && *t.cells[r][c] == *best)
          cells.push_back({{"row", t.rows[r]}, {"column", t.columns[c]}, {"value", *best}});
    out.push_back({{"table", t.name}, {"kind", to_string(t.kind)}, {"best", cells}});
  }
  return out;
}

enum class RunStages { all, ptm, plm, overlap };

inline RunStages parse_run_stages(std::string_view s)
{
  if (s == "all")
    return RunStages::all;
  if (s == "ptm")
    return RunStages::ptm;
  if (s == "plm")
    return RunStages::plm;
  if (s == "overlap")
    return RunStages::overlap;
  throw ConfigError("--only must be ptm, plm or overlap");
}

struct ExperimentResult {
  std::vector<ResultsTable> tables;
  std::vector<std::filesystem::path> files;
  nlohmann::json summary;
};

namespace detail {

/// Runs fn and re-raises any library error with the stage name prefixed,
/// keeping its kind (and so the CLI exit code).
template <class Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn())
{
  auto tag = [&](const std::exception& e) { return "stage " + stage + ": " + e.what(); };
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(tag(e));
  } catch (const CorruptArchive& e) {
    throw CorruptArchive(tag(e));
  } catch (const InputError& e) {
    throw InputError(tag(e));
  } catch (const NumericError& e) {
    throw NumericError(tag(e));
  } catch (const std::bad_alloc&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(tag(e));
  }
}

struct PreparedData {
  Corpus corpus;
  Vocabulary vocab;
};

inline PreparedData load_dataset(const ExperimentConfig& cfg)
{
  PreparedData data;
  if (cfg.dataset.format == "prepared") {
    data.corpus = read_prepared_corpus(cfg.dataset.path);
    data.vocab = read_vocab(cfg.dataset.path / "vocab.json");
  } else {
    data.corpus = load_corpus(cfg.dataset.path, parse_corpus_format(cfg.dataset.format));
    prepare_corpus(data.corpus, cfg.preprocess);
    data.vocab = build_vocab(data.corpus, cfg.preprocess);
  }
  return data;
}

struct ScoredModel {
  std::string family;
  std::size_t k = 0;
  std::vector<std::vector<std::string>> top;
  CoherenceResult coherence;
};

// Index of the highest-scoring entry; ties go to the earlier (smaller-K) entry.
inline std::size_t best_index(const std::vector<ScoredModel>& models)
{
  std::size_t best = 0;
  for (std::size_t i = 1; i < models.size(); ++i)
    if (models[i].coherence.mean > models[best].coherence.mean)
      best = i;
  return best;
}

inline std::string archive_label(const std::filesystem::path& archive)
{
  auto p = archive.lexically_normal();
  if (p.filename().empty())
    p = p.parent_path();
  std::string name = p.filename().string();
  for (auto& c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
      c = '_';
  return name.empty() ? "archive" : name;
}

} // namespace detail

/// Trains every topic model and clustering in the config's grids, scores them
/// with c_v against the preprocessed corpus, and writes the result tables.
/// Outputs are staged and moved into output_dir only when every stage succeeds.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, RunStages stages = RunStages::all)
{
  cfg.validate();
  const bool want_ptm_table = stages == RunStages::all || stages == RunStages::ptm;
  const bool want_plm_table = stages == RunStages::all || stages == RunStages::plm;
  const bool want_overlap = stages == RunStages::all || stages == RunStages::overlap;
  const bool need_ptm = want_ptm_table || want_overlap;
  const bool need_plm = want_plm_table || want_overlap;
  if (need_plm && !cfg.archive)
    throw ConfigError("plm.archive is required unless --only ptm is given");

  const std::uint64_t config_hash = fnv1a(to_toml(cfg, true));
  char prov[160];
  std::snprintf(prov, sizeof prov, "config_hash=%016llx seeds=lda:%llu,nmf:%llu,gmm:%llu",
                static_cast<unsigned long long>(config_hash), static_cast<unsigned long long>(cfg.seeds.lda),
                static_cast<unsigned long long>(cfg.seeds.nmf), static_cast<unsigned long long>(cfg.seeds.gmm));
  const std::string provenance = prov;

  auto data = detail::in_stage("dataset", [&] { return detail::load_dataset(cfg); });
  const auto reference = data.corpus.tm_token_lists();
  const std::size_t top_k = cfg.coherence.top_k;

  // Topic models: one grid cell per (family, K).
  std::vector<detail::ScoredModel> lda_models, nmf_models;
  if (need_ptm) {
    DocTermMatrix dtm = detail::in_stage("doc-term matrix", [&] { return doc_term_matrix(data.corpus, data.vocab); });
    struct Cell {
      bool lda;
      std::size_t k;
    };
    std::vector<Cell> cells;
    for (auto k : cfg.lda_grid)
      cells.push_back({true, k});
    for (auto k : cfg.nmf_grid)
      cells.push_back({false, k});
    std::vector<detail::ScoredModel> trained(cells.size());
    detail::parallel_for(cells.size(), cfg.workers, [&](std::size_t i) {
      const auto& c = cells[i];
      const std::string stage = std::string(c.lda ? "lda" : "nmf") + " K=" + std::to_string(c.k);
      trained[i] = detail::in_stage(stage, [&] {
        TopicModel m;
        if (c.lda) {
          LdaConfig l = cfg.lda;
          l.n_topics = c.k;
          l.seed = cfg.seeds.lda;
          m = lda_train(dtm, l);
        } else {
          NmfConfig n = cfg.nmf;
          n.n_topics = c.k;
          n.seed = cfg.seeds.nmf;
          m = nmf_train(dtm, n);
        }
        return detail::ScoredModel{c.lda ? "lda" : "nmf", c.k, all_top_words(m, data.vocab, top_k), {}};
      });
    });
    for (std::size_t i = 0; i < cells.size(); ++i)
      (cells[i].lda ? lda_models : nmf_models).push_back(std::move(trained[i]));
  }

  // Clusterings: one cell per (layer, K) over word vectors built in one archive pass.
  std::vector<std::size_t> layers;
  std::vector<std::vector<detail::ScoredModel>> clusterings; // [layer][grid index]
  std::size_t dropped_words = 0;
  if (need_plm) {
    auto vectors = detail::in_stage("word vectors", [&] {
      ArchiveReader reader(*cfg.archive);
      const auto n_layers = reader.manifest().n_layers;
      if (cfg.layers) {
        layers = *cfg.layers;
      } else {
        for (std::size_t l = 1; l <= n_layers; ++l)
          layers.push_back(l);
      }
      std::vector<std::size_t> zero_based;
      for (auto l : layers) {
        if (l > n_layers)
          throw ConfigError("layer " + std::to_string(l) + " exceeds the archive's " + std::to_string(n_layers) +
                            " layers");
        zero_based.push_back(l - 1);
      }
      return build_word_vectors(reader, data.vocab, zero_based, cfg.vectors);
    });
    clusterings.assign(layers.size(), std::vector<detail::ScoredModel>(cfg.gmm_grid.size()));
    const std::size_t n_cells = layers.size() * cfg.gmm_grid.size();
    detail::parallel_for(n_cells, cfg.workers, [&](std::size_t i) {
      const std::size_t li = i / cfg.gmm_grid.size(), ki = i % cfg.gmm_grid.size();
      const std::size_t k = cfg.gmm_grid[ki];
      const std::string stage = "cluster layer=" + std::to_string(layers[li]) + " K=" + std::to_string(k);
      clusterings[li][ki] = detail::in_stage(stage, [&] {
        const auto& features = vectors[li];
        SoftClustering soft;
        if (cfg.clusterer == Clusterer::gmm) {
          GmmConfig g;
          g.n_components = k;
          g.seed = cfg.seeds.gmm;
          g.max_iter = cfg.gmm_max_iter;
          g.tol = cfg.gmm_tol;
          soft = gmm_cluster(features, g);
        } else {
          soft = one_hot(kmeans_baseline(features.vectors, k, cfg.seeds.gmm), k, features.vocab_words, features.layer);
        }
        return detail::ScoredModel{"gmm", k, all_cluster_top_words(soft, top_k, data.vocab), {}};
      });
    });
    // Cluster words outside the reference vocabulary cannot be scored or matched.
    for (auto& row : clusterings)
      for (auto& m : row)
        for (auto& words : m.top) {
          const auto before = words.size();
          std::erase_if(words, [&](const std::string& w) { return !data.vocab.contains(w); });
          dropped_words += before - words.size();
        }
  }

  // One window pass scores every topic set.
  detail::in_stage("coherence", [&] {
    TrackedWords tracked;
    auto add = [&](const std::vector<detail::ScoredModel>& ms) {
      for (const auto& m : ms)
        tracked.add_topics(m.top);
    };
    add(lda_models);
    add(nmf_models);
    for (const auto& row : clusterings)
      add(row);
    const auto stats = window_counts(reference, tracked.words, cfg.coherence.window_size, tracked.pairs, cfg.workers);
    auto score = [&](std::vector<detail::ScoredModel>& ms) {
      for (auto& m : ms)
        m.coherence = cv_coherence(m.top, stats, cfg.coherence);
    };
    score(lda_models);
    score(nmf_models);
    for (auto& row : clusterings)
      score(row);
    return 0;
  });

  ExperimentResult result;
  const std::string archive_name = cfg.archive ? detail::archive_label(*cfg.archive) : "";

  if (want_ptm_table) {
    std::set<std::size_t> ks(cfg.lda_grid.begin(), cfg.lda_grid.end());
    ks.insert(cfg.nmf_grid.begin(), cfg.nmf_grid.end());
    ResultsTable t{TableKind::ptm_coherence, "ptm_coherence", "K", {}, {"lda", "nmf"}, {}, provenance};
    for (auto k : ks) {
      t.rows.push_back(std::to_string(k));
      std::vector<std::optional<double>> row(2);
      for (const auto& m : lda_models)
        if (m.k == k)
          row[0] = m.coherence.mean;
      for (const auto& m : nmf_models)
        if (m.k == k)
          row[1] = m.coherence.mean;
      t.cells.push_back(row);
    }
    result.tables.push_back(std::move(t));
  }
  if (want_plm_table) {
    ResultsTable t{TableKind::plm_coherence, "plm_coherence_" + archive_name, "layer", {}, {}, {}, provenance};
    for (auto k : cfg.gmm_grid)
      t.columns.push_back(std::to_string(k));
    for (std::size_t li = 0; li < layers.size(); ++li) {
      t.rows.push_back(std::to_string(layers[li]));
      std::vector<std::optional<double>> row;
      for (const auto& m : clusterings[li])
        row.push_back(m.coherence.mean);
      t.cells.push_back(row);
    }
    result.tables.push_back(std::move(t));
  }
  nlohmann::json overlap_details = nlohmann::json::array();
  if (want_overlap) {
    ResultsTable t{TableKind::overlap, "overlap_" + archive_name, "layer", {}, {"lda", "nmf"}, {}, provenance};
    const auto& best_lda = lda_models[detail::best_index(lda_models)];
    const auto& best_nmf = nmf_models[detail::best_index(nmf_models)];
    for (std::size_t li = 0; li < layers.size(); ++li) {
      const auto& best = clusterings[li][detail::best_index(clusterings[li])];
      t.rows.push_back(std::to_string(layers[li]));
      std::vector<std::optional<double>> row;
      for (const auto* ref : {&best_lda, &best_nmf}) {
        auto r = detail::in_stage("overlap layer=" + std::to_string(layers[li]), [&] {
          return overlap_matrix(best.top, ref->top);
        });
        row.push_back(static_cast<double>(r.mode_of_max));
        overlap_details.push_back({{"layer", layers[li]},
                                   {"gmm_k", best.k},
                                   {"reference", ref->family},
                                   {"reference_k", ref->k},
                                   {"overlap", to_json(r)}});
      }
      t.cells.push_back(row);
    }
    result.tables.push_back(std::move(t));
  }

  // Summary with every model's top words and per-topic scores.
  nlohmann::json models = nlohmann::json::array();
  auto describe = [&](const detail::ScoredModel& m, std::optional<std::size_t> layer) {
    nlohmann::json j{{"family", m.family}, {"k", m.k}, {"top_words", m.top}, {"coherence", to_json(m.coherence)}};
    if (layer)
      j["layer"] = *layer;
    models.push_back(std::move(j));
  };
  for (const auto& m : lda_models)
    describe(m, std::nullopt);
  for (const auto& m : nmf_models)
    describe(m, std::nullopt);
  for (std::size_t li = 0; li < clusterings.size(); ++li)
    for (const auto& m : clusterings[li])
      describe(m, layers[li]);
  result.summary = {{"provenance", provenance},
                    {"best", report_best(result.tables)},
                    {"models", models},
                    {"dropped_cluster_words", dropped_words}};
  if (want_overlap)
    result.summary["overlap"] = overlap_details;

  // Stage every file, then move them into place together.
  namespace fs = std::filesystem;
  const fs::path staging = cfg.output_dir / (".staging-" + std::to_string(config_hash));
  std::error_code ec;
  fs::remove_all(staging, ec);
  try {
    fs::create_directories(staging);
    std::vector<std::pair<std::string, std::string>> outputs;
    for (const auto& t : result.tables)
      outputs.emplace_back(t.name + ".csv", t.to_csv());
    outputs.emplace_back("summary.json", result.summary.dump(1) + "\n");
    outputs.emplace_back("resolved_config.toml", "# " + provenance + "\n" + to_toml(cfg));
    for (const auto& [name, text] : outputs)
      detail::write_file_bytes(staging / name, text);
    for (const auto& [name, text] : outputs) {
      fs::rename(staging / name, cfg.output_dir / name);
      result.files.push_back(cfg.output_dir / name);
    }
    fs::remove_all(staging);
  } catch (const fs::filesystem_error& e) {
    fs::remove_all(staging, ec);
    for (const auto& f : result.files)
      fs::remove(f, ec);
    throw InputError(std::string("stage output: ") + e.what());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
  return result;
}

struct WordWeights {
  std::string word;
  double plm_weight = 0.0;
  double ptm_weight = 0.0;
  bool in_vocab = false;
};

struct Illustration {
  std::uint64_t sentence_id = 0;
  std::size_t layer = 0; // 0-based
  std::size_t dominant_topic = 0;
  std::vector<double> topic_mixture;
  std::vector<WordWeights> words;
};

/// Per-word weights for one archived sentence. plm_weight is the attention the
/// word receives (mean over non-special query rows of its piece-mean column);
/// ptm_weight is the word's probability under the sentence's dominant topic,
/// found by fold-in sampling with the topic-word matrix fixed. Both are
/// normalized to sum to 1 over the sentence; OOV words get ptm_weight 0.
inline Illustration illustrate_sentence(const AttentionRecord& record, std::size_t layer, const TopicModel& model,
                                        const Vocabulary& vocab, double alpha, std::uint64_t seed,
                                        std::size_t sweeps = 50)
{
  const auto received = pool_received(record, layer);
  Illustration out;
  out.sentence_id = record.sentence_id;
  out.layer = layer;

  std::vector<Eigen::Index> queries;
  for (std::size_t q = 0; q < record.token_count(); ++q)
    if (record.piece_to_word[q] >= 0)
      queries.push_back(static_cast<Eigen::Index>(q));

  std::vector<std::size_t> ids;
  double plm_total = 0.0;
  for (std::size_t w = 0; w < record.words.size(); ++w) {
    WordWeights ww;
    ww.word = record.words[w];
    if (received.has_pieces[w]) {
      double sum = 0.0;
      for (auto q : queries)
        sum += received.rows(static_cast<Eigen::Index>(w), q);
      ww.plm_weight = sum / static_cast<double>(queries.size());
    }
    plm_total += ww.plm_weight;
    if (auto id = vocab.find(detail::ascii_lower(ww.word)); id && *id < model.n_words()) {
      ww.in_vocab = true;
      ids.push_back(*id);
    }
    out.words.push_back(std::move(ww));
  }

  out.topic_mixture = infer_topic_mixture(model, ids, alpha, sweeps, seed);
  out.dominant_topic = static_cast<std::size_t>(
      std::max_element(out.topic_mixture.begin(), out.topic_mixture.end()) - out.topic_mixture.begin());

  double ptm_total = 0.0;
  for (auto& ww : out.words)
    if (ww.in_vocab) {
      ww.ptm_weight = model.topic_word(static_cast<Eigen::Index>(out.dominant_topic),
                                       static_cast<Eigen::Index>(*vocab.find(detail::ascii_lower(ww.word))));
      ptm_total += ww.ptm_weight;
    }
  for (auto& ww : out.words) {
    if (plm_total > 0.0)
      ww.plm_weight /= plm_total;
    if (ptm_total > 0.0)
      ww.ptm_weight /= ptm_total;
  }
  return out;
}

inline nlohmann::json to_json(const Illustration& il)
{
  nlohmann::json words = nlohmann::json::array();
  for (const auto& w : il.words)
    words.push_back({{"word", w.word}, {"plm_weight", w.plm_weight}, {"ptm_weight", w.ptm_weight}, {"in_vocab", w.in_vocab}});
  return {{"sentence_id", il.sentence_id},
          {"layer", il.layer + 1},
          {"dominant_topic", il.dominant_topic},
          {"topic_mixture", il.topic_mixture},
          {"words", words}};
}

/// First record whose words, joined by single spaces, equal `text` after
/// whitespace normalization and ASCII case folding.
inline std::optional<AttentionRecord> find_sentence(const ArchiveReader& reader, const std::string& text)
{
  const std::string target = detail::ascii_lower(detail::normalize_whitespace(text));
  std::optional<AttentionRecord> found;
  reader.for_each([&](const AttentionRecord& r) {
    if (found)
      return;
    std::string joined;
    for (const auto& w : r.words)
      joined += (joined.empty() ? "" : " ") + w;
    if (detail::ascii_lower(joined) == target)
      found = r;
  });
  return found;
}

inline std::optional<AttentionRecord> find_sentence(const ArchiveReader& reader, std::uint64_t sentence_id)
{
  std::optional<AttentionRecord> found;
  reader.for_each([&](const AttentionRecord& r) {
    if (!found && r.sentence_id == sentence_id)
      found = r;
  });
  return found;
}

} // namespace topicattn
