// topicattn command-line front end. Exit codes: 0 ok, 2 config, 3 input, 4 numeric.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "topicattn/topicattn.hpp"

namespace fs = std::filesystem;
using namespace topicattn;
using nlohmann::json;

namespace {

void write_json(const fs::path& file, const json& j)
{
  detail::write_file_bytes(file, j.dump(1) + "\n");
}

// Topic lists from a JSON file: either [[w, ...], ...] or {"topics": [[...], ...]}.
std::vector<std::vector<std::string>> read_word_lists(const fs::path& file)
{
  try {
    auto j = json::parse(detail::read_text_file(file));
    if (j.is_object())
      j = j.at("topics");
    return j.get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw InputError(file.string() + ": expected a list of word lists (" + e.what() + ")");
  }
}

std::vector<std::size_t> one_based_layers(const std::string& spec, std::size_t n_layers)
{
  std::vector<std::size_t> out;
  if (spec == "all") {
    for (std::size_t l = 0; l < n_layers; ++l)
      out.push_back(l);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = spec.find(',', pos);
    const std::string item = spec.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    std::size_t value = 0;
    try {
      std::size_t used = 0;
      value = std::stoul(item, &used);
      if (used != item.size())
        throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad layer list '" + spec + "'");
    }
    if (value < 1 || value > n_layers)
      throw ConfigError("layer " + item + " outside 1.." + std::to_string(n_layers));
    out.push_back(value - 1);
    if (comma == std::string::npos)
      break;
    pos = comma + 1;
  }
  return out;
}

struct PreprocessFlags {
  std::size_t min_df = 5;
  double max_df = 0.5;
  std::string stopwords = "default";
  bool keep_non_ascii = false;
  bool no_lowercase = false;

  void attach(CLI::App* app)
  {
    app->add_option("--min-df", min_df, "Minimum document frequency")->capture_default_str();
    app->add_option("--max-df-fraction", max_df, "Maximum document frequency as a fraction")->capture_default_str();
    app->add_option("--stopwords", stopwords, "default, none, or a word-per-line file")->capture_default_str();
    app->add_flag("--keep-non-ascii", keep_non_ascii, "Keep tokens with non-ASCII characters");
    app->add_flag("--no-lowercase", no_lowercase, "Keep letter case");
  }

  PreprocessConfig resolve() const
  {
    PreprocessConfig cfg;
    cfg.min_doc_freq = min_df;
    cfg.max_doc_freq_fraction = max_df;
    cfg.keep_non_ascii = keep_non_ascii;
    cfg.lowercase = !no_lowercase;
    cfg.stopword_list = detail::load_stopwords(stopwords, fs::current_path());
    cfg.validate();
    return cfg;
  }
};

int exit_code_for(const std::exception& e)
{
  if (dynamic_cast<const ConfigError*>(&e))
    return 2;
  if (dynamic_cast<const NumericError*>(&e))
    return 4;
  return 3;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Topic models, attention clusters and their coherence"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Load, tokenize and segment a corpus into a prepared directory");
  std::string in_path, in_format = "jsonl", in_out;
  PreprocessFlags pre;
  ingest->add_option("--input", in_path, "Corpus file or directory")->required();
  ingest->add_option("--format", in_format, "dir_per_class, csv_labeled or jsonl")->capture_default_str();
  ingest->add_option("--out", in_out, "Output directory")->required();
  pre.attach(ingest);

  // topics
  auto* topics = app.add_subcommand("topics", "Train an LDA or NMF topic model on a prepared corpus");
  std::string tp_corpus, tp_model = "lda", tp_out, tp_weighting = "tfidf";
  std::size_t tp_k = 20, tp_iters = 0, tp_burn = 800, tp_lag = 10, tp_top = 20;
  std::uint64_t tp_seed = 1;
  std::optional<double> tp_alpha;
  double tp_beta = 0.01, tp_tol = 1e-4;
  topics->add_option("--corpus", tp_corpus, "Prepared corpus directory")->required();
  topics->add_option("--model", tp_model, "lda or nmf")->check(CLI::IsMember({"lda", "nmf"}))->capture_default_str();
  topics->add_option("-k,--topics", tp_k, "Number of topics")->capture_default_str();
  topics->add_option("--seed", tp_seed)->capture_default_str();
  topics->add_option("--iterations", tp_iters, "Sweeps (lda, default 1000) or updates (nmf, default 500)");
  topics->add_option("--burn-in", tp_burn)->capture_default_str();
  topics->add_option("--sample-lag", tp_lag)->capture_default_str();
  topics->add_option("--alpha", tp_alpha, "Dirichlet prior on topic mixtures (default 50/K)");
  topics->add_option("--beta", tp_beta)->capture_default_str();
  topics->add_option("--tol", tp_tol, "NMF relative objective tolerance")->capture_default_str();
  topics->add_option("--weighting", tp_weighting, "NMF input: tfidf or counts")->capture_default_str();
  topics->add_option("--top-k", tp_top)->capture_default_str();
  topics->add_option("--out", tp_out, "Model directory")->required();

  // attnvec
  auto* attnvec = app.add_subcommand("attnvec", "Build per-word attention vectors from an archive");
  std::string av_archive, av_corpus, av_out, av_layers = "all", av_feature = "row_padded";
  WordVectorConfig av_cfg;
  attnvec->add_option("--archive", av_archive)->required();
  attnvec->add_option("--corpus", av_corpus, "Prepared corpus directory (for the vocabulary)")->required();
  attnvec->add_option("--layers", av_layers, "Comma-separated 1-based layers or 'all'")->capture_default_str();
  attnvec->add_option("--features", av_feature, "row_padded or received")->capture_default_str();
  attnvec->add_option("--length", av_cfg.length, "Padded row length L")->capture_default_str();
  attnvec->add_option("--max-occurrences", av_cfg.max_occurrences)->capture_default_str();
  attnvec->add_option("--seed", av_cfg.seed)->capture_default_str();
  attnvec->add_option("--out", av_out)->required();

  // cluster
  auto* cluster = app.add_subcommand("cluster", "Soft-cluster word vectors with a diagonal GMM");
  std::string cl_vectors, cl_corpus, cl_out;
  GmmConfig cl_cfg;
  std::size_t cl_top = 20;
  bool cl_kmeans = false;
  cluster->add_option("--vectors", cl_vectors, "Word-vector directory from attnvec")->required();
  cluster->add_option("--corpus", cl_corpus, "Prepared corpus directory (for tie-breaks)")->required();
  cluster->add_option("-k,--clusters", cl_cfg.n_components)->capture_default_str();
  cluster->add_option("--seed", cl_cfg.seed)->capture_default_str();
  cluster->add_option("--max-iter", cl_cfg.max_iter)->capture_default_str();
  cluster->add_option("--tol", cl_cfg.tol)->capture_default_str();
  cluster->add_option("--top-k", cl_top)->capture_default_str();
  cluster->add_flag("--kmeans", cl_kmeans, "Use the k-means baseline instead of the GMM");
  cluster->add_option("--out", cl_out)->required();

  // coherence
  auto* coh = app.add_subcommand("coherence", "c_v coherence of word lists against a prepared corpus");
  std::string co_corpus, co_words;
  CoherenceConfig co_cfg;
  coh->add_option("--corpus", co_corpus)->required();
  coh->add_option("--words", co_words, "JSON list of word lists, or a top_words.json")->required();
  coh->add_option("--window", co_cfg.window_size)->capture_default_str();
  coh->add_option("--top-k", co_cfg.top_k, "Truncate each list to this many words")->capture_default_str();
  coh->add_option("--gamma", co_cfg.gamma)->capture_default_str();
  coh->add_option("--epsilon", co_cfg.epsilon)->capture_default_str();

  // overlap
  auto* ovl = app.add_subcommand("overlap", "Top-k overlap between two sets of word lists");
  std::string ov_a, ov_b, ov_csv;
  ovl->add_option("--clusters", ov_a, "Rows: JSON list of word lists")->required();
  ovl->add_option("--topics", ov_b, "Columns: JSON list of word lists")->required();
  ovl->add_option("--csv", ov_csv, "Also write the matrix as CSV");

  // run
  auto* run = app.add_subcommand("run", "Run the full experiment described by a TOML config");
  std::string rn_config, rn_only = "all", rn_output;
  std::vector<std::string> rn_set;
  std::size_t rn_workers = 0;
  run->add_option("--config", rn_config)->required();
  run->add_option("--only", rn_only, "ptm, plm or overlap")->check(CLI::IsMember({"all", "ptm", "plm", "overlap"}));
  run->add_option("--set", rn_set, "Override a config value: section.key=value");
  run->add_option("--output", rn_output, "Output directory (overrides output.dir)");
  run->add_option("--workers", rn_workers, "Concurrent grid cells (overrides output.workers)");

  // illustrate
  auto* ill = app.add_subcommand("illustrate", "Per-word attention and topic weights for one sentence");
  std::string il_archive, il_model, il_corpus, il_text;
  std::optional<std::uint64_t> il_id;
  std::size_t il_layer = 1, il_sweeps = 50;
  std::uint64_t il_seed = 1;
  std::optional<double> il_alpha;
  ill->add_option("--archive", il_archive)->required();
  ill->add_option("--model", il_model, "Topic model directory")->required();
  ill->add_option("--corpus", il_corpus, "Prepared corpus directory (for the vocabulary)")->required();
  ill->add_option("--layer", il_layer, "1-based layer")->capture_default_str();
  auto* text_opt = ill->add_option("--sentence", il_text, "Sentence text as stored in the archive");
  ill->add_option("--sentence-id", il_id)->excludes(text_opt);
  ill->add_option("--alpha", il_alpha, "Prior for fold-in (default: the model's alpha, else 50/K)");
  ill->add_option("--sweeps", il_sweeps)->capture_default_str();
  ill->add_option("--seed", il_seed)->capture_default_str();

  // validate-archive
  auto* val = app.add_subcommand("validate-archive", "Check every record of an attention archive");
  std::string va_archive;
  double va_tol = 1e-4;
  val->add_option("--archive", va_archive)->required();
  val->add_option("--tolerance", va_tol, "Allowed |row sum - 1|")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*ingest) {
      auto cfg = pre.resolve();
      auto corpus = load_corpus(in_path, parse_corpus_format(in_format));
      prepare_corpus(corpus, cfg);
      auto vocab = build_vocab(corpus, cfg);
      write_prepared_corpus(in_out, corpus, vocab);
      std::size_t sentences = 0;
      for (const auto& d : corpus.documents)
        sentences += d.sentences.size();
      std::cout << json{{"documents", corpus.size()}, {"sentences", sentences}, {"vocabulary", vocab.size()}}.dump()
                << "\n";
    } else if (*topics) {
      auto corpus = read_prepared_corpus(tp_corpus);
      auto vocab = read_vocab(fs::path(tp_corpus) / "vocab.json");
      auto dtm = doc_term_matrix(corpus, vocab);
      TopicModel model;
      if (tp_model == "lda") {
        LdaConfig cfg;
        cfg.n_topics = tp_k;
        cfg.seed = tp_seed;
        cfg.n_iterations = tp_iters ? tp_iters : 1000;
        cfg.burn_in = tp_burn;
        cfg.sample_lag = tp_lag;
        cfg.alpha = tp_alpha;
        cfg.beta = tp_beta;
        model = lda_train(dtm, cfg);
      } else {
        NmfConfig cfg;
        cfg.n_topics = tp_k;
        cfg.seed = tp_seed;
        cfg.n_iterations = tp_iters ? tp_iters : 500;
        cfg.tol = tp_tol;
        cfg.weighting = parse_nmf_weighting(tp_weighting);
        model = nmf_train(dtm, cfg);
      }
      save_topic_model(tp_out, model);
      write_json(fs::path(tp_out) / "top_words.json", {{"topics", all_top_words(model, vocab, tp_top)}});
    } else if (*attnvec) {
      auto vocab = read_vocab(fs::path(av_corpus) / "vocab.json");
      ArchiveReader reader(av_archive);
      av_cfg.feature = parse_attention_feature(av_feature);
      const auto layers = one_based_layers(av_layers, reader.manifest().n_layers);
      auto mats = build_word_vectors(reader, vocab, layers, av_cfg);
      for (const auto& m : mats)
        save_word_vectors(fs::path(av_out) / ("layer_" + std::to_string(m.layer + 1)), m);
    } else if (*cluster) {
      auto vocab = read_vocab(fs::path(cl_corpus) / "vocab.json");
      auto features = load_word_vectors(cl_vectors);
      SoftClustering soft;
      if (cl_kmeans) {
        soft = one_hot(kmeans_baseline(features.vectors, cl_cfg.n_components, cl_cfg.seed), cl_cfg.n_components,
                       features.vocab_words, features.layer);
      } else {
        GmmModel model;
        soft = gmm_cluster(features, cl_cfg, &model);
        save_gmm(fs::path(cl_out) / "gmm", model);
      }
      save_soft_clustering(cl_out, soft);
      write_json(fs::path(cl_out) / "top_words.json", {{"topics", all_cluster_top_words(soft, cl_top, vocab)}});
    } else if (*coh) {
      auto corpus = read_prepared_corpus(co_corpus);
      auto lists = read_word_lists(co_words);
      for (auto& l : lists)
        if (l.size() > co_cfg.top_k)
          l.resize(co_cfg.top_k);
      std::cout << to_json(coherence(corpus.tm_token_lists(), lists, co_cfg)).dump(1) << "\n";
    } else if (*ovl) {
      auto r = overlap_matrix(read_word_lists(ov_a), read_word_lists(ov_b));
      if (!ov_csv.empty())
        detail::write_file_bytes(ov_csv, to_csv(r));
      std::cout << to_json(r).dump() << "\n";
    } else if (*run) {
      std::vector<std::string> overrides = rn_set;
      if (!rn_output.empty())
        overrides.push_back("output.dir=\"" + fs::absolute(rn_output).generic_string() + "\"");
      if (rn_workers > 0)
        overrides.push_back("output.workers=" + std::to_string(rn_workers));
      auto cfg = load_experiment_config(rn_config, overrides);
      auto result = run_experiment(cfg, parse_run_stages(rn_only));
      for (const auto& f : result.files)
        std::cout << f.string() << "\n";
    } else if (*ill) {
      ArchiveReader reader(il_archive);
      auto record = il_id ? find_sentence(reader, *il_id) : find_sentence(reader, il_text);
      if (!record)
        throw InputError("sentence not found in archive");
      auto model = load_topic_model(il_model);
      auto vocab = read_vocab(fs::path(il_corpus) / "vocab.json");
      if (il_layer < 1)
        throw ConfigError("--layer is 1-based");
      double alpha = 50.0 / static_cast<double>(model.n_topics());
      if (il_alpha)
        alpha = *il_alpha;
      else if (model.train_meta.hyperparameters.contains("alpha"))
        alpha = model.train_meta.hyperparameters["alpha"].get<double>();
      auto il = illustrate_sentence(*record, il_layer - 1, model, vocab, alpha, il_seed, il_sweeps);
      std::cout << to_json(il).dump(1) << "\n";
    } else if (*val) {
      RecordCheckOptions opts;
      opts.row_sum_tolerance = va_tol;
      auto report = validate_archive(va_archive, opts);
      std::cout << report.to_json().dump(1) << "\n";
      return report.ok() ? 0 : 3;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
