#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicattn/corpus.hpp"
#include "topicattn/detail/binary_io.hpp"
#include "topicattn/detail/matrix.hpp"
#include "topicattn/error.hpp"

namespace topicattn {

enum class TopicModelKind { lda, nmf };

inline std::string_view to_string(TopicModelKind k) { return k == TopicModelKind::lda ? "lda" : "nmf"; }

inline TopicModelKind parse_topic_model_kind(std::string_view s)
{
  if (s == "lda")
    return TopicModelKind::lda;
  if (s == "nmf")
    return TopicModelKind::nmf;
  throw ConfigError("unknown topic model '" + std::string(s) + "' (expected lda or nmf)");
}

struct TrainMeta {
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
  std::vector<double> objective_trace; // nmf: ||X - WH||_F^2 before the first and after every iteration
};

struct TopicModel {
  TopicModelKind kind = TopicModelKind::lda;
  RowMatrix topic_word; // K x |V|
  RowMatrix doc_topic;  // n_docs x K
  TrainMeta train_meta;

  std::size_t n_topics() const { return static_cast<std::size_t>(topic_word.rows()); }
  std::size_t n_words() const { return static_cast<std::size_t>(topic_word.cols()); }
};

struct RankedWord {
  std::size_t id;
  std::string word;
  double weight;
};

/// The k heaviest words of a topic, descending; ties by coll_freq then lexicographic.
inline std::vector<RankedWord> top_words(const TopicModel& model, const Vocabulary& vocab, std::size_t topic,
                                         std::size_t k)
{
  if (topic >= model.n_topics())
    throw InputError("topic index " + std::to_string(topic) + " out of range (K=" +
                     std::to_string(model.n_topics()) + ")");
  if (model.n_words() != vocab.size())
    throw InputError("model and vocabulary disagree on |V|");
  if (k > vocab.size())
    throw InputError("k=" + std::to_string(k) + " exceeds vocabulary size");

  std::vector<std::size_t> ids(vocab.size());
  std::iota(ids.begin(), ids.end(), 0);
  auto row = model.topic_word.row(static_cast<Eigen::Index>(topic));
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (row(a) != row(b))
                        return row(a) > row(b);
                      return vocab.ranks_before(a, b);
                    });
  std::vector<RankedWord> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({ids[i], vocab.id_to_word[ids[i]], row(ids[i])});
  return out;
}

inline std::vector<std::vector<std::string>> all_top_words(const TopicModel& model, const Vocabulary& vocab,
                                                           std::size_t k)
{
  k = std::min(k, vocab.size());
  std::vector<std::vector<std::string>> out;
  for (std::size_t t = 0; t < model.n_topics(); ++t) {
    std::vector<std::string> words;
    for (auto& rw : top_words(model, vocab, t, k))
      words.push_back(std::move(rw.word));
    out.push_back(std::move(words));
  }
  return out;
}

// On-disk layout: <dir>/manifest.json plus row-major little-endian float64
// blobs whose filenames the manifest records.
inline void save_topic_model(const std::filesystem::path& dir, const TopicModel& model)
{
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["kind"] = to_string(model.kind);
  m["n_topics"] = model.n_topics();
  m["n_words"] = model.n_words();
  m["n_docs"] = model.doc_topic.rows();
  m["seed"] = model.train_meta.seed;
  m["iterations"] = model.train_meta.iterations;
  m["hyperparameters"] = model.train_meta.hyperparameters;
  m["objective_trace"] = model.train_meta.objective_trace;
  m["dtype"] = "float64-le";
  m["layout"] = "row-major";
  m["topic_word_file"] = "topic_word.f64";
  m["doc_topic_file"] = "doc_topic.f64";
  detail::write_f64_blob(dir / "topic_word.f64", {model.topic_word.data(), static_cast<std::size_t>(model.topic_word.size())});
  detail::write_f64_blob(dir / "doc_topic.f64", {model.doc_topic.data(), static_cast<std::size_t>(model.doc_topic.size())});
  detail::write_file_bytes(dir / "manifest.json", m.dump(2) + "\n");
}

inline TopicModel load_topic_model(const std::filesystem::path& dir)
{
  TopicModel model;
  try {
    auto m = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    model.kind = parse_topic_model_kind(m.at("kind").get<std::string>());
    const auto k = m.at("n_topics").get<Eigen::Index>();
    const auto v = m.at("n_words").get<Eigen::Index>();
    const auto d = m.at("n_docs").get<Eigen::Index>();
    model.train_meta.seed = m.at("seed").get<std::uint64_t>();
    model.train_meta.iterations = m.at("iterations").get<std::size_t>();
    model.train_meta.hyperparameters = m.at("hyperparameters");
    model.train_meta.objective_trace = m.value("objective_trace", std::vector<double>{});
    auto tw = detail::read_f64_blob(dir / m.at("topic_word_file").get<std::string>(), static_cast<std::size_t>(k * v));
    auto dt = detail::read_f64_blob(dir / m.at("doc_topic_file").get<std::string>(), static_cast<std::size_t>(d * k));
    model.topic_word = Eigen::Map<RowMatrix>(tw.data(), k, v);
    model.doc_topic = Eigen::Map<RowMatrix>(dt.data(), d, k);
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
  return model;
}

} // namespace topicattn
