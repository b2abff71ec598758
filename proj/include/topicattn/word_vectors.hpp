#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "topicattn/attention_archive.hpp"
#include "topicattn/corpus.hpp"
#include "topicattn/detail/binary_io.hpp"
#include "topicattn/detail/matrix.hpp"
#include "topicattn/detail/random.hpp"
#include "topicattn/error.hpp"

namespace topicattn {

/// How a word occurrence becomes a position-space vector.
enum class AttentionFeature {
  row_padded, // attention the word pays: mean of its pieces' rows
  received,   // attention the word receives: mean of its pieces' columns
};

inline AttentionFeature parse_attention_feature(std::string_view s)
{
  if (s == "row_padded" || s == "row")
    return AttentionFeature::row_padded;
  if (s == "received")
    return AttentionFeature::received;
  throw ConfigError("unknown attention feature '" + std::string(s) + "' (expected row_padded or received)");
}

inline std::string_view to_string(AttentionFeature f) { return f == AttentionFeature::received ? "received" : "row_padded"; }

/// Word-level view of one record at one layer: W x T, columns in token space.
struct PooledSentence {
  RowMatrix rows;
  std::vector<bool> has_pieces; // false for words the tokenizer dropped (e.g. chunk truncation)
};

namespace detail {

inline std::vector<std::vector<std::size_t>> pieces_by_word(const AttentionRecord& record)
{
  std::vector<std::vector<std::size_t>> pieces(record.words.size());
  bool any = false;
  for (std::size_t p = 0; p < record.token_count(); ++p)
    if (record.piece_to_word[p] >= 0) {
      pieces[static_cast<std::size_t>(record.piece_to_word[p])].push_back(p);
      any = true;
    }
  if (!any)
    throw InputError("sentence " + std::to_string(record.sentence_id) + " has only special tokens");
  return pieces;
}

inline void check_layer(const AttentionRecord& record, std::size_t layer)
{
  if (layer >= record.layers.size())
    throw InputError("layer " + std::to_string(layer) + " out of range (" + std::to_string(record.layers.size()) +
                     " layers)");
}

} // namespace detail

/// Each word's row is the mean of its pieces' rows; special-token rows are dropped.
inline PooledSentence pool_wordpieces(const AttentionRecord& record, std::size_t layer)
{
  detail::check_layer(record, layer);
  const auto pieces = detail::pieces_by_word(record);
  const auto t = static_cast<Eigen::Index>(record.token_count());
  PooledSentence out{RowMatrix::Zero(static_cast<Eigen::Index>(record.words.size()), t),
                     std::vector<bool>(record.words.size(), false)};
  for (std::size_t w = 0; w < pieces.size(); ++w) {
    if (pieces[w].empty())
      continue;
    out.has_pieces[w] = true;
    for (auto p : pieces[w])
      for (Eigen::Index c = 0; c < t; ++c)
        out.rows(static_cast<Eigen::Index>(w), c) += record.at(layer, p, static_cast<std::size_t>(c));
    out.rows.row(static_cast<Eigen::Index>(w)) /= static_cast<double>(pieces[w].size());
  }
  return out;
}

/// Each word's vector is the mean of its pieces' columns, indexed by query position.
inline PooledSentence pool_received(const AttentionRecord& record, std::size_t layer)
{
  detail::check_layer(record, layer);
  const auto pieces = detail::pieces_by_word(record);
  const auto t = static_cast<Eigen::Index>(record.token_count());
  PooledSentence out{RowMatrix::Zero(static_cast<Eigen::Index>(record.words.size()), t),
                     std::vector<bool>(record.words.size(), false)};
  for (std::size_t w = 0; w < pieces.size(); ++w) {
    if (pieces[w].empty())
      continue;
    out.has_pieces[w] = true;
    for (auto p : pieces[w])
      for (Eigen::Index q = 0; q < t; ++q)
        out.rows(static_cast<Eigen::Index>(w), q) += record.at(layer, static_cast<std::size_t>(q), p);
    out.rows.row(static_cast<Eigen::Index>(w)) /= static_cast<double>(pieces[w].size());
  }
  return out;
}

struct WordAttentionMatrix {
  std::size_t layer = 0;
  AttentionFeature feature = AttentionFeature::row_padded;
  std::vector<std::string> vocab_words; // row order: increasing vocabulary id
  RowMatrix vectors;                    // |V'| x L
  std::vector<std::size_t> occurrence_counts; // occurrences found in the archive
  std::vector<std::size_t> sampled_counts;    // occurrences averaged (<= max_occurrences)

  std::size_t size() const { return vocab_words.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.cols()); }
};

struct WordVectorConfig {
  std::size_t length = 128; // L
  std::size_t max_occurrences = 1000;
  std::uint64_t seed = 1;
  AttentionFeature feature = AttentionFeature::row_padded;
};

namespace detail {

using RecordVisitor = std::function<void(const std::function<void(const AttentionRecord&)>&)>;

struct OccurrenceRef {
  std::uint64_t record;
  std::uint32_t word;
};

inline WordAttentionMatrix finalize_word_vectors(std::size_t layer, AttentionFeature feature, const Vocabulary& vocab,
                                                 const std::vector<std::size_t>& used_ids, const RowMatrix& sums,
                                                 const std::vector<std::size_t>& totals,
                                                 const std::vector<std::size_t>& sampled)
{
  WordAttentionMatrix m;
  m.layer = layer;
  m.feature = feature;
  m.vectors.resize(static_cast<Eigen::Index>(used_ids.size()), sums.cols());
  for (std::size_t i = 0; i < used_ids.size(); ++i) {
    const auto id = used_ids[i];
    m.vocab_words.push_back(vocab.id_to_word[id]);
    m.occurrence_counts.push_back(totals[id]);
    m.sampled_counts.push_back(sampled[id]);
    m.vectors.row(static_cast<Eigen::Index>(i)) =
        sums.row(static_cast<Eigen::Index>(id)) / static_cast<double>(sampled[id]);
  }
  return m;
}

// Two streaming passes at most. Pass one sums every occurrence of every word
// while keeping a seeded reservoir (algorithm R) of occurrence references per
// word; words seen more than max_occurrences times are re-summed from their
// reservoirs in pass two.
inline std::vector<WordAttentionMatrix> build_word_vectors_impl(const RecordVisitor& visit, std::size_t n_layers,
                                                                const Vocabulary& vocab,
                                                                const std::vector<std::size_t>& layers,
                                                                const WordVectorConfig& cfg)
{
  for (auto l : layers)
    if (l >= n_layers)
      throw InputError("layer " + std::to_string(l) + " out of range (archive has " + std::to_string(n_layers) +
                       " layers)");
  if (cfg.length < 1)
    throw ConfigError("feature length L must be >= 1");
  if (cfg.max_occurrences < 1)
    throw ConfigError("max_occurrences must be >= 1");

  const auto v = static_cast<Eigen::Index>(vocab.size());
  const auto len = static_cast<Eigen::Index>(cfg.length);
  std::vector<RowMatrix> sums(layers.size(), RowMatrix::Zero(v, len));
  std::vector<std::size_t> totals(vocab.size(), 0);
  std::vector<std::vector<OccurrenceRef>> reservoir(vocab.size());
  Rng rng(cfg.seed);

  auto add_occurrence = [&](const AttentionRecord& r, const std::vector<PooledSentence>& pooled, std::size_t w,
                            std::size_t id) {
    const auto copy = std::min<Eigen::Index>(len, static_cast<Eigen::Index>(r.token_count()));
    for (std::size_t li = 0; li < layers.size(); ++li)
      sums[li].row(static_cast<Eigen::Index>(id)).head(copy) += pooled[li].rows.row(static_cast<Eigen::Index>(w)).head(copy);
  };
  auto pool_all = [&](const AttentionRecord& r) {
    std::vector<PooledSentence> pooled;
    pooled.reserve(layers.size());
    for (auto l : layers)
      pooled.push_back(cfg.feature == AttentionFeature::received ? pool_received(r, l) : pool_wordpieces(r, l));
    return pooled;
  };

  std::uint64_t record_index = 0;
  visit([&](const AttentionRecord& r) {
    const auto this_record = record_index++;
    std::vector<std::pair<std::size_t, std::size_t>> hits; // (word index, vocab id)
    bool any_piece = false;
    for (auto p : r.piece_to_word)
      any_piece |= p >= 0;
    if (!any_piece)
      return;
    std::vector<bool> has_pieces(r.words.size(), false);
    for (auto p : r.piece_to_word)
      if (p >= 0)
        has_pieces[static_cast<std::size_t>(p)] = true;
    for (std::size_t w = 0; w < r.words.size(); ++w)
      if (has_pieces[w])
        if (auto id = vocab.find(ascii_lower(r.words[w])))
          hits.emplace_back(w, *id);
    if (hits.empty())
      return;
    const auto pooled = pool_all(r);
    for (const auto& [w, id] : hits) {
      const auto seen = ++totals[id];
      const OccurrenceRef ref{this_record, static_cast<std::uint32_t>(w)};
      if (seen <= cfg.max_occurrences) {
        reservoir[id].push_back(ref);
        add_occurrence(r, pooled, w, id);
      } else {
        const auto j = rng.below(seen);
        if (j < cfg.max_occurrences)
          reservoir[id][j] = ref;
      }
    }
  });

  std::vector<std::size_t> used_ids;
  std::vector<std::size_t> sampled(vocab.size(), 0);
  std::map<std::uint64_t, std::vector<std::pair<std::uint32_t, std::size_t>>> second_pass;
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (totals[id] == 0)
      continue;
    used_ids.push_back(id);
    sampled[id] = std::min(totals[id], cfg.max_occurrences);
    if (totals[id] > cfg.max_occurrences) {
      for (auto& s : sums)
        s.row(static_cast<Eigen::Index>(id)).setZero();
      for (const auto& ref : reservoir[id])
        second_pass[ref.record].emplace_back(ref.word, id);
    }
  }
  if (used_ids.empty())
    throw InputError("no vocabulary word occurs in the archive");

  if (!second_pass.empty()) {
    record_index = 0;
    visit([&](const AttentionRecord& r) {
      auto it = second_pass.find(record_index++);
      if (it == second_pass.end())
        return;
      const auto pooled = pool_all(r);
      for (const auto& [w, id] : it->second)
        add_occurrence(r, pooled, w, id);
    });
  }

  std::vector<WordAttentionMatrix> out;
  for (std::size_t li = 0; li < layers.size(); ++li)
    out.push_back(finalize_word_vectors(layers[li], cfg.feature, vocab, used_ids, sums[li], totals, sampled));
  return out;
}

} // namespace detail

/// Per-word attention features for several layers in one pass over the archive.
/// Layers are 0-based. Rows shorter than L are zero-padded, longer ones truncated.
inline std::vector<WordAttentionMatrix> build_word_vectors(const AttentionArchive& archive, const Vocabulary& vocab,
                                                           const std::vector<std::size_t>& layers,
                                                           const WordVectorConfig& cfg)
{
  auto visit = [&](const std::function<void(const AttentionRecord&)>& fn) {
    for (const auto& r : archive.records)
      fn(r);
  };
  return detail::build_word_vectors_impl(visit, archive.manifest.n_layers, vocab, layers, cfg);
}

inline std::vector<WordAttentionMatrix> build_word_vectors(const ArchiveReader& reader, const Vocabulary& vocab,
                                                           const std::vector<std::size_t>& layers,
                                                           const WordVectorConfig& cfg)
{
  auto visit = [&](const std::function<void(const AttentionRecord&)>& fn) { reader.for_each(fn); };
  return detail::build_word_vectors_impl(visit, reader.manifest().n_layers, vocab, layers, cfg);
}

inline WordAttentionMatrix build_word_vectors(const AttentionArchive& archive, const Vocabulary& vocab,
                                              std::size_t layer, const WordVectorConfig& cfg)
{
  return std::move(build_word_vectors(archive, vocab, std::vector<std::size_t>{layer}, cfg).front());
}

inline void save_word_vectors(const std::filesystem::path& dir, const WordAttentionMatrix& m)
{
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["layer"] = m.layer;
  j["feature"] = to_string(m.feature);
  j["words"] = m.vocab_words;
  j["occurrence_counts"] = m.occurrence_counts;
  j["sampled_counts"] = m.sampled_counts;
  j["rows"] = m.vectors.rows();
  j["cols"] = m.vectors.cols();
  j["dtype"] = "float64-le";
  j["vectors_file"] = "vectors.f64";
  detail::write_f64_blob(dir / "vectors.f64", {m.vectors.data(), static_cast<std::size_t>(m.vectors.size())});
  detail::write_file_bytes(dir / "manifest.json", j.dump(1) + "\n");
}

inline WordAttentionMatrix load_word_vectors(const std::filesystem::path& dir)
{
  WordAttentionMatrix m;
  try {
    auto j = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    m.layer = j.at("layer").get<std::size_t>();
    m.feature = parse_attention_feature(j.at("feature").get<std::string>());
    m.vocab_words = j.at("words").get<std::vector<std::string>>();
    m.occurrence_counts = j.at("occurrence_counts").get<std::vector<std::size_t>>();
    m.sampled_counts = j.at("sampled_counts").get<std::vector<std::size_t>>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    if (static_cast<std::size_t>(rows) != m.vocab_words.size())
      throw InputError((dir / "manifest.json").string() + ": row count disagrees with word list");
    auto data = detail::read_f64_blob(dir / j.at("vectors_file").get<std::string>(), static_cast<std::size_t>(rows * cols));
    m.vectors = Eigen::Map<RowMatrix>(data.data(), rows, cols);
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
  return m;
}

} // namespace topicattn
