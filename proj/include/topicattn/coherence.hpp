#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "topicattn/error.hpp"

namespace topicattn {

struct CoherenceConfig {
  std::size_t window_size = 110;
  std::size_t top_k = 20;
  double gamma = 1.0;
  double epsilon = 1e-12;

  void validate() const
  {
    if (window_size < 1)
      throw ConfigError("coherence: window_size must be >= 1");
    if (top_k < 1)
      throw ConfigError("coherence: top_k must be >= 1");
    if (!(gamma > 0.0) || !(epsilon >= 0.0))
      throw ConfigError("coherence: gamma must be positive and epsilon nonnegative");
  }
};

using WordPair = std::pair<std::string, std::string>;

/// Boolean sliding-window document frequencies for a fixed set of words.
/// Pair counts exist for every tracked pair, or only for the pairs named when
/// the stats were built with a filter.
struct WindowStats {
  std::size_t window_size = 0;
  std::uint64_t n_windows = 0;
  std::vector<std::string> words;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<std::uint64_t> word_windows;
  std::unordered_map<std::uint64_t, std::uint64_t> pair_windows; // key: lo * words.size() + hi
  bool all_pairs = true;
  std::unordered_map<std::uint64_t, bool> tracked_pairs; // only when !all_pairs

  bool tracks(const std::string& w) const { return index.count(w) != 0; }

  std::uint64_t word_count(const std::string& w) const
  {
    auto it = index.find(w);
    if (it == index.end())
      throw InputError("coherence: word '" + w + "' is not tracked");
    return word_windows[it->second];
  }

  std::uint64_t pair_key(std::uint32_t a, std::uint32_t b) const
  {
    if (a > b)
      std::swap(a, b);
    return static_cast<std::uint64_t>(a) * words.size() + b;
  }

  std::uint64_t pair_count(const std::string& a, const std::string& b) const
  {
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end())
      throw InputError("coherence: pair (" + a + ", " + b + ") is not tracked");
    if (ia->second == ib->second)
      return word_windows[ia->second];
    const auto key = pair_key(ia->second, ib->second);
    if (!all_pairs && tracked_pairs.count(key) == 0)
      throw InputError("coherence: pair (" + a + ", " + b + ") is not tracked");
    auto it = pair_windows.find(key);
    return it == pair_windows.end() ? 0 : it->second;
  }
};

namespace detail {

// Window starts covered by a word, as sorted disjoint half-open intervals.
using Intervals = std::vector<std::pair<std::uint64_t, std::uint64_t>>;

inline std::uint64_t intersect_length(const Intervals& a, const Intervals& b)
{
  std::uint64_t total = 0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const auto lo = std::max(a[i].first, b[j].first);
    const auto hi = std::min(a[i].second, b[j].second);
    if (lo < hi)
      total += hi - lo;
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return total;
}

struct WindowCounter {
  const WindowStats& shape;
  const std::vector<std::vector<std::uint32_t>>* partners; // null: all pairs
  std::uint64_t n_windows = 0;
  std::vector<std::uint64_t> word_windows;
  std::unordered_map<std::uint64_t, std::uint64_t> pair_windows;

  std::vector<std::pair<std::uint32_t, std::uint64_t>> hits;
  std::vector<std::uint32_t> present;
  std::vector<Intervals> spans;
  std::vector<std::int64_t> slot;

  explicit WindowCounter(const WindowStats& s, const std::vector<std::vector<std::uint32_t>>* p)
      : shape(s), partners(p), word_windows(s.words.size(), 0), slot(s.words.size(), -1)
  {
  }

  void add_document(const std::vector<std::string>& tokens)
  {
    const std::uint64_t n = tokens.size();
    const std::uint64_t w = shape.window_size;
    const std::uint64_t starts = n <= w ? 1 : n - w + 1;
    n_windows += starts;

    hits.clear();
    for (std::uint64_t p = 0; p < n; ++p) {
      auto it = shape.index.find(tokens[p]);
      if (it != shape.index.end())
        hits.emplace_back(it->second, p);
    }
    if (hits.empty())
      return;
    std::sort(hits.begin(), hits.end());

    present.clear();
    spans.clear();
    for (const auto& [word, pos] : hits) {
      // Occurrence at pos lies in windows starting in [pos - w + 1, pos], clipped.
      const std::uint64_t lo = pos + 1 >= w ? pos + 1 - w : 0;
      const std::uint64_t hi = std::min(pos, starts - 1) + 1;
      if (present.empty() || present.back() != word) {
        present.push_back(word);
        spans.emplace_back();
      }
      auto& iv = spans.back();
      if (!iv.empty() && lo <= iv.back().second)
        iv.back().second = std::max(iv.back().second, hi);
      else
        iv.emplace_back(lo, hi);
    }

    for (std::size_t i = 0; i < present.size(); ++i) {
      slot[present[i]] = static_cast<std::int64_t>(i);
      std::uint64_t len = 0;
      for (const auto& [lo, hi] : spans[i])
        len += hi - lo;
      word_windows[present[i]] += len;
    }
    auto add_pair = [&](std::size_t i, std::size_t j) {
      const auto common = intersect_length(spans[i], spans[j]);
      if (common > 0)
        pair_windows[shape.pair_key(present[i], present[j])] += common;
    };
    if (partners == nullptr) {
      for (std::size_t i = 0; i < present.size(); ++i)
        for (std::size_t j = i + 1; j < present.size(); ++j)
          add_pair(i, j);
    } else {
      for (std::size_t i = 0; i < present.size(); ++i)
        for (auto b : (*partners)[present[i]])
          if (slot[b] >= 0)
            add_pair(i, static_cast<std::size_t>(slot[b]));
    }
    for (auto word : present)
      slot[word] = -1;
  }
};

} // namespace detail

/// Counts, over every sliding window of window_size tokens (step 1) in every
/// document, how many windows contain each tracked word and each tracked pair.
/// A document no longer than the window, including an empty one, is a single
/// window. With pair_filter set, only those unordered pairs are counted.
/// Documents are split across up to `workers` threads; counts are integers, so
/// the merged result does not depend on the split.
inline WindowStats window_counts(const std::vector<std::vector<std::string>>& docs,
                                 const std::set<std::string>& tracked, std::size_t window_size,
                                 const std::optional<std::set<WordPair>>& pair_filter = std::nullopt,
                                 std::size_t workers = 1)
{
  if (window_size < 1)
    throw ConfigError("coherence: window_size must be >= 1");
  if (docs.empty())
    throw InputError("coherence: empty reference corpus");

  WindowStats stats;
  stats.window_size = window_size;
  for (const auto& w : tracked) {
    stats.index.emplace(w, static_cast<std::uint32_t>(stats.words.size()));
    stats.words.push_back(w);
  }

  std::vector<std::vector<std::uint32_t>> partners;
  if (pair_filter) {
    stats.all_pairs = false;
    partners.resize(stats.words.size());
    for (const auto& [a, b] : *pair_filter) {
      auto ia = stats.index.find(a);
      auto ib = stats.index.find(b);
      if (ia == stats.index.end() || ib == stats.index.end())
        throw InputError("coherence: filtered pair (" + a + ", " + b + ") uses an untracked word");
      if (ia->second == ib->second)
        continue;
      const auto lo = std::min(ia->second, ib->second);
      const auto hi = std::max(ia->second, ib->second);
      if (stats.tracked_pairs.emplace(stats.pair_key(lo, hi), true).second)
        partners[lo].push_back(hi);
    }
  }
  const auto* partner_ptr = pair_filter ? &partners : nullptr;

  workers = std::clamp<std::size_t>(workers, 1, docs.size());
  std::vector<detail::WindowCounter> counters;
  counters.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t)
    counters.emplace_back(stats, partner_ptr);
  auto run = [&](std::size_t t) {
    for (std::size_t d = t; d < docs.size(); d += workers)
      counters[t].add_document(docs[d]);
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < workers; ++t)
      threads.emplace_back(run, t);
    for (auto& th : threads)
      th.join();
  }

  stats.word_windows.assign(stats.words.size(), 0);
  for (auto& c : counters) {
    stats.n_windows += c.n_windows;
    for (std::size_t i = 0; i < stats.words.size(); ++i)
      stats.word_windows[i] += c.word_windows[i];
    for (const auto& [key, count] : c.pair_windows)
      stats.pair_windows[key] += count;
  }
  return stats;
}

/// Normalized PMI from window probabilities, clamped to [-1, 1].
inline double npmi_from_counts(std::uint64_t n_a, std::uint64_t n_b, std::uint64_t n_ab, std::uint64_t n_windows,
                               double epsilon)
{
  if (n_a == 0 || n_b == 0 || n_windows == 0)
    return 0.0;
  const double n = static_cast<double>(n_windows);
  const double p_a = static_cast<double>(n_a) / n;
  const double p_b = static_cast<double>(n_b) / n;
  const double p_ab = static_cast<double>(n_ab) / n + epsilon;
  if (p_ab >= 1.0)
    return 1.0;
  const double v = std::log(p_ab / (p_a * p_b)) / -std::log(p_ab);
  return std::clamp(v, -1.0, 1.0);
}

inline double npmi(const WindowStats& stats, const std::string& a, const std::string& b, double epsilon)
{
  if (stats.n_windows == 0)
    throw InputError("coherence: empty window statistics");
  const auto n_a = stats.word_count(a);
  if (a == b)
    return n_a == 0 ? 0.0 : 1.0;
  return npmi_from_counts(n_a, stats.word_count(b), stats.pair_count(a, b), stats.n_windows, epsilon);
}

struct CoherenceResult {
  std::vector<double> per_topic;
  double mean = 0.0;
  std::vector<std::size_t> dropped; // words per topic absent from the reference windows
  std::vector<bool> flagged;        // fewer than two words survived; score forced to 0
  CoherenceConfig config;
};

namespace detail {

inline double signed_power(double x, double gamma)
{
  if (gamma == 1.0)
    return x;
  return std::copysign(std::pow(std::abs(x), gamma), x);
}

inline double cosine(const std::vector<double>& u, const std::vector<double>& v)
{
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  const double denom = std::sqrt(uu * vv);
  if (!(denom > 0.0))
    return 0.0;
  return std::clamp(dot / denom, -1.0, 1.0);
}

// Words scored for a topic: distinct, present in at least one window, sorted so
// the score does not depend on input order.
inline std::vector<std::string> scored_words(const std::vector<std::string>& topic, const WindowStats& stats,
                                             std::size_t& dropped)
{
  std::set<std::string> unique(topic.begin(), topic.end());
  std::vector<std::string> kept;
  dropped = 0;
  for (const auto& w : unique) {
    if (stats.tracks(w) && stats.word_count(w) > 0)
      kept.push_back(w);
    else
      ++dropped;
  }
  return kept;
}

} // namespace detail

/// c_v: one-set segmentation, NPMI context vectors, cosine against the topic
/// vector, arithmetic mean per topic and over topics.
inline CoherenceResult cv_coherence(const std::vector<std::vector<std::string>>& topics, const WindowStats& stats,
                                    const CoherenceConfig& cfg)
{
  cfg.validate();
  if (topics.empty())
    throw InputError("coherence: no topics to score");
  CoherenceResult result;
  result.config = cfg;
  for (const auto& topic : topics) {
    if (topic.empty())
      throw InputError("coherence: empty topic word list");
    std::size_t dropped = 0;
    const auto words = detail::scored_words(topic, stats, dropped);
    result.dropped.push_back(dropped);
    const std::size_t m = words.size();
    if (m < 2) {
      result.per_topic.push_back(0.0);
      result.flagged.push_back(true);
      continue;
    }
    std::vector<std::vector<double>> context(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        context[i][j] = j < i ? context[j][i] : detail::signed_power(npmi(stats, words[i], words[j], cfg.epsilon), cfg.gamma);
    std::vector<double> total(m, 0.0);
    for (const auto& row : context)
      for (std::size_t j = 0; j < m; ++j)
        total[j] += row[j];
    double score = 0.0;
    for (const auto& row : context)
      score += detail::cosine(row, total);
    result.per_topic.push_back(score / static_cast<double>(m));
    result.flagged.push_back(false);
  }
  // Summing in sorted order keeps the mean independent of topic order.
  auto sorted = result.per_topic;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted)
    sum += v;
  result.mean = sum / static_cast<double>(sorted.size());
  return result;
}

/// Union of words and within-topic pairs over several topic sets, for building
/// one WindowStats that can score all of them.
struct TrackedWords {
  std::set<std::string> words;
  std::set<WordPair> pairs;

  void add_topics(const std::vector<std::vector<std::string>>& topics)
  {
    for (const auto& topic : topics) {
      std::set<std::string> unique(topic.begin(), topic.end());
      words.insert(unique.begin(), unique.end());
      for (auto a = unique.begin(); a != unique.end(); ++a)
        for (auto b = std::next(a); b != unique.end(); ++b)
          pairs.emplace(*a, *b);
    }
  }
};

inline CoherenceResult coherence(const std::vector<std::vector<std::string>>& reference,
                                 const std::vector<std::vector<std::string>>& topics, const CoherenceConfig& cfg,
                                 std::size_t workers = 1)
{
  cfg.validate();
  TrackedWords tracked;
  tracked.add_topics(topics);
  auto stats = window_counts(reference, tracked.words, cfg.window_size, tracked.pairs, workers);
  return cv_coherence(topics, stats, cfg);
}

inline nlohmann::json to_json(const CoherenceResult& r)
{
  nlohmann::json j;
  j["per_topic"] = r.per_topic;
  j["mean"] = r.mean;
  j["dropped"] = r.dropped;
  j["flagged"] = r.flagged;
  j["config"] = {{"window_size", r.config.window_size},
                 {"top_k", r.config.top_k},
                 {"gamma", r.config.gamma},
                 {"epsilon", r.config.epsilon}};
  return j;
}

} // namespace topicattn
