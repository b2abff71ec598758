#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace topicattn::testing {

using Docs = std::vector<std::vector<std::string>>;

// Every window materialized as a word set, counted by direct membership tests.
struct EnumeratedWindows {
  std::vector<std::set<std::string>> windows;

  EnumeratedWindows(const Docs& docs, std::size_t size)
  {
    for (const auto& doc : docs) {
      if (doc.size() <= size) {
        windows.emplace_back(doc.begin(), doc.end());
        continue;
      }
      for (std::size_t s = 0; s + size <= doc.size(); ++s)
        windows.emplace_back(doc.begin() + static_cast<std::ptrdiff_t>(s),
                             doc.begin() + static_cast<std::ptrdiff_t>(s + size));
    }
  }

  std::size_t containing(const std::string& a) const
  {
    return static_cast<std::size_t>(std::count_if(windows.begin(), windows.end(), [&](const auto& w) { return w.count(a) > 0; }));
  }

  std::size_t containing(const std::string& a, const std::string& b) const
  {
    return static_cast<std::size_t>(
        std::count_if(windows.begin(), windows.end(), [&](const auto& w) { return w.count(a) > 0 && w.count(b) > 0; }));
  }

  double npmi(const std::string& a, const std::string& b, double eps) const
  {
    const double n = static_cast<double>(windows.size());
    const double pa = containing(a) / n, pb = containing(b) / n;
    if (pa == 0.0 || pb == 0.0)
      return 0.0;
    if (a == b)
      return 1.0;
    const double pab = containing(a, b) / n + eps;
    if (pab >= 1.0)
      return 1.0;
    return std::clamp(std::log(pab / (pa * pb)) / -std::log(pab), -1.0, 1.0);
  }

  double cv_topic(const std::vector<std::string>& topic, double eps, double gamma) const
  {
    std::vector<std::string> words;
    for (const auto& w : std::set<std::string>(topic.begin(), topic.end()))
      if (containing(w) > 0)
        words.push_back(w);
    if (words.size() < 2)
      return 0.0;
    const std::size_t m = words.size();
    std::vector<std::vector<double>> u(m, std::vector<double>(m));
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        const double x = npmi(words[i], words[j], eps);
        u[i][j] = std::copysign(std::pow(std::abs(x), gamma), x);
      }
    std::vector<double> total(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        total[j] += u[i][j];
    double score = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0, uu = 0, tt = 0;
      for (std::size_t j = 0; j < m; ++j) {
        dot += u[i][j] * total[j];
        uu += u[i][j] * u[i][j];
        tt += total[j] * total[j];
      }
      score += (uu == 0.0 || tt == 0.0) ? 0.0 : std::clamp(dot / std::sqrt(uu * tt), -1.0, 1.0);
    }
    return score / static_cast<double>(m);
  }
};

struct SmallCorpus {
  Docs docs;
  std::size_t window;
  std::vector<std::vector<std::string>> topics;
};

// Random corpora of at most 200 tokens over a skewed 12-word lexicon, with
// window sizes from 1 past the longest document.
inline std::vector<SmallCorpus> small_corpora(unsigned seed, std::size_t count)
{
  static const std::vector<std::string> lexicon{"ant", "bee", "cat", "dog", "eel", "fox",
                                                "gnu", "hen", "ibis", "jay", "kiwi", "lynx"};
  std::mt19937 gen(seed);
  std::vector<SmallCorpus> out;
  for (std::size_t c = 0; c < count; ++c) {
    SmallCorpus sc;
    const std::size_t n_docs = 1 + gen() % 6;
    std::size_t budget = 200;
    std::size_t longest = 0;
    for (std::size_t d = 0; d < n_docs && budget > 0; ++d) {
      const std::size_t len = std::min<std::size_t>(budget, gen() % 40);
      std::vector<std::string> doc;
      for (std::size_t i = 0; i < len; ++i) {
        // Squaring a uniform draw favours early lexicon entries.
        const double u = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
        doc.push_back(lexicon[static_cast<std::size_t>(u * u * static_cast<double>(lexicon.size()))]);
      }
      budget -= len;
      longest = std::max(longest, len);
      sc.docs.push_back(std::move(doc));
    }
    sc.window = 1 + gen() % (longest + 2);
    const std::size_t n_topics = 1 + gen() % 3;
    for (std::size_t t = 0; t < n_topics; ++t) {
      std::set<std::string> words;
      const std::size_t k = 2 + gen() % 6;
      while (words.size() < k)
        words.insert(lexicon[gen() % lexicon.size()]);
      std::vector<std::string> topic(words.begin(), words.end());
      std::shuffle(topic.begin(), topic.end(), gen);
      sc.topics.push_back(std::move(topic));
    }
    out.push_back(std::move(sc));
  }
  return out;
}

} // namespace topicattn::testing
