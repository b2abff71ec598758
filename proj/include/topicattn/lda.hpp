#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "topicattn/corpus.hpp"
#include "topicattn/detail/random.hpp"
#include "topicattn/error.hpp"
#include "topicattn/topic_model.hpp"

namespace topicattn {

struct LdaConfig {
  std::size_t n_topics = 20;
  std::optional<double> alpha; // unset: 50 / K
  double beta = 0.01;
  std::size_t n_iterations = 1000;
  std::size_t burn_in = 800;
  std::size_t sample_lag = 10;
  std::uint64_t seed = 1;

  double resolved_alpha() const { return alpha ? *alpha : 50.0 / static_cast<double>(n_topics); }

  void validate() const
  {
    if (n_topics < 1)
      throw ConfigError("lda: K must be >= 1");
    if (!(resolved_alpha() > 0.0) || !(beta > 0.0))
      throw ConfigError("lda: alpha and beta must be positive");
    if (n_iterations < 1 || burn_in >= n_iterations)
      throw ConfigError("lda: burn_in must be smaller than n_iterations");
    if (sample_lag < 1)
      throw ConfigError("lda: sample_lag must be >= 1");
  }
};

/// Collapsed Gibbs sampler over token-topic assignments.
///
/// Tokens are laid out document by document; each document's tokens are the
/// expansion of its doc-term row, so word order inside a document is by id.
/// Topic-word counts are stored word-major so the per-token conditional
/// reads one contiguous K-vector.
class GibbsSampler {
public:
  GibbsSampler(const DocTermMatrix& dtm, std::size_t n_topics, double alpha, double beta, std::uint64_t seed)
      : n_docs_(dtm.n_docs), n_words_(dtm.n_words), n_topics_(n_topics), alpha_(alpha), beta_(beta), rng_(seed),
        doc_offsets_(dtm.n_docs + 1, 0), doc_topic_(dtm.n_docs * n_topics, 0), word_topic_(dtm.n_words * n_topics, 0),
        topic_total_(n_topics, 0), cumulative_(n_topics)
  {
    for (std::size_t d = 0; d < n_docs_; ++d) {
      for (const auto& e : dtm.row(d))
        words_.insert(words_.end(), e.count, static_cast<std::uint32_t>(e.word));
      doc_offsets_[d + 1] = words_.size();
    }
    topics_.resize(words_.size());
    for (std::size_t d = 0; d < n_docs_; ++d)
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        const auto t = static_cast<std::uint32_t>(rng_.below(n_topics_));
        topics_[i] = t;
        add(d, words_[i], t, +1);
      }
  }

  void sweep()
  {
    const double v_beta = static_cast<double>(n_words_) * beta_;
    for (std::size_t d = 0; d < n_docs_; ++d) {
      std::uint32_t* nd = doc_topic_.data() + d * n_topics_;
      for (std::size_t i = doc_offsets_[d]; i < doc_offsets_[d + 1]; ++i) {
        const std::uint32_t w = words_[i];
        std::uint32_t* nw = word_topic_.data() + static_cast<std::size_t>(w) * n_topics_;
        const std::uint32_t old = topics_[i];
        --nd[old];
        --nw[old];
        --topic_total_[old];

        double total = 0.0;
        for (std::size_t k = 0; k < n_topics_; ++k) {
          total += (nd[k] + alpha_) * (nw[k] + beta_) / (topic_total_[k] + v_beta);
          cumulative_[k] = total;
        }
        const double u = rng_.uniform() * total;
        std::size_t t = 0;
        while (t + 1 < n_topics_ && cumulative_[t] <= u)
          ++t;

        topics_[i] = static_cast<std::uint32_t>(t);
        ++nd[t];
        ++nw[t];
        ++topic_total_[t];
      }
    }
  }

  std::size_t n_docs() const { return n_docs_; }
  std::size_t n_words() const { return n_words_; }
  std::size_t n_topics() const { return n_topics_; }
  std::size_t n_tokens() const { return words_.size(); }
  std::size_t doc_length(std::size_t d) const { return doc_offsets_[d + 1] - doc_offsets_[d]; }

  std::uint32_t doc_topic_count(std::size_t d, std::size_t k) const { return doc_topic_[d * n_topics_ + k]; }
  std::uint32_t topic_word_count(std::size_t k, std::size_t w) const { return word_topic_[w * n_topics_ + k]; }
  std::uint64_t topic_total(std::size_t k) const { return topic_total_[k]; }
  std::span<const std::uint32_t> assignments() const { return topics_; }
  std::span<const std::uint32_t> token_words() const { return words_; }
  std::size_t doc_offset(std::size_t d) const { return doc_offsets_[d]; }

  /// Adds the current point estimates of phi and theta into the accumulators.
  void accumulate(RowMatrix& phi, RowMatrix& theta) const
  {
    const double v_beta = static_cast<double>(n_words_) * beta_;
    const double k_alpha = static_cast<double>(n_topics_) * alpha_;
    for (std::size_t k = 0; k < n_topics_; ++k) {
      const double denom = static_cast<double>(topic_total_[k]) + v_beta;
      for (std::size_t w = 0; w < n_words_; ++w)
        phi(k, w) += (word_topic_[w * n_topics_ + k] + beta_) / denom;
    }
    for (std::size_t d = 0; d < n_docs_; ++d) {
      const double denom = static_cast<double>(doc_length(d)) + k_alpha;
      for (std::size_t k = 0; k < n_topics_; ++k)
        theta(d, k) += (doc_topic_[d * n_topics_ + k] + alpha_) / denom;
    }
  }

private:
  void add(std::size_t d, std::uint32_t w, std::uint32_t t, int delta)
  {
    doc_topic_[d * n_topics_ + t] += delta;
    word_topic_[static_cast<std::size_t>(w) * n_topics_ + t] += delta;
    topic_total_[t] += delta;
  }

  std::size_t n_docs_, n_words_, n_topics_;
  double alpha_, beta_;
  detail::Rng rng_;
  std::vector<std::uint32_t> words_;
  std::vector<std::uint32_t> topics_;
  std::vector<std::size_t> doc_offsets_;
  std::vector<std::uint32_t> doc_topic_;
  std::vector<std::uint32_t> word_topic_;
  std::vector<std::uint64_t> topic_total_;
  std::vector<double> cumulative_;
};

namespace detail {

inline void normalize_rows(RowMatrix& m)
{
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double s = m.row(r).sum();
    if (s > 0.0)
      m.row(r) /= s;
  }
}

} // namespace detail

/// Fits LDA by collapsed Gibbs sampling. phi and theta are the means of the
/// per-sample estimates taken every sample_lag sweeps after burn-in (the final
/// sweep is used when that schedule yields no sample).
inline TopicModel lda_train(const DocTermMatrix& dtm, const LdaConfig& cfg)
{
  cfg.validate();
  if (dtm.n_docs == 0 || dtm.n_words == 0 || dtm.empty())
    throw InputError("lda: empty document-term matrix");
  if (cfg.n_topics > dtm.n_words)
    throw InputError("lda: K=" + std::to_string(cfg.n_topics) + " exceeds vocabulary size " +
                     std::to_string(dtm.n_words));

  const double alpha = cfg.resolved_alpha();
  GibbsSampler sampler(dtm, cfg.n_topics, alpha, cfg.beta, cfg.seed);
  RowMatrix phi = RowMatrix::Zero(static_cast<Eigen::Index>(cfg.n_topics), static_cast<Eigen::Index>(dtm.n_words));
  RowMatrix theta = RowMatrix::Zero(static_cast<Eigen::Index>(dtm.n_docs), static_cast<Eigen::Index>(cfg.n_topics));
  std::size_t samples = 0;
  for (std::size_t sweep = 1; sweep <= cfg.n_iterations; ++sweep) {
    sampler.sweep();
    if (sweep > cfg.burn_in && (sweep - cfg.burn_in) % cfg.sample_lag == 0) {
      sampler.accumulate(phi, theta);
      ++samples;
    }
  }
  if (samples == 0)
    sampler.accumulate(phi, theta);

  // Renormalizing the averaged rows keeps the simplex exact to rounding.
  detail::normalize_rows(phi);
  detail::normalize_rows(theta);

  TopicModel model;
  model.kind = TopicModelKind::lda;
  model.topic_word = std::move(phi);
  model.doc_topic = std::move(theta);
  model.train_meta.seed = cfg.seed;
  model.train_meta.iterations = cfg.n_iterations;
  model.train_meta.hyperparameters = {{"K", cfg.n_topics},           {"alpha", alpha},
                                      {"beta", cfg.beta},            {"burn_in", cfg.burn_in},
                                      {"sample_lag", cfg.sample_lag}, {"samples", std::max<std::size_t>(samples, 1)}};
  return model;
}

/// Topic mixture of a short word-id sequence with the topic-word matrix held
/// fixed: Gibbs sampling of the sequence's assignments only, theta averaged
/// over the second half of the sweeps.
inline std::vector<double> infer_topic_mixture(const TopicModel& model, std::span<const std::size_t> word_ids,
                                               double alpha, std::size_t sweeps, std::uint64_t seed)
{
  const std::size_t n_topics = model.n_topics();
  std::vector<double> theta(n_topics, 0.0);
  if (word_ids.empty()) {
    std::fill(theta.begin(), theta.end(), 1.0 / static_cast<double>(n_topics));
    return theta;
  }
  detail::Rng rng(seed);
  std::vector<std::uint32_t> z(word_ids.size());
  std::vector<std::uint32_t> counts(n_topics, 0);
  for (auto& t : z) {
    t = static_cast<std::uint32_t>(rng.below(n_topics));
    ++counts[t];
  }
  std::vector<double> cumulative(n_topics);
  sweeps = std::max<std::size_t>(sweeps, 1);
  for (std::size_t s = 0; s < sweeps; ++s) {
    for (std::size_t i = 0; i < word_ids.size(); ++i) {
      --counts[z[i]];
      double total = 0.0;
      for (std::size_t k = 0; k < n_topics; ++k) {
        total += (counts[k] + alpha) * model.topic_word(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(word_ids[i]));
        cumulative[k] = total;
      }
      std::size_t t = 0;
      if (total > 0.0) {
        const double u = rng.uniform() * total;
        while (t + 1 < n_topics && cumulative[t] <= u)
          ++t;
      } else {
        t = rng.below(n_topics);
      }
      z[i] = static_cast<std::uint32_t>(t);
      ++counts[t];
    }
    if (s >= sweeps / 2) {
      for (std::size_t k = 0; k < n_topics; ++k)
        theta[k] += counts[k] + alpha;
    }
  }
  double sum = 0.0;
  for (double v : theta)
    sum += v;
  for (double& v : theta)
    v /= sum;
  return theta;
}

} // namespace topicattn
