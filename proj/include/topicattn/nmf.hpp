#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "topicattn/corpus.hpp"
#include "topicattn/detail/matrix.hpp"
#include "topicattn/detail/random.hpp"
#include "topicattn/error.hpp"
#include "topicattn/topic_model.hpp"

namespace topicattn {

enum class NmfWeighting { counts, tfidf };

inline NmfWeighting parse_nmf_weighting(std::string_view s)
{
  if (s == "counts")
    return NmfWeighting::counts;
  if (s == "tfidf")
    return NmfWeighting::tfidf;
  throw ConfigError("unknown nmf weighting '" + std::string(s) + "' (expected counts or tfidf)");
}

struct NmfConfig {
  std::size_t n_topics = 20;
  std::size_t n_iterations = 500;
  std::uint64_t seed = 1;
  NmfWeighting weighting = NmfWeighting::tfidf;
  double tol = 1e-4;

  void validate() const
  {
    if (n_topics < 1)
      throw ConfigError("nmf: K must be >= 1");
    if (!(tol > 0.0))
      throw ConfigError("nmf: tol must be positive");
  }
};

inline SparseRowMatrix count_matrix(const DocTermMatrix& dtm)
{
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(dtm.entries.size());
  for (const auto& e : dtm.entries)
    triplets.emplace_back(static_cast<int>(e.doc), static_cast<int>(e.word), static_cast<double>(e.count));
  SparseRowMatrix x(static_cast<Eigen::Index>(dtm.n_docs), static_cast<Eigen::Index>(dtm.n_words));
  x.setFromTriplets(triplets.begin(), triplets.end());
  return x;
}

/// count(d,w) * ln(n_docs / df(w)) with df taken from the matrix itself.
/// Words present in every document keep explicit zero entries.
inline SparseRowMatrix tfidf(const DocTermMatrix& dtm)
{
  if (dtm.n_docs == 0 || dtm.empty())
    throw InputError("tfidf: empty document-term matrix");
  std::vector<std::size_t> df(dtm.n_words, 0);
  for (const auto& e : dtm.entries)
    ++df[e.word];
  std::vector<double> idf(dtm.n_words, 0.0);
  for (std::size_t w = 0; w < dtm.n_words; ++w)
    if (df[w] > 0)
      idf[w] = std::log(static_cast<double>(dtm.n_docs) / static_cast<double>(df[w]));

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(dtm.entries.size());
  for (const auto& e : dtm.entries)
    triplets.emplace_back(static_cast<int>(e.doc), static_cast<int>(e.word), e.count * idf[e.word]);
  SparseRowMatrix x(static_cast<Eigen::Index>(dtm.n_docs), static_cast<Eigen::Index>(dtm.n_words));
  x.setFromTriplets(triplets.begin(), triplets.end());
  return x;
}

namespace detail {

// ||X - WH||_F^2 = sum_nz (x^2 - 2 x (WH)_ij) + tr((W'W)(HH')), which never
// forms the dense product.
inline double nmf_objective(const SparseRowMatrix& x, const RowMatrix& w, const RowMatrix& h)
{
  double sparse_part = 0.0;
  for (Eigen::Index r = 0; r < x.outerSize(); ++r)
    for (SparseRowMatrix::InnerIterator it(x, r); it; ++it) {
      const double approx = w.row(r).dot(h.col(it.col()));
      sparse_part += it.value() * (it.value() - 2.0 * approx);
    }
  const RowMatrix wtw = w.transpose() * w;
  const RowMatrix hht = h * h.transpose();
  return std::max(0.0, sparse_part + wtw.cwiseProduct(hht).sum());
}

} // namespace detail

struct NmfFactors {
  RowMatrix w; // n_docs x K
  RowMatrix h; // K x |V|
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

/// Lee-Seung multiplicative updates for min ||X - WH||_F^2 over W, H >= 0.
/// Stops after n_iterations or when the relative objective change drops below tol.
inline NmfFactors nmf_factorize(const SparseRowMatrix& x, std::size_t n_topics, std::size_t n_iterations, double tol,
                                std::uint64_t seed)
{
  const auto rows = x.rows();
  const auto cols = x.cols();
  const auto k = static_cast<Eigen::Index>(n_topics);
  if (rows == 0 || cols == 0 || x.nonZeros() == 0)
    throw InputError("nmf: empty input matrix");
  if (k < 1 || k > std::min(rows, cols))
    throw InputError("nmf: K=" + std::to_string(n_topics) + " outside [1, min(n_docs, |V|)]");
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.nonZeros(); ++i) {
    const double v = x.valuePtr()[i];
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InputError("nmf: input must be finite and nonnegative");
    total += v;
  }

  const double scale = total / (static_cast<double>(rows) * static_cast<double>(cols)) / static_cast<double>(n_topics);
  detail::Rng rng(seed);
  NmfFactors f;
  f.w.resize(rows, k);
  f.h.resize(k, cols);
  for (Eigen::Index i = 0; i < f.w.size(); ++i)
    f.w.data()[i] = rng.uniform_open() * scale;
  for (Eigen::Index i = 0; i < f.h.size(); ++i)
    f.h.data()[i] = rng.uniform_open() * scale;

  // Guards 0/0 only; small enough not to bias any representable update.
  constexpr double tiny = std::numeric_limits<double>::min();
  const SparseRowMatrix xt = x.transpose();

  double previous = detail::nmf_objective(x, f.w, f.h);
  f.objective_trace.push_back(previous);
  for (std::size_t it = 0; it < n_iterations; ++it) {
    {
      const RowMatrix numer = (xt * f.w).transpose(); // W'X
      const RowMatrix denom = (f.w.transpose() * f.w) * f.h;
      f.h = f.h.cwiseProduct(numer.cwiseQuotient(denom.array().max(tiny).matrix()));
    }
    {
      const RowMatrix numer = x * f.h.transpose(); // XH'
      const RowMatrix denom = f.w * (f.h * f.h.transpose());
      f.w = f.w.cwiseProduct(numer.cwiseQuotient(denom.array().max(tiny).matrix()));
    }
    const double current = detail::nmf_objective(x, f.w, f.h);
    if (!std::isfinite(current))
      throw NumericError("nmf: objective became non-finite");
    f.objective_trace.push_back(current);
    f.iterations = it + 1;
    if (previous <= 0.0 || (previous - current) / previous < tol)
      break;
    previous = current;
  }
  return f;
}

inline TopicModel nmf_train(const DocTermMatrix& dtm, const NmfConfig& cfg)
{
  cfg.validate();
  if (dtm.n_docs == 0 || dtm.empty())
    throw InputError("nmf: empty document-term matrix");
  const SparseRowMatrix x = cfg.weighting == NmfWeighting::tfidf ? tfidf(dtm) : count_matrix(dtm);
  NmfFactors f = nmf_factorize(x, cfg.n_topics, cfg.n_iterations, cfg.tol, cfg.seed);

  TopicModel model;
  model.kind = TopicModelKind::nmf;
  model.topic_word = std::move(f.h);
  model.doc_topic = std::move(f.w);
  model.train_meta.seed = cfg.seed;
  model.train_meta.iterations = f.iterations;
  model.train_meta.objective_trace = std::move(f.objective_trace);
  model.train_meta.hyperparameters = {{"K", cfg.n_topics},
                                      {"max_iterations", cfg.n_iterations},
                                      {"tol", cfg.tol},
                                      {"weighting", cfg.weighting == NmfWeighting::tfidf ? "tfidf" : "counts"}};
  return model;
}

} // namespace topicattn
