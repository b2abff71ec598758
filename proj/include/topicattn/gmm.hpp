#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "topicattn/corpus.hpp"
#include "topicattn/detail/binary_io.hpp"
#include "topicattn/detail/matrix.hpp"
#include "topicattn/detail/random.hpp"
#include "topicattn/error.hpp"
#include "topicattn/word_vectors.hpp"

namespace topicattn {

struct GmmConfig {
  std::size_t n_components = 2;
  std::uint64_t seed = 1;
  std::size_t max_iter = 200;
  double tol = 1e-4;
  double variance_floor = 1e-6;
};

struct GmmFitMeta {
  std::uint64_t seed = 0;
  std::size_t iterations_run = 0; // M-steps performed
  double final_loglik = 0.0;
  std::vector<double> loglik_trace; // one entry per E-step
  bool converged = false;
  Eigen::RowVectorXd center; // per-dimension standardization
  Eigen::RowVectorXd scale;
};

/// Diagonal-covariance mixture. means and variances live in standardized
/// feature space; original_means()/original_variances() undo the scaling.
struct GmmModel {
  RowMatrix means;     // K x D
  RowMatrix variances; // K x D, each >= variance floor
  Eigen::VectorXd weights;
  GmmFitMeta fit_meta;

  std::size_t n_components() const { return static_cast<std::size_t>(means.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }

  RowMatrix original_means() const
  {
    RowMatrix m = means;
    for (Eigen::Index k = 0; k < m.rows(); ++k)
      m.row(k) = m.row(k).cwiseProduct(fit_meta.scale) + fit_meta.center;
    return m;
  }

  RowMatrix original_variances() const
  {
    RowMatrix v = variances;
    for (Eigen::Index k = 0; k < v.rows(); ++k)
      v.row(k) = v.row(k).cwiseProduct(fit_meta.scale.cwiseAbs2());
    return v;
  }
};

struct SoftClustering {
  RowMatrix responsibilities; // N x K
  std::vector<std::string> words;
  std::size_t layer = 0;

  std::size_t n_clusters() const { return static_cast<std::size_t>(responsibilities.cols()); }
};

struct GmmResult {
  GmmModel model;
  RowMatrix responsibilities; // N x K, input row order
};

struct HardClustering {
  std::vector<std::size_t> assignments; // input row order
  RowMatrix centroids;                  // K x D, original feature space
  std::size_t iterations = 0;
};

namespace detail {

inline void check_features(const RowMatrix& x, std::size_t k)
{
  if (x.cols() < 1)
    throw InputError("clustering: features need at least one dimension");
  if (k < 1 || static_cast<std::size_t>(x.rows()) < k)
    throw InputError("clustering: need N >= K >= 1 (N=" + std::to_string(x.rows()) + ", K=" + std::to_string(k) + ")");
  if (!x.allFinite())
    throw NumericError("clustering: non-finite feature value");
}

// Rows in lexicographic value order (ties by input index). Fitting in this
// order makes results independent of how the caller ordered duplicate-free rows.
inline std::vector<Eigen::Index> canonical_order(const RowMatrix& x)
{
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::lexicographical_compare(x.row(a).begin(), x.row(a).end(), x.row(b).begin(), x.row(b).end());
  });
  return order;
}

struct Standardized {
  RowMatrix z; // canonical row order
  Eigen::RowVectorXd center, scale;
  std::vector<Eigen::Index> order;
};

// Zero mean and unit variance per dimension; constant dimensions are only centered.
inline Standardized standardize(const RowMatrix& x)
{
  Standardized s;
  s.order = canonical_order(x);
  const auto n = x.rows();
  const auto d = x.cols();
  s.z.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    s.z.row(i) = x.row(s.order[static_cast<std::size_t>(i)]);
  s.center = s.z.colwise().sum() / static_cast<double>(n);
  s.z.rowwise() -= s.center;
  s.scale = (s.z.cwiseAbs2().colwise().sum() / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index j = 0; j < d; ++j)
    if (!(s.scale(j) > 0.0))
      s.scale(j) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i)
    s.z.row(i) = s.z.row(i).cwiseQuotient(s.scale);
  return s;
}

/// k-means++ seeding: first center uniform, later ones with probability
/// proportional to squared distance from the nearest chosen center.
inline RowMatrix kmeans_plus_plus(const RowMatrix& z, std::size_t k, Rng& rng)
{
  const auto n = static_cast<std::size_t>(z.rows());
  RowMatrix centers(static_cast<Eigen::Index>(k), z.cols());
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        total += nearest[i];
      if (total > 0.0) {
        const double u = rng.uniform() * total;
        double acc = 0.0;
        pick = n;
        for (std::size_t i = 0; i < n; ++i) {
          acc += nearest[i];
          if (nearest[i] > 0.0 && acc > u) {
            pick = i;
            break;
          }
        }
        if (pick == n) // rounding pushed u past the last positive weight
          for (std::size_t i = n; i-- > 0;)
            if (nearest[i] > 0.0) {
              pick = i;
              break;
            }
      } else {
        // Every point coincides with a center: take a uniformly random unused row.
        std::vector<std::size_t> unused;
        for (std::size_t i = 0; i < n; ++i)
          if (!chosen[i])
            unused.push_back(i);
        pick = unused[rng.below(unused.size())];
      }
    }
    chosen[pick] = true;
    centers.row(static_cast<Eigen::Index>(c)) = z.row(static_cast<Eigen::Index>(pick));
    for (std::size_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], (z.row(static_cast<Eigen::Index>(i)) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
  }
  return centers;
}

inline RowMatrix to_input_order(const RowMatrix& canonical, const std::vector<Eigen::Index>& order)
{
  RowMatrix out(canonical.rows(), canonical.cols());
  for (std::size_t i = 0; i < order.size(); ++i)
    out.row(order[i]) = canonical.row(static_cast<Eigen::Index>(i));
  return out;
}

} // namespace detail

/// Fits a diagonal GMM by EM on standardized features. Responsibilities are
/// computed in the log domain; iteration stops when the relative change in
/// log-likelihood falls below tol or after max_iter M-steps. The returned
/// responsibilities come from a final E-step under the returned parameters.
inline GmmResult gmm_fit(const RowMatrix& x, const GmmConfig& cfg)
{
  const std::size_t k = cfg.n_components;
  detail::check_features(x, k);
  if (!(cfg.tol > 0.0) || !(cfg.variance_floor > 0.0))
    throw ConfigError("gmm: tol and variance floor must be positive");

  auto std_x = detail::standardize(x);
  const RowMatrix& z = std_x.z;
  const auto n = z.rows();
  const auto d = z.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  constexpr double log_2pi = 1.8378770664093454835606594728112;

  detail::Rng rng(cfg.seed);
  GmmModel model;
  model.means = detail::kmeans_plus_plus(z, k, rng);
  const Eigen::RowVectorXd global_var = z.cwiseAbs2().colwise().sum() / static_cast<double>(n);
  model.variances.resize(kk, d);
  for (Eigen::Index c = 0; c < kk; ++c)
    model.variances.row(c) = global_var.cwiseMax(cfg.variance_floor);
  model.weights = Eigen::VectorXd::Constant(kk, 1.0 / static_cast<double>(k));

  // Squared Mahalanobis distances expand into two products:
  // sum_d z^2/var - 2 z mu/var + mu^2/var.
  const RowMatrix z_sq = z.cwiseAbs2();
  RowMatrix resp(n, kk);
  RowMatrix log_prob(n, kk);
  auto e_step = [&] {
    const RowMatrix precision = model.variances.cwiseInverse();
    const RowMatrix scaled_means = model.means.cwiseProduct(precision);
    Eigen::RowVectorXd offset(kk);
    for (Eigen::Index c = 0; c < kk; ++c)
      offset(c) = std::log(model.weights(c)) -
                  0.5 * (static_cast<double>(d) * log_2pi + model.variances.row(c).array().log().sum() +
                         model.means.row(c).dot(scaled_means.row(c)));
    log_prob.noalias() = z_sq * precision.transpose();
    log_prob.noalias() -= 2.0 * z * scaled_means.transpose();
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < kk; ++c) {
        const double lp = offset(c) - 0.5 * log_prob(i, c);
        log_prob(i, c) = lp;
        best = std::max(best, lp);
      }
      double sum = 0.0;
      for (Eigen::Index c = 0; c < kk; ++c)
        sum += std::exp(log_prob(i, c) - best);
      const double lse = best + std::log(sum);
      for (Eigen::Index c = 0; c < kk; ++c)
        resp(i, c) = std::exp(log_prob(i, c) - lse);
      ll += lse;
    }
    if (!std::isfinite(ll))
      throw NumericError("gmm: log-likelihood became non-finite");
    return ll;
  };

  auto m_step = [&] {
    const Eigen::RowVectorXd nk = resp.colwise().sum();
    const RowMatrix first = resp.transpose() * z;
    const RowMatrix second = resp.transpose() * z_sq;
    for (Eigen::Index c = 0; c < kk; ++c) {
      model.weights(c) = nk(c) / static_cast<double>(n);
      if (!(nk(c) > 0.0))
        continue; // an emptied component keeps its parameters at zero weight
      const Eigen::RowVectorXd mean = first.row(c) / nk(c);
      const Eigen::RowVectorXd var = second.row(c) / nk(c) - mean.cwiseAbs2();
      model.means.row(c) = mean;
      model.variances.row(c) = var.cwiseMax(cfg.variance_floor);
    }
  };

  auto& meta = model.fit_meta;
  meta.seed = cfg.seed;
  for (std::size_t iter = 0;; ++iter) {
    const double ll = e_step();
    if (!meta.loglik_trace.empty()) {
      const double prev = meta.loglik_trace.back();
      meta.loglik_trace.push_back(ll);
      if (std::abs(ll - prev) <= cfg.tol * std::abs(prev)) {
        meta.converged = true;
        break;
      }
    } else {
      meta.loglik_trace.push_back(ll);
    }
    if (iter == cfg.max_iter)
      break;
    m_step();
    meta.iterations_run = iter + 1;
  }
  meta.final_loglik = meta.loglik_trace.back();
  meta.center = std_x.center;
  meta.scale = std_x.scale;
  return {std::move(model), detail::to_input_order(resp, std_x.order)};
}

inline SoftClustering gmm_cluster(const WordAttentionMatrix& features, const GmmConfig& cfg, GmmModel* model_out = nullptr)
{
  auto fit = gmm_fit(features.vectors, cfg);
  if (model_out)
    *model_out = std::move(fit.model);
  return {std::move(fit.responsibilities), features.vocab_words, features.layer};
}

/// Lloyd iterations from k-means++ seeds on the same standardized features as
/// gmm_fit. Ties go to the lowest-index centroid; an emptied centroid stays put.
inline HardClustering kmeans_baseline(const RowMatrix& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 300)
{
  detail::check_features(x, k);
  auto std_x = detail::standardize(x);
  const RowMatrix& z = std_x.z;
  const auto n = z.rows();
  detail::Rng rng(seed);
  RowMatrix centers = detail::kmeans_plus_plus(z, k, rng);

  std::vector<std::size_t> assign(static_cast<std::size_t>(n), k);
  HardClustering out;
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = (z.row(i) - centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      changed |= assign[static_cast<std::size_t>(i)] != best;
      assign[static_cast<std::size_t>(i)] = best;
    }
    out.iterations = iter + 1;
    if (!changed)
      break;
    RowMatrix sums = RowMatrix::Zero(static_cast<Eigen::Index>(k), z.cols());
    std::vector<std::size_t> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(static_cast<Eigen::Index>(assign[static_cast<std::size_t>(i)])) += z.row(i);
      ++counts[assign[static_cast<std::size_t>(i)]];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
  }

  out.assignments.resize(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < std_x.order.size(); ++i)
    out.assignments[static_cast<std::size_t>(std_x.order[i])] = assign[i];
  out.centroids = centers;
  for (Eigen::Index c = 0; c < out.centroids.rows(); ++c)
    out.centroids.row(c) = out.centroids.row(c).cwiseProduct(std_x.scale) + std_x.center;
  return out;
}

/// Hard clustering as one-hot responsibilities, so it ranks like a GMM result.
inline SoftClustering one_hot(const HardClustering& h, std::size_t k, std::vector<std::string> words, std::size_t layer)
{
  SoftClustering s{RowMatrix::Zero(static_cast<Eigen::Index>(h.assignments.size()), static_cast<Eigen::Index>(k)),
                   std::move(words), layer};
  for (std::size_t i = 0; i < h.assignments.size(); ++i)
    s.responsibilities(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(h.assignments[i])) = 1.0;
  return s;
}

/// The k words with the largest responsibility for a cluster; ties by
/// coll_freq (0 for words outside the vocabulary) then lexicographic.
inline std::vector<std::string> cluster_top_words(const SoftClustering& clustering, std::size_t cluster, std::size_t k,
                                                  const Vocabulary& vocab)
{
  if (cluster >= clustering.n_clusters())
    throw InputError("cluster index " + std::to_string(cluster) + " out of range (K=" +
                     std::to_string(clustering.n_clusters()) + ")");
  const auto col = clustering.responsibilities.col(static_cast<Eigen::Index>(cluster));
  auto freq = [&](std::size_t i) -> std::size_t {
    auto id = vocab.find(clustering.words[i]);
    return id ? vocab.coll_freq[*id] : 0;
  };
  std::vector<std::size_t> idx(clustering.words.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
    const double ra = col(static_cast<Eigen::Index>(a)), rb = col(static_cast<Eigen::Index>(b));
    if (ra != rb)
      return ra > rb;
    const auto fa = freq(a), fb = freq(b);
    if (fa != fb)
      return fa > fb;
    return clustering.words[a] < clustering.words[b];
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i)
    out.push_back(clustering.words[idx[i]]);
  return out;
}

inline std::vector<std::vector<std::string>> all_cluster_top_words(const SoftClustering& clustering, std::size_t k,
                                                                   const Vocabulary& vocab)
{
  std::vector<std::vector<std::string>> out;
  for (std::size_t c = 0; c < clustering.n_clusters(); ++c)
    out.push_back(cluster_top_words(clustering, c, k, vocab));
  return out;
}

// Layout mirrors the topic-model format: manifest.json plus float64-LE blobs.
inline void save_gmm(const std::filesystem::path& dir, const GmmModel& m)
{
  std::filesystem::create_directories(dir);
  auto blob = [&](const std::string& name, const double* data, Eigen::Index size) {
    detail::write_f64_blob(dir / name, {data, static_cast<std::size_t>(size)});
    return name;
  };
  nlohmann::json j;
  j["n_components"] = m.n_components();
  j["dim"] = m.dim();
  j["covariance"] = "diagonal";
  j["seed"] = m.fit_meta.seed;
  j["iterations_run"] = m.fit_meta.iterations_run;
  j["final_loglik"] = m.fit_meta.final_loglik;
  j["converged"] = m.fit_meta.converged;
  j["loglik_trace"] = m.fit_meta.loglik_trace;
  j["dtype"] = "float64-le";
  j["means_file"] = blob("means.f64", m.means.data(), m.means.size());
  j["variances_file"] = blob("variances.f64", m.variances.data(), m.variances.size());
  j["weights_file"] = blob("weights.f64", m.weights.data(), m.weights.size());
  j["center_file"] = blob("center.f64", m.fit_meta.center.data(), m.fit_meta.center.size());
  j["scale_file"] = blob("scale.f64", m.fit_meta.scale.data(), m.fit_meta.scale.size());
  detail::write_file_bytes(dir / "manifest.json", j.dump(2) + "\n");
}

inline GmmModel load_gmm(const std::filesystem::path& dir)
{
  GmmModel m;
  try {
    auto j = nlohmann::json::parse(detail::read_text_file(dir / "manifest.json"));
    const auto k = j.at("n_components").get<Eigen::Index>();
    const auto d = j.at("dim").get<Eigen::Index>();
    auto read = [&](const char* key, Eigen::Index size) {
      return detail::read_f64_blob(dir / j.at(key).get<std::string>(), static_cast<std::size_t>(size));
    };
    auto means = read("means_file", k * d);
    auto vars = read("variances_file", k * d);
    auto weights = read("weights_file", k);
    auto center = read("center_file", d);
    auto scale = read("scale_file", d);
    m.means = Eigen::Map<RowMatrix>(means.data(), k, d);
    m.variances = Eigen::Map<RowMatrix>(vars.data(), k, d);
    m.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), k);
    m.fit_meta.center = Eigen::Map<Eigen::RowVectorXd>(center.data(), d);
    m.fit_meta.scale = Eigen::Map<Eigen::RowVectorXd>(scale.data(), d);
    m.fit_meta.seed = j.at("seed").get<std::uint64_t>();
    m.fit_meta.iterations_run = j.at("iterations_run").get<std::size_t>();
    m.fit_meta.final_loglik = j.at("final_loglik").get<double>();
    m.fit_meta.converged = j.value("converged", false);
    m.fit_meta.loglik_trace = j.value("loglik_trace", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "manifest.json").string() + ": " + e.what());
  }
  return m;
}

inline void save_soft_clustering(const std::filesystem::path& dir, const SoftClustering& s)
{
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["layer"] = s.layer;
  j["words"] = s.words;
  j["rows"] = s.responsibilities.rows();
  j["cols"] = s.responsibilities.cols();
  j["dtype"] = "float64-le";
  j["responsibilities_file"] = "responsibilities.f64";
  detail::write_f64_blob(dir / "responsibilities.f64",
                         {s.responsibilities.data(), static_cast<std::size_t>(s.responsibilities.size())});
  detail::write_file_bytes(dir / "clustering.json", j.dump(1) + "\n");
}

inline SoftClustering load_soft_clustering(const std::filesystem::path& dir)
{
  SoftClustering s;
  try {
    auto j = nlohmann::json::parse(detail::read_text_file(dir / "clustering.json"));
    s.layer = j.at("layer").get<std::size_t>();
    s.words = j.at("words").get<std::vector<std::string>>();
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    auto data = detail::read_f64_blob(dir / j.at("responsibilities_file").get<std::string>(),
                                      static_cast<std::size_t>(rows * cols));
    s.responsibilities = Eigen::Map<RowMatrix>(data.data(), rows, cols);
  } catch (const nlohmann::json::exception& e) {
    throw InputError((dir / "clustering.json").string() + ": " + e.what());
  }
  return s;
}

} // namespace topicattn
