#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "blobs.hpp"
#include "test_support.hpp"
#include "topicattn/gmm.hpp"

using namespace topicattn;
using topicattn::testing::make_blobs;
using topicattn::testing::purity;
using topicattn::testing::TempDir;

namespace {

RowMatrix column(std::initializer_list<double> values)
{
  RowMatrix x(static_cast<Eigen::Index>(values.size()), 1);
  Eigen::Index i = 0;
  for (double v : values)
    x(i++, 0) = v;
  return x;
}

GmmConfig config(std::size_t k, std::uint64_t seed = 1)
{
  GmmConfig cfg;
  cfg.n_components = k;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::size_t> argmax_rows(const RowMatrix& r)
{
  std::vector<std::size_t> out;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    Eigen::Index best;
    r.row(i).maxCoeff(&best);
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

Vocabulary vocab_of(const std::vector<std::string>& words, const std::vector<std::size_t>& freq)
{
  Vocabulary v;
  for (std::size_t i = 0; i < words.size(); ++i) {
    v.word_to_id[words[i]] = i;
    v.id_to_word.push_back(words[i]);
    v.doc_freq.push_back(freq[i]);
    v.coll_freq.push_back(freq[i]);
  }
  return v;
}

void expect_valid_responsibilities(const RowMatrix& r)
{
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    EXPECT_NEAR(r.row(i).sum(), 1.0, 1e-9);
    EXPECT_GE(r.row(i).minCoeff(), 0.0);
    EXPECT_LE(r.row(i).maxCoeff(), 1.0);
  }
}

} // namespace

TEST(Gmm, SeparatesTwoPointPairs)
{
  auto fit = gmm_fit(column({0.0, 0.01, 100.0, 100.01}), config(2));
  auto means = fit.model.original_means();
  std::vector<double> m{means(0, 0), means(1, 0)};
  std::sort(m.begin(), m.end());
  EXPECT_NEAR(m[0], 0.005, 1e-3);
  EXPECT_NEAR(m[1], 100.005, 1e-3);
  const auto& r = fit.responsibilities;
  for (Eigen::Index i = 0; i < 4; ++i)
    EXPECT_NEAR(r.row(i).maxCoeff(), 1.0, 1e-6);
  EXPECT_EQ(argmax_rows(r)[0], argmax_rows(r)[1]);
  EXPECT_EQ(argmax_rows(r)[2], argmax_rows(r)[3]);
  EXPECT_NE(argmax_rows(r)[0], argmax_rows(r)[2]);
}

TEST(Gmm, SingleComponentIsSampleMoments)
{
  auto b = make_blobs(4, 30, 2, 3, 2.0);
  auto fit = gmm_fit(b.x, config(1));
  const Eigen::RowVectorXd mean = b.x.colwise().mean();
  const Eigen::RowVectorXd var = (b.x.rowwise() - mean).cwiseAbs2().colwise().mean();
  EXPECT_LT((fit.model.original_means().row(0) - mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((fit.model.original_variances().row(0) - var).cwiseAbs().maxCoeff(), 1e-9);
  for (Eigen::Index i = 0; i < fit.responsibilities.rows(); ++i)
    EXPECT_EQ(fit.responsibilities(i, 0), 1.0);
  EXPECT_DOUBLE_EQ(fit.model.weights(0), 1.0);
}

TEST(Gmm, LogLikelihoodNeverDecreases)
{
  for (unsigned seed = 1; seed <= 5; ++seed) {
    auto b = make_blobs(seed, 40, 3, 4, 1.5);
    auto cfg = config(4, seed);
    cfg.tol = 1e-10;
    auto fit = gmm_fit(b.x, cfg);
    const auto& trace = fit.model.fit_meta.loglik_trace;
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t i = 1; i < trace.size(); ++i)
      EXPECT_GE(trace[i], trace[i - 1] - 1e-8) << "seed " << seed << " step " << i;
    EXPECT_NEAR(fit.model.weights.sum(), 1.0, 1e-9);
    EXPECT_GE(fit.model.variances.minCoeff(), cfg.variance_floor);
    expect_valid_responsibilities(fit.responsibilities);
  }
}

TEST(Gmm, PermutingRowsPermutesResponsibilities)
{
  auto b = make_blobs(9, 25, 3, 2, 2.0);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(b.x.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::shuffle(perm.begin(), perm.end(), std::mt19937(17));
  RowMatrix shuffled(b.x.rows(), b.x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    shuffled.row(static_cast<Eigen::Index>(i)) = b.x.row(perm[i]);

  auto a = gmm_fit(b.x, config(3, 11));
  auto s = gmm_fit(shuffled, config(3, 11));
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (Eigen::Index c = 0; c < 3; ++c)
      EXPECT_EQ(s.responsibilities(static_cast<Eigen::Index>(i), c), a.responsibilities(perm[i], c));
  EXPECT_EQ(a.model.means, s.model.means);
}

TEST(Gmm, DeterministicForSeed)
{
  auto b = make_blobs(2, 30, 3, 5, 1.0);
  auto a = gmm_fit(b.x, config(3, 7));
  auto c = gmm_fit(b.x, config(3, 7));
  EXPECT_EQ(a.responsibilities, c.responsibilities);
  EXPECT_EQ(a.model.fit_meta.loglik_trace, c.model.fit_meta.loglik_trace);
}

TEST(Gmm, VarianceFloorHoldsOnCollapsedClusters)
{
  // Two exact duplicates and a constant dimension force zero-variance components.
  RowMatrix x(5, 2);
  x << 1, 3, 1, 3, 5, 3, 5, 3, 9, 3;
  auto fit = gmm_fit(x, config(3));
  EXPECT_GE(fit.model.variances.minCoeff(), 1e-6);
  EXPECT_TRUE(fit.model.means.allFinite());
  expect_valid_responsibilities(fit.responsibilities);
  EXPECT_EQ(fit.model.fit_meta.scale(1), 1.0);
}

TEST(Gmm, RespectsMaxIter)
{
  auto b = make_blobs(3, 30, 3, 2, 0.5);
  auto cfg = config(3);
  cfg.max_iter = 2;
  cfg.tol = 1e-15;
  auto fit = gmm_fit(b.x, cfg);
  EXPECT_EQ(fit.model.fit_meta.iterations_run, 2u);
  EXPECT_EQ(fit.model.fit_meta.loglik_trace.size(), 3u);
}

TEST(Gmm, RejectsBadInput)
{
  EXPECT_THROW(gmm_fit(column({1.0, 2.0}), config(3)), InputError);
  EXPECT_THROW(gmm_fit(column({1.0, std::nan("")}), config(1)), NumericError);
  EXPECT_THROW(gmm_fit(RowMatrix(3, 0), config(1)), InputError);
  EXPECT_THROW(gmm_fit(column({1.0, 2.0}), config(0)), InputError);
}

TEST(Gmm, SaveLoadRoundTrip)
{
  TempDir tmp;
  auto fit = gmm_fit(make_blobs(5, 20, 2, 3, 2.0).x, config(2));
  save_gmm(tmp / "gmm", fit.model);
  auto back = load_gmm(tmp / "gmm");
  EXPECT_EQ(back.means, fit.model.means);
  EXPECT_EQ(back.variances, fit.model.variances);
  EXPECT_EQ(back.weights, fit.model.weights);
  EXPECT_EQ(back.fit_meta.center, fit.model.fit_meta.center);
  EXPECT_EQ(back.fit_meta.scale, fit.model.fit_meta.scale);
  EXPECT_EQ(back.fit_meta.loglik_trace, fit.model.fit_meta.loglik_trace);

  SoftClustering s{fit.responsibilities, {}, 4};
  for (Eigen::Index i = 0; i < fit.responsibilities.rows(); ++i)
    s.words.push_back("w" + std::to_string(i));
  save_soft_clustering(tmp / "clu", s);
  auto s2 = load_soft_clustering(tmp / "clu");
  EXPECT_EQ(s2.responsibilities, s.responsibilities);
  EXPECT_EQ(s2.words, s.words);
  EXPECT_EQ(s2.layer, 4u);
}

TEST(Gmm, RecoversWellSeparatedBlobs)
{
  auto b = make_blobs(21, 50, 4, 6, 8.0);
  auto fit = gmm_fit(b.x, config(4, 3));
  EXPECT_GE(purity(argmax_rows(fit.responsibilities), b.labels, 4, 4), 0.98);
}

TEST(KMeans, ExactOnSeparatedBlobs)
{
  auto h = kmeans_baseline(column({0.0, 0.1, 0.2, 50.0, 50.1, 50.2}), 2, 1);
  EXPECT_EQ(h.assignments[0], h.assignments[1]);
  EXPECT_EQ(h.assignments[1], h.assignments[2]);
  EXPECT_EQ(h.assignments[3], h.assignments[5]);
  EXPECT_NE(h.assignments[0], h.assignments[3]);
}

TEST(KMeans, SingleCentroidIsMean)
{
  auto b = make_blobs(6, 10, 3, 4, 3.0);
  auto h = kmeans_baseline(b.x, 1, 1);
  EXPECT_LT((h.centroids.row(0) - b.x.colwise().mean()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(KMeans, PurityComparableToGmm)
{
  auto b = make_blobs(8, 40, 3, 4, 6.0);
  auto h = kmeans_baseline(b.x, 3, 2);
  auto g = gmm_fit(b.x, config(3, 2));
  const double pk = purity(h.assignments, b.labels, 3, 3);
  const double pg = purity(argmax_rows(g.responsibilities), b.labels, 3, 3);
  EXPECT_GE(pk, 0.95);
  EXPECT_GE(pg, 0.95);
  EXPECT_THROW(kmeans_baseline(b.x, 1000, 1), InputError);
}

TEST(ClusterTopWords, SortsByResponsibility)
{
  SoftClustering s{RowMatrix(3, 1), {"w0", "w1", "w2"}, 0};
  s.responsibilities << 0.9, 0.1, 0.8;
  auto v = vocab_of(s.words, {1, 1, 1});
  EXPECT_EQ(cluster_top_words(s, 0, 2, v), (std::vector<std::string>{"w0", "w2"}));
  EXPECT_THROW(cluster_top_words(s, 1, 2, v), InputError);
}

TEST(ClusterTopWords, TiesByFrequencyThenSpelling)
{
  SoftClustering s{RowMatrix(4, 1), {"delta", "alpha", "gamma", "beta"}, 0};
  s.responsibilities << 0.5, 0.5, 0.5, 0.5;
  auto v = vocab_of({"delta", "alpha", "gamma", "beta"}, {3, 1, 3, 1});
  EXPECT_EQ(cluster_top_words(s, 0, 4, v), (std::vector<std::string>{"delta", "gamma", "alpha", "beta"}));
}

TEST(ClusterTopWords, OneHotGivesMembers)
{
  HardClustering h;
  h.assignments = {1, 0, 1, 1, 0};
  auto s = one_hot(h, 2, {"a", "b", "c", "d", "e"}, 0);
  auto v = vocab_of(s.words, {5, 4, 3, 2, 1});
  EXPECT_EQ(cluster_top_words(s, 1, 3, v), (std::vector<std::string>{"a", "c", "d"}));
  EXPECT_EQ(cluster_top_words(s, 0, 2, v), (std::vector<std::string>{"b", "e"}));
}

TEST(ClusterTopWords, MatchesFullSortOnFixture)
{
  auto b = make_blobs(12, 30, 3, 3, 1.0);
  auto fit = gmm_fit(b.x, config(3, 5));
  std::vector<std::string> words;
  std::vector<std::size_t> freq;
  std::mt19937 gen(3);
  for (Eigen::Index i = 0; i < b.x.rows(); ++i) {
    words.push_back("w" + std::to_string(i));
    freq.push_back(gen() % 4);
  }
  auto v = vocab_of(words, freq);
  SoftClustering s{fit.responsibilities, words, 0};
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::size_t> idx(words.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t d) {
      const double ra = s.responsibilities(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
      const double rd = s.responsibilities(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(c));
      return std::make_tuple(-ra, -static_cast<long>(freq[a]), words[a]) <
             std::make_tuple(-rd, -static_cast<long>(freq[d]), words[d]);
    });
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < 20; ++i)
      expected.push_back(words[idx[i]]);
    EXPECT_EQ(cluster_top_words(s, c, 20, v), expected);
  }
}
