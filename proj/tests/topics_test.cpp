#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "planted.hpp"
#include "test_support.hpp"
#include "topicattn/lda.hpp"
#include "topicattn/nmf.hpp"

using namespace topicattn;
using topicattn::testing::make_planted_corpus;
using topicattn::testing::TempDir;

namespace {

LdaConfig quick_lda(std::size_t k, std::uint64_t seed)
{
  LdaConfig cfg;
  cfg.n_topics = k;
  cfg.n_iterations = 200;
  cfg.burn_in = 150;
  cfg.seed = seed;
  return cfg;
}

std::set<std::size_t> top_ids(const TopicModel& m, const Vocabulary& v, std::size_t topic, std::size_t k)
{
  std::set<std::size_t> ids;
  for (const auto& rw : top_words(m, v, topic, k))
    ids.insert(rw.id);
  return ids;
}

DocTermMatrix random_dtm(unsigned seed, std::size_t docs, std::size_t words, std::size_t len)
{
  std::mt19937 gen(seed);
  std::vector<std::vector<std::size_t>> ids(docs);
  for (auto& d : ids)
    for (std::size_t i = 0; i < len; ++i)
      d.push_back(gen() % words);
  return doc_term_matrix_from_ids(ids, words);
}

} // namespace

TEST(Lda, SingleWordCorpusGivesUnitTopic)
{
  auto dtm = doc_term_matrix_from_ids({{0, 0, 0}, {0, 0}}, 1);
  auto m = lda_train(dtm, quick_lda(1, 5));
  ASSERT_EQ(m.topic_word.rows(), 1);
  ASSERT_EQ(m.topic_word.cols(), 1);
  EXPECT_DOUBLE_EQ(m.topic_word(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(m.doc_topic(0, 0), 1.0);
}

TEST(Lda, RecoversPlantedTopics)
{
  for (unsigned seed : {1u, 2u, 3u}) {
    auto p = make_planted_corpus(seed);
    LdaConfig cfg;
    cfg.n_topics = 2;
    cfg.seed = seed;
    auto m = lda_train(p.dtm, cfg);
    for (std::size_t t = 0; t < 2; ++t) {
      auto ids = top_ids(m, p.vocab, t, 10);
      EXPECT_TRUE(ids == p.set_a || ids == p.set_b) << "seed " << seed << " topic " << t;
    }
  }
}

TEST(Lda, CountsConservedEverySweep)
{
  auto dtm = random_dtm(4, 15, 12, 9);
  GibbsSampler s(dtm, 4, 0.5, 0.1, 99);
  for (int sweep = 0; sweep < 20; ++sweep) {
    s.sweep();
    std::vector<std::uint64_t> by_topic(4, 0);
    for (std::size_t d = 0; d < s.n_docs(); ++d) {
      std::uint64_t sum = 0;
      for (std::size_t k = 0; k < 4; ++k)
        sum += s.doc_topic_count(d, k);
      EXPECT_EQ(sum, s.doc_length(d));
    }
    // Recount from the assignments themselves.
    std::vector<std::vector<std::uint32_t>> nkw(4, std::vector<std::uint32_t>(12, 0));
    for (std::size_t i = 0; i < s.n_tokens(); ++i) {
      ++by_topic[s.assignments()[i]];
      ++nkw[s.assignments()[i]][s.token_words()[i]];
    }
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_EQ(s.topic_total(k), by_topic[k]);
      std::uint64_t sum = 0;
      for (std::size_t w = 0; w < 12; ++w) {
        EXPECT_EQ(s.topic_word_count(k, w), nkw[k][w]);
        sum += s.topic_word_count(k, w);
      }
      EXPECT_EQ(sum, s.topic_total(k));
    }
  }
}

TEST(Lda, RowsAreDistributions)
{
  auto m = lda_train(random_dtm(8, 30, 40, 20), quick_lda(5, 3));
  for (Eigen::Index r = 0; r < m.topic_word.rows(); ++r)
    EXPECT_NEAR(m.topic_word.row(r).sum(), 1.0, 1e-9);
  for (Eigen::Index r = 0; r < m.doc_topic.rows(); ++r)
    EXPECT_NEAR(m.doc_topic.row(r).sum(), 1.0, 1e-9);
  EXPECT_GE(m.topic_word.minCoeff(), 0.0);
}

TEST(Lda, DeterministicForSeed)
{
  auto dtm = random_dtm(9, 20, 30, 15);
  auto a = lda_train(dtm, quick_lda(3, 42));
  auto b = lda_train(dtm, quick_lda(3, 42));
  auto c = lda_train(dtm, quick_lda(3, 43));
  EXPECT_TRUE(a.topic_word == b.topic_word);
  EXPECT_TRUE(a.doc_topic == b.doc_topic);
  EXPECT_FALSE(a.topic_word == c.topic_word);
}

TEST(Lda, RejectsBadInputs)
{
  auto dtm = random_dtm(1, 3, 4, 5);
  EXPECT_THROW(lda_train(dtm, quick_lda(5, 1)), InputError);
  DocTermMatrix empty;
  empty.row_offsets = {0};
  EXPECT_THROW(lda_train(empty, quick_lda(1, 1)), InputError);
  auto bad = quick_lda(2, 1);
  bad.burn_in = bad.n_iterations;
  EXPECT_THROW(lda_train(dtm, bad), ConfigError);
}

TEST(Lda, FoldInFindsPlantedTopic)
{
  auto p = make_planted_corpus(1);
  LdaConfig cfg;
  cfg.n_topics = 2;
  auto m = lda_train(p.dtm, cfg);
  const std::size_t topic_a = top_ids(m, p.vocab, 0, 10) == p.set_a ? 0 : 1;
  std::vector<std::size_t> words{0, 1, 2, 3};
  auto theta = infer_topic_mixture(m, words, 0.1, 50, 7);
  EXPECT_GT(theta[topic_a], 0.9);
  EXPECT_NEAR(theta[0] + theta[1], 1.0, 1e-12);
}

TEST(Tfidf, UbiquitousWordWeighsZero)
{
  auto dtm = doc_term_matrix_from_ids({{0, 1}, {0}, {0, 0}}, 2);
  auto x = tfidf(dtm);
  EXPECT_EQ(x.coeff(0, 0), 0.0);
  EXPECT_EQ(x.coeff(2, 0), 0.0);
}

TEST(Tfidf, FormulaMatchesHandComputation)
{
  // 4 docs; word 1 appears twice in doc 0 only: 2 ln 4.
  auto dtm = doc_term_matrix_from_ids({{0, 1, 1}, {0, 2}, {0}, {2, 2, 2}}, 3);
  auto x = tfidf(dtm);
  EXPECT_DOUBLE_EQ(x.coeff(0, 1), 2.0 * std::log(4.0));
  // Whole matrix against direct evaluation of count * ln(n / df).
  const double counts[4][3] = {{1, 2, 0}, {1, 0, 1}, {1, 0, 0}, {0, 0, 3}};
  const double df[3] = {3, 1, 2};
  for (int d = 0; d < 4; ++d)
    for (int w = 0; w < 3; ++w)
      EXPECT_DOUBLE_EQ(x.coeff(d, w), counts[d][w] * std::log(4.0 / df[w])) << d << "," << w;
}

TEST(Nmf, RankOneMatrixReconstructedExactly)
{
  std::vector<Eigen::Triplet<double>> t{{0, 0, 3}, {0, 1, 4}, {1, 0, 6}, {1, 1, 8}};
  SparseRowMatrix x(2, 2);
  x.setFromTriplets(t.begin(), t.end());
  auto f = nmf_factorize(x, 1, 500, 1e-15, 3);
  const RowMatrix approx = f.w * f.h;
  const RowMatrix dense = RowMatrix(x);
  EXPECT_LE((dense - approx).norm() / dense.norm(), 1e-6);
}

TEST(Nmf, ObjectiveNonIncreasing)
{
  for (unsigned seed = 0; seed < 5; ++seed) {
    NmfConfig cfg;
    cfg.n_topics = 4;
    cfg.n_iterations = 150;
    cfg.tol = 1e-12;
    cfg.seed = seed;
    cfg.weighting = seed % 2 ? NmfWeighting::counts : NmfWeighting::tfidf;
    auto m = nmf_train(random_dtm(seed + 20, 25, 30, 12), cfg);
    const auto& trace = m.train_meta.objective_trace;
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t i = 1; i < trace.size(); ++i)
      EXPECT_LE(trace[i], trace[i - 1] * (1.0 + 1e-12)) << "iteration " << i;
    EXPECT_GE(m.topic_word.minCoeff(), 0.0);
    EXPECT_GE(m.doc_topic.minCoeff(), 0.0);
  }
}

TEST(Nmf, ObjectiveMatchesDenseResidual)
{
  auto dtm = random_dtm(31, 10, 8, 6);
  auto x = count_matrix(dtm);
  auto f = nmf_factorize(x, 3, 5, 1e-12, 1);
  const RowMatrix resid = RowMatrix(x) - f.w * f.h;
  EXPECT_NEAR(f.objective_trace.back(), resid.squaredNorm(), 1e-9 * resid.squaredNorm());
}

TEST(Nmf, DeterministicAndValidated)
{
  auto dtm = random_dtm(5, 12, 10, 8);
  NmfConfig cfg;
  cfg.n_topics = 3;
  auto a = nmf_train(dtm, cfg);
  auto b = nmf_train(dtm, cfg);
  EXPECT_TRUE(a.topic_word == b.topic_word);
  cfg.n_topics = 11;
  EXPECT_THROW(nmf_train(dtm, cfg), InputError);
  cfg.n_topics = 2;
  cfg.tol = 0;
  EXPECT_THROW(nmf_train(dtm, cfg), ConfigError);
  SparseRowMatrix neg(2, 2);
  neg.insert(0, 0) = -1.0;
  EXPECT_THROW(nmf_factorize(neg, 1, 10, 1e-4, 1), InputError);
}

TEST(TopWords, SortsDescending)
{
  Vocabulary v;
  for (std::string w : {"x", "y", "z"}) {
    v.word_to_id[w] = v.id_to_word.size();
    v.id_to_word.push_back(w);
  }
  v.doc_freq = {1, 1, 1};
  v.coll_freq = {1, 1, 1};
  TopicModel m;
  m.topic_word = RowMatrix(1, 3);
  m.topic_word << 0.5, 0.3, 0.2;
  auto top = top_words(m, v, 0, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].id, 0u);
  EXPECT_EQ(top[1].id, 1u);
  EXPECT_DOUBLE_EQ(top[0].weight, 0.5);
}

TEST(TopWords, TiesBrokenByFrequencyThenLexicographic)
{
  Vocabulary v;
  for (std::string w : {"delta", "alpha", "charlie", "bravo"}) {
    v.word_to_id[w] = v.id_to_word.size();
    v.id_to_word.push_back(w);
  }
  v.doc_freq = {1, 1, 1, 1};
  v.coll_freq = {2, 5, 2, 2};
  TopicModel m;
  m.topic_word = RowMatrix::Constant(1, 4, 0.25);
  auto top = top_words(m, v, 0, 4);
  std::vector<std::string> words;
  for (auto& r : top)
    words.push_back(r.word);
  EXPECT_EQ(words, (std::vector<std::string>{"alpha", "bravo", "charlie", "delta"}));
  EXPECT_THROW(top_words(m, v, 1, 2), InputError);
  EXPECT_THROW(top_words(m, v, 0, 5), InputError);
}

TEST(TopicModelIo, RoundTripIsBitExact)
{
  TempDir dir;
  auto m = lda_train(random_dtm(2, 6, 7, 5), quick_lda(2, 1));
  save_topic_model(dir.path(), m);
  auto back = load_topic_model(dir.path());
  EXPECT_EQ(back.kind, TopicModelKind::lda);
  EXPECT_TRUE(back.topic_word == m.topic_word);
  EXPECT_TRUE(back.doc_topic == m.doc_topic);
  EXPECT_EQ(back.train_meta.hyperparameters, m.train_meta.hyperparameters);
  EXPECT_EQ(std::filesystem::file_size(dir / "topic_word.f64"), 2u * 7u * 8u);
}
