// Acceptance suite: one PASS/FAIL line per property criterion, fixtures only.
// Exit status is the number of failed criteria.

#include <chrono>
#include <cstring>
#include <cstdio>
#include <functional>
#include <random>
#include <string>

#include "blobs.hpp"
#include "cv_oracle.hpp"
#include "experiment_fixture.hpp"
#include "planted.hpp"
#include "topicattn/topicattn.hpp"

using namespace topicattn;
using namespace topicattn::testing;

namespace {

// Tolerances and thresholds, fixed here rather than passed in.
constexpr int kLdaSeeds = 20;
constexpr double kLdaMinSuccess = 0.95;
constexpr double kLdaMaxSeconds = 30.0;
constexpr double kNmfRankOneRelErr = 1e-6;
constexpr double kNmfMonotoneSlack = 1e-12; // relative, for rounding in the objective sum
constexpr double kEmSlack = 1e-8;
constexpr double kBlobMeanTol = 1e-3;
constexpr double kOneHotTol = 1e-6;
constexpr double kOracleTol = 1e-12;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check)
{
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("[%s] %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
  std::fflush(stdout);
  failures += !o.pass;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0)
{
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome lda_planted()
{
  const auto start = std::chrono::steady_clock::now();
  int ok = 0;
  for (int seed = 1; seed <= kLdaSeeds; ++seed) {
    auto p = make_planted_corpus(static_cast<unsigned>(seed));
    LdaConfig cfg;
    cfg.n_topics = 2;
    cfg.seed = static_cast<std::uint64_t>(seed);
    auto m = lda_train(p.dtm, cfg);
    bool good = true;
    for (std::size_t k = 0; k < 2; ++k) {
      std::set<std::size_t> ids;
      for (const auto& rw : top_words(m, p.vocab, k, 10))
        ids.insert(rw.id);
      good &= ids == p.set_a || ids == p.set_b;
    }
    ok += good;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double rate = static_cast<double>(ok) / kLdaSeeds;
  return {rate >= kLdaMinSuccess && secs < kLdaMaxSeconds,
          fmt("%.0f/20 seeds recovered (need >= 95%%), %.2f s (limit 30 s)", ok, secs)};
}

Outcome nmf_properties()
{
  std::mt19937 gen(11);
  std::uniform_real_distribution<double> pos(0.1, 2.0);
  // Rank-1 outer product, 30 x 20.
  std::vector<Eigen::Triplet<double>> t;
  std::vector<double> u(30), v(20);
  for (auto& x : u)
    x = pos(gen);
  for (auto& x : v)
    x = pos(gen);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 20; ++j)
      t.emplace_back(i, j, u[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(j)]);
  SparseRowMatrix x(30, 20);
  x.setFromTriplets(t.begin(), t.end());
  auto f = nmf_factorize(x, 1, 2000, 1e-15, 3);
  const RowMatrix dense(x);
  const double rel = (dense - f.w * f.h).norm() / dense.norm();

  // Monotone objective on random count matrices, both weightings.
  std::size_t steps = 0, violations = 0;
  for (unsigned seed = 0; seed < 5; ++seed) {
    std::vector<std::vector<std::size_t>> docs(40);
    for (auto& d : docs)
      for (int i = 0; i < 15; ++i)
        d.push_back(gen() % 50);
    NmfConfig cfg;
    cfg.n_topics = 5;
    cfg.n_iterations = 200;
    cfg.tol = 1e-15;
    cfg.seed = seed;
    cfg.weighting = seed % 2 ? NmfWeighting::counts : NmfWeighting::tfidf;
    auto m = nmf_train(doc_term_matrix_from_ids(docs, 50), cfg);
    const auto& tr = m.train_meta.objective_trace;
    for (std::size_t i = 1; i < tr.size(); ++i, ++steps)
      violations += tr[i] > tr[i - 1] * (1.0 + kNmfMonotoneSlack);
  }
  return {rel <= kNmfRankOneRelErr && violations == 0,
          fmt("rank-1 relative error %.2e (limit 1e-6); %.0f increases over %.0f steps", rel,
              static_cast<double>(violations), static_cast<double>(steps))};
}

Outcome gmm_properties()
{
  std::size_t violations = 0, steps = 0;
  for (unsigned seed = 1; seed <= 5; ++seed) {
    auto b = make_blobs(seed, 40, 3, 4, 1.5);
    GmmConfig cfg;
    cfg.n_components = 4;
    cfg.seed = seed;
    cfg.tol = 1e-10;
    auto fit = gmm_fit(b.x, cfg);
    const auto& tr = fit.model.fit_meta.loglik_trace;
    for (std::size_t i = 1; i < tr.size(); ++i, ++steps)
      violations += tr[i] < tr[i - 1] - kEmSlack;
  }
  RowMatrix x(4, 1);
  x << 0.0, 0.01, 100.0, 100.01;
  GmmConfig cfg;
  cfg.n_components = 2;
  auto fit = gmm_fit(x, cfg);
  auto means = fit.model.original_means();
  const double lo = std::min(means(0, 0), means(1, 0)), hi = std::max(means(0, 0), means(1, 0));
  const double mean_err = std::max(std::abs(lo - 0.005), std::abs(hi - 100.005));
  double onehot_err = 0.0;
  for (Eigen::Index i = 0; i < 4; ++i)
    onehot_err = std::max(onehot_err, 1.0 - fit.responsibilities.row(i).maxCoeff());
  const bool split = (fit.responsibilities(0, 0) > 0.5) == (fit.responsibilities(1, 0) > 0.5) &&
                     (fit.responsibilities(0, 0) > 0.5) != (fit.responsibilities(2, 0) > 0.5);
  return {violations == 0 && mean_err <= kBlobMeanTol && onehot_err <= kOneHotTol && split,
          fmt("%.0f log-likelihood decreases in %.0f EM steps; two-blob mean error %.1e", static_cast<double>(violations),
              static_cast<double>(steps), mean_err) +
              fmt(", one-hot error %.1e", onehot_err)};
}

Outcome cv_oracle()
{
  double worst = 0.0;
  std::size_t corpora = 0;
  for (const auto& sc : small_corpora(4242, 300)) {
    ++corpora;
    EnumeratedWindows oracle(sc.docs, sc.window);
    TrackedWords tw;
    tw.add_topics(sc.topics);
    auto stats = window_counts(sc.docs, tw.words, sc.window);
    if (stats.n_windows != oracle.windows.size())
      return {false, "window count mismatch"};
    for (const auto& a : tw.words) {
      if (stats.word_count(a) != oracle.containing(a))
        return {false, "word window count mismatch for " + a};
      for (const auto& b : tw.words) {
        if (stats.pair_count(a, b) != oracle.containing(a, b))
          return {false, "pair window count mismatch"};
        worst = std::max(worst, std::abs(npmi(stats, a, b, 1e-12) - oracle.npmi(a, b, 1e-12)));
      }
    }
    CoherenceConfig cfg;
    cfg.window_size = sc.window;
    auto r = cv_coherence(sc.topics, stats, cfg);
    for (std::size_t i = 0; i < sc.topics.size(); ++i)
      worst = std::max(worst, std::abs(r.per_topic[i] - oracle.cv_topic(sc.topics[i], 1e-12, 1.0)));
  }
  auto stats = window_counts({{"a", "b"}, {"c", "d"}}, {"a", "b"}, 2);
  CoherenceConfig cfg;
  cfg.window_size = 2;
  const double perfect = cv_coherence({{"a", "b"}}, stats, cfg).per_topic[0];
  return {worst <= kOracleTol && perfect == 1.0,
          fmt("%.0f corpora, max deviation from enumeration %.1e (limit 1e-12); perfect pair c_v = %.17g",
              static_cast<double>(corpora), worst, perfect)};
}

Outcome overlap_properties()
{
  std::vector<std::string> a, b;
  for (int i = 0; i < 20; ++i) {
    a.push_back("a" + std::to_string(i));
    b.push_back("b" + std::to_string(i));
  }
  const auto same = overlap_matrix({a}, {a}).matrix[0][0];
  const auto disjoint = overlap_matrix({a}, {b}).matrix[0][0];
  std::mt19937 gen(99);
  int mismatches = 0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<std::string>> ra, rb;
    auto list = [&] {
      std::set<std::string> s;
      while (s.size() < 6)
        s.insert("w" + std::to_string(gen() % 20));
      return std::vector<std::string>(s.begin(), s.end());
    };
    for (int i = 0; i < 1 + static_cast<int>(gen() % 9); ++i)
      ra.push_back(list());
    for (int i = 0; i < 1 + static_cast<int>(gen() % 9); ++i)
      rb.push_back(list());
    std::vector<std::size_t> maxima;
    for (const auto& x : ra) {
      std::size_t best = 0;
      for (const auto& y : rb) {
        std::size_t c = 0;
        for (const auto& w : x)
          c += std::count(y.begin(), y.end(), w);
        best = std::max(best, c);
      }
      maxima.push_back(best);
    }
    std::size_t mode = 0, count = 0;
    for (std::size_t v = 0; v <= 6; ++v) {
      const auto c = static_cast<std::size_t>(std::count(maxima.begin(), maxima.end(), v));
      if (c > 0 && c >= count) {
        mode = v;
        count = c;
      }
    }
    mismatches += overlap_matrix(ra, rb).mode_of_max != mode;
  }
  return {same == 20 && disjoint == 0 && mismatches == 0,
          fmt("identical -> %.0f, disjoint -> %.0f, %.0f/300 mode mismatches", static_cast<double>(same),
              static_cast<double>(disjoint), mismatches)};
}

Outcome archive_round_trip()
{
  TempDir tmp;
  auto a = make_archive(17, 25, 3);
  write_archive(tmp / "a", a.manifest, a.records, 7);
  auto back = read_archive(tmp / "a");
  const bool same = back.records == a.records;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < a.records.size(); ++i)
    for (std::size_t l = 0; l < a.records[i].layers.size(); ++l)
      checked += std::memcmp(a.records[i].layers[l].data(), back.records[i].layers[l].data(),
                             a.records[i].layers[l].size() * sizeof(float)) == 0;

  // One row scaled off the simplex must be rejected by the reader and validator.
  auto bad = a.records;
  for (std::size_t c = 0; c < bad[4].token_count(); ++c)
    bad[4].layers[1][c] *= 1.5f;
  // The writer refuses such records, so the file is assembled from raw encodings.
  std::string bytes(archive_magic, 4);
  for (const auto& r : bad)
    bytes += encode_record(r);
  std::filesystem::create_directories(tmp / "b");
  detail::write_file_bytes(tmp / "b" / "records-00000.atn", bytes);
  auto manifest = a.manifest;
  manifest.record_files = {"records-00000.atn"};
  detail::write_file_bytes(tmp / "b" / "manifest.json", to_json(manifest).dump());
  bool reader_rejects = false;
  try {
    read_archive(tmp / "b");
  } catch (const CorruptArchive&) {
    reader_rejects = true;
  }
  auto report = validate_archive(tmp / "b");
  const bool flagged = !report.ok() && report.n_failed() == 1;
  return {same && reader_rejects && flagged,
          fmt("%.0f records, %.0f matrices bit-identical; corrupt row rejected by reader: ", static_cast<double>(back.records.size()),
              static_cast<double>(checked)) +
              (reader_rejects ? "yes" : "no") + ", by validator: " + (flagged ? "yes" : "no")};
}

Outcome run_determinism()
{
  TempDir tmp;
  auto file = write_fixture_experiment(tmp.path());
  run_experiment(load_experiment_config(file, {"output.dir=\"first\""}));
  run_experiment(load_experiment_config(file, {"output.dir=\"second\"", "output.workers=2"}));
  std::size_t identical = 0, total = 0;
  for (const auto& entry : std::filesystem::directory_iterator(tmp / "first")) {
    if (entry.path().extension() != ".csv")
      continue;
    ++total;
    identical += read_text(entry.path()) == read_text(tmp / "second" / entry.path().filename());
  }
  return {total == 3 && identical == total,
          fmt("%.0f/%.0f CSV files byte-identical across two runs", static_cast<double>(identical), static_cast<double>(total))};
}

} // namespace

int main()
{
  report(1, "LDA planted-topic recovery", lda_planted);
  report(2, "NMF monotone objective and rank-1 exactness", nmf_properties);
  report(3, "GMM EM monotonicity and two-blob recovery", gmm_properties);
  report(4, "c_v equals brute-force enumeration", cv_oracle);
  report(5, "top-k overlap and mode", overlap_properties);
  report(6, "attention archive round trip and corruption", archive_round_trip);
  report(7, "run determinism on the fixture corpus", run_determinism);
  return failures;
}
