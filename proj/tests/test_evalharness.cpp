#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "genrestat/embedding.hpp"
#include "genrestat/error.hpp"
#include "genrestat/evalharness.hpp"
#include "genrestat/rng.hpp"

using namespace genrestat;
namespace cl = genrestat::classifiers;
namespace emb = genrestat::embedding;

namespace {

Manifest balanced_manifest(int per_genre, int genres = kGenreCount) {
  Manifest m;
  for (int g = 0; g < genres; ++g) {
    for (int i = 0; i < per_genre; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "prog%05d", g * per_genre + i);
      m.push_back({id, std::string(id) + ".wav", g});
    }
  }
  return m;
}

// Per-programme segment probabilities whose dominant event tracks the genre.
std::vector<SegmentProbabilities> genre_probs(const Manifest& m, std::size_t events, double signal,
                                              std::uint64_t seed) {
  std::vector<SegmentProbabilities> out;
  for (std::size_t p = 0; p < m.size(); ++p) {
    Rng rng(mix_seed(seed, p));
    SegmentProbabilities sp;
    sp.programme_id = m[p].programme_id;
    sp.events = events;
    sp.segments = 6 + rng() % 5;
    for (std::size_t s = 0; s < sp.segments; ++s) {
      std::vector<double> row(events);
      double total = 0.0;
      for (std::size_t j = 0; j < events; ++j) {
        row[j] = uniform01(rng);
        if (j == static_cast<std::size_t>(m[p].genre) && uniform01(rng) < signal) row[j] += 1.5;
        total += row[j];
      }
      for (double v : row) sp.probs.push_back(static_cast<float>(v / total));
    }
    out.push_back(std::move(sp));
  }
  return out;
}

std::vector<emb::ProgrammeEmbedding> embed_with_genres(const Manifest& m,
                                                       const std::vector<SegmentProbabilities>& probs,
                                                       emb::Kind kind, int k) {
  auto e = emb::embed_all(probs, kind, k);
  for (std::size_t i = 0; i < e.size(); ++i) e[i].genre = m[i].genre;
  return e;
}

cl::ClassifierSpec rf_spec(std::uint64_t seed = 3) {
  cl::ClassifierSpec s;
  s.kind = cl::Kind::kRf;
  s.seed = seed;
  s.n_trees = 20;
  return s;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an exception");
  return ErrorKind::kContractViolation;
}

}  // namespace

TEST_CASE("252 programmes over 14 folds give 18 per fold, 2 per genre") {
  const Manifest m = balanced_manifest(28);
  const auto split = eval::make_folds(m, 14, 42);
  REQUIRE(split.assignment.size() == 252);
  std::map<int, int> per_fold;
  std::map<std::pair<int, int>, int> per_fold_genre;
  for (const auto& r : m) {
    const int f = split.fold_of(r.programme_id);
    REQUIRE(f >= 0);
    REQUIRE(f < 14);
    ++per_fold[f];
    ++per_fold_genre[{f, r.genre}];
  }
  for (int f = 0; f < 14; ++f) {
    CHECK(per_fold[f] == 18);
    for (int g = 0; g < kGenreCount; ++g) CHECK(per_fold_genre[{f, g}] == 2);
  }
}

TEST_CASE("unbalanced genres still stratify within one") {
  Manifest m = balanced_manifest(5);
  for (int extra = 0; extra < 3; ++extra) m.push_back({"zz" + std::to_string(extra), "x.wav", 4});
  const auto split = eval::make_folds(m, 4, 1);
  for (int g = 0; g < kGenreCount; ++g) {
    std::vector<int> counts(4, 0);
    for (const auto& r : m)
      if (r.genre == g) ++counts[static_cast<std::size_t>(split.fold_of(r.programme_id))];
    CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
  }
}

TEST_CASE("fold errors and determinism") {
  const Manifest m = balanced_manifest(3);
  CHECK(kind_of([&] { eval::make_folds(m, 1, 0); }) == ErrorKind::kContractViolation);
  CHECK(kind_of([&] { eval::make_folds(m, 4, 0); }) == ErrorKind::kInsufficientData);
  const Manifest big = balanced_manifest(28);
  CHECK(eval::make_folds(big, 14, 9).assignment == eval::make_folds(big, 14, 9).assignment);
  CHECK(eval::make_folds(big, 14, 9).assignment != eval::make_folds(big, 14, 10).assignment);
  // Row order of the manifest does not matter.
  Manifest reversed(big.rbegin(), big.rend());
  CHECK(eval::make_folds(reversed, 14, 9).assignment == eval::make_folds(big, 14, 9).assignment);
}

TEST_CASE("accuracy examples") {
  const std::vector<int> t = {0, 2, 2}, p = {0, 1, 2};
  CHECK(eval::accuracy(t, t) == 100.0);
  CHECK(eval::accuracy(p, t) == doctest::Approx(200.0 / 3.0));
  const std::vector<int> shorter = {0, 1};
  CHECK(kind_of([&] { eval::accuracy(shorter, t); }) == ErrorKind::kContractViolation);
}

TEST_CASE("confusion examples and a recount oracle") {
  const std::vector<int> truth = {0, 0}, pred = {0, 1};
  const auto c = eval::confusion(pred, truth, 2);
  CHECK(c.percent(0, 0) == 50.0);
  CHECK(c.percent(0, 1) == 50.0);
  CHECK(c.percent(1, 0) == 0.0);
  CHECK(c.percent(1, 1) == 0.0);
  CHECK(c.empty_rows == std::vector<bool>{false, true});

  const std::vector<int> same = {0, 1, 2, 3};
  const auto perfect = eval::confusion(same, same, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(perfect.percent(i, j) == (i == j ? 100.0 : 0.0));

  Rng rng(6);
  std::vector<int> rt(500), rp(500);
  for (std::size_t i = 0; i < 500; ++i) {
    rt[i] = static_cast<int>(rng() % 9);
    rp[i] = static_cast<int>(rng() % 9);
  }
  const auto rc = eval::confusion(rp, rt, 9);
  for (int i = 0; i < 9; ++i) {
    const auto row_total = std::count(rt.begin(), rt.end(), i);
    double sum = 0.0;
    for (int j = 0; j < 9; ++j) {
      std::size_t n = 0;
      for (std::size_t s = 0; s < 500; ++s) n += rt[s] == i && rp[s] == j;
      CHECK(rc.counts(i, j) == static_cast<double>(n));
      CHECK(rc.percent(i, j) == doctest::Approx(100.0 * static_cast<double>(n) / static_cast<double>(row_total)));
      sum += rc.percent(i, j);
    }
    CHECK(std::abs(sum - 100.0) <= 0.1);
  }
  const std::vector<int> out_of_range = {9};
  const std::vector<int> zero = {0};
  CHECK_THROWS_AS(eval::confusion(out_of_range, zero, 9), Error);
}

TEST_CASE("cross-validation report invariants") {
  const Manifest m = balanced_manifest(6);
  const auto probs = genre_probs(m, 12, 0.7, 1);
  const auto e = embed_with_genres(m, probs, emb::Kind::kNum, 2);
  const auto split = eval::make_folds(m, 3, 5);
  const auto r = eval::cross_validate(m, e, rf_spec(), split);
  REQUIRE(r.fold_accuracy.size() == 3);
  CHECK(r.mean_accuracy == (r.fold_accuracy[0] + r.fold_accuracy[1] + r.fold_accuracy[2]) / 3.0);
  CHECK(r.mean_accuracy > 60.0);
  CHECK(r.programme_ids.size() == m.size());
  CHECK(std::is_sorted(r.programme_ids.begin(), r.programme_ids.end()));
  // Pooled accuracy from the confusion matrix matches the predictions.
  double diag = 0.0, total = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    diag += r.pooled.counts(i, i);
    for (std::size_t j = 0; j < 9; ++j) total += r.pooled.counts(i, j);
  }
  CHECK(total == 54.0);
  CHECK(100.0 * diag / total == doctest::Approx(eval::accuracy(r.predicted, r.truth)));
  // Balanced data with equal folds: mean of diag percentages equals pooled accuracy.
  double diag_pct = 0.0;
  for (std::size_t i = 0; i < 9; ++i) diag_pct += r.pooled.percent(i, i) / 9.0;
  CHECK(std::abs(diag_pct - 100.0 * diag / total) <= 0.1);
  CHECK(std::abs(r.mean_accuracy - 100.0 * diag / total) <= 0.1);

  const auto again = eval::cross_validate(m, e, rf_spec(), split);
  CHECK(again.predicted == r.predicted);
  CHECK(again.fold_accuracy == r.fold_accuracy);
}

TEST_CASE("no programme is ever scored by a model that saw it") {
  // One-dimensional unique ids with shuffled labels: a memorising tree is
  // perfect on anything it trained on and at chance elsewhere.
  const Manifest base = balanced_manifest(8);
  Rng rng(4);
  Manifest m;
  std::vector<emb::ProgrammeEmbedding> e;
  for (std::size_t i = 0; i < base.size(); ++i) {
    ManifestRow r = base[i];
    e.push_back({{static_cast<double>(i) * 1.7 + 0.3}, emb::Kind::kNum, 1, r.programme_id, r.genre});
    m.push_back(r);
  }
  cl::ClassifierSpec dt;
  dt.kind = cl::Kind::kDt;
  std::vector<int> labels;
  for (const auto& row : m) labels.push_back(row.genre);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < m.size(); ++i) m[i].genre = e[i].genre = labels[i];
  const auto shuffled = eval::cross_validate(m, e, dt, eval::make_folds(m, 4, 2));
  CHECK(shuffled.mean_accuracy < 40.0);
}

TEST_CASE("cross-validation ignores manifest and embedding order") {
  const Manifest m = balanced_manifest(5);
  const auto probs = genre_probs(m, 10, 0.6, 2);
  const auto e = embed_with_genres(m, probs, emb::Kind::kProb, 3);
  cl::ClassifierSpec mlp;
  mlp.kind = cl::Kind::kMlp;
  mlp.seed = 8;
  mlp.mlp_width_scale = 1.0 / 128.0;
  mlp.epochs = 10;
  const auto split = eval::make_folds(m, 5, 1);
  const auto a = eval::cross_validate(m, e, mlp, split);

  Manifest m2 = m;
  auto e2 = e;
  Rng rng(3);
  std::shuffle(m2.begin(), m2.end(), rng);
  std::shuffle(e2.begin(), e2.end(), rng);
  const auto b = eval::cross_validate(m2, e2, mlp, eval::make_folds(m2, 5, 1));
  CHECK(a.predicted == b.predicted);
  CHECK(a.fold_accuracy == b.fold_accuracy);
  CHECK(a.pooled.counts == b.pooled.counts);
}

TEST_CASE("missing or mismatched embeddings are rejected") {
  const Manifest m = balanced_manifest(3);
  const auto probs = genre_probs(m, 10, 0.6, 2);
  auto e = embed_with_genres(m, probs, emb::Kind::kNum, 1);
  const auto split = eval::make_folds(m, 3, 1);
  auto missing = e;
  missing.pop_back();
  CHECK(kind_of([&] { eval::cross_validate(m, missing, rf_spec(), split); }) == ErrorKind::kIncompleteDataset);
  auto ragged = e;
  ragged[4].values.push_back(0.0);
  CHECK(kind_of([&] { eval::cross_validate(m, ragged, rf_spec(), split); }) == ErrorKind::kInvalidInput);
}

TEST_CASE("segment sampling") {
  const auto s = eval::sample_segments(10, 0.25, "p1", 7);
  CHECK(s.size() == 3);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 3);
  for (std::size_t i : s) CHECK(i < 10);
  CHECK(eval::sample_segments(10, 0.25, "p1", 7) == s);
  CHECK(eval::sample_segments(10, 0.3, "p1", 7).size() == 3);  // 0.3 * 10 is not rounded up to 4
  CHECK(eval::sample_segments(7, 1.0, "p1", 7) == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  CHECK(eval::sample_segments(1, 0.1, "p1", 7).size() == 1);
  CHECK(kind_of([] { eval::sample_segments(5, 1e-12, "tiny", 1); }) == ErrorKind::kFractionTooSmall);
  CHECK(kind_of([] { eval::sample_segments(5, 0.0, "zero", 1); }) == ErrorKind::kContractViolation);

  // Every segment is equally likely to be kept.
  std::vector<int> hits(10, 0);
  for (int trial = 0; trial < 2000; ++trial)
    for (std::size_t i : eval::sample_segments(10, 0.3, "p" + std::to_string(trial), 1)) ++hits[i];
  for (int h : hits) CHECK(std::abs(h - 600) < 90);
}

TEST_CASE("ablation at the full fraction reproduces cross-validation") {
  const Manifest m = balanced_manifest(6);
  const auto probs = genre_probs(m, 12, 0.7, 9);
  const auto e = embed_with_genres(m, probs, emb::Kind::kNum, 2);
  const auto split = eval::make_folds(m, 3, 5);
  const auto cv = eval::cross_validate(m, e, rf_spec(), split);
  const std::vector<double> fractions = {0.5, 1.0};
  const auto curve = eval::segment_ablation(m, probs, emb::Kind::kNum, 2, rf_spec(), split, fractions, 11);
  REQUIRE(curve.size() == 2);
  CHECK(curve[1].fraction == 1.0);
  CHECK(curve[1].fold_accuracy == cv.fold_accuracy);
  CHECK(curve[1].mean_accuracy == cv.mean_accuracy);
  CHECK(curve[0].fold_accuracy.size() == 3);

  auto incomplete = probs;
  incomplete.pop_back();
  CHECK(kind_of([&] {
          eval::segment_ablation(m, incomplete, emb::Kind::kNum, 2, rf_spec(), split, fractions, 11);
        }) == ErrorKind::kIncompleteDataset);
}

TEST_CASE("reference table values") {
  CHECK(*eval::published_accuracy(cl::Kind::kMlp, emb::Kind::kNum, 10) == 93.7);
  CHECK(*eval::published_accuracy(cl::Kind::kLr, emb::Kind::kNum, 1) == 56.7);
  CHECK(*eval::published_accuracy(cl::Kind::kSvm, emb::Kind::kProb, 4) == 73.9);
  CHECK(*eval::published_accuracy(cl::Kind::kRf, emb::Kind::kCombined, 10) == 91.8);
  CHECK_FALSE(eval::published_accuracy(cl::Kind::kMlp, emb::Kind::kNum, 3).has_value());
  CHECK_FALSE(eval::published_accuracy(cl::Kind::kConstant, emb::Kind::kNum, 10).has_value());
}

TEST_CASE("report serialisation") {
  const Manifest m = balanced_manifest(3);
  const auto probs = genre_probs(m, 10, 0.8, 5);
  const auto e = embed_with_genres(m, probs, emb::Kind::kNum, 1);
  auto r = eval::cross_validate(m, e, rf_spec(), eval::make_folds(m, 3, 1));
  r.embedding_kind = "num";
  r.k = 1;
  const auto j = eval::report_json(r, {{"seed", 1}});
  CHECK(j.at("mean_accuracy").get<double>() == r.mean_accuracy);
  CHECK(j.at("confusion").at("labels").size() == 9);
  CHECK(j.at("confusion").at("labels")[0] == "Children's");
  CHECK(j.at("predictions").size() == m.size());
  CHECK(j.at("run_config").at("seed") == 1);
  CHECK(j.at("published_reference").at("accuracy").get<double>() == 69.4);
  const std::string csv = eval::report_csv(r);
  CHECK(csv.rfind("section,row,col,value\n", 0) == 0);
  const std::vector<eval::AblationPoint> curve = {{0.5, 80.0, {70.0, 90.0}}};
  CHECK(eval::ablation_csv(curve).rfind("fraction,mean_accuracy,fold0,fold1\n", 0) == 0);
}
