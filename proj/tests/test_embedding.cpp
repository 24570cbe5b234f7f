#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "genrestat/embedding.hpp"
#include "genrestat/error.hpp"
#include "genrestat/rng.hpp"

using namespace genrestat;
namespace emb = genrestat::embedding;
namespace fs = std::filesystem;

namespace {

SegmentProbabilities make_sp(std::size_t s, std::size_t m, std::vector<float> values, std::string id = "p") {
  SegmentProbabilities sp;
  sp.segments = s;
  sp.events = m;
  sp.probs = std::move(values);
  sp.programme_id = std::move(id);
  return sp;
}

SegmentProbabilities random_sp(std::size_t s, std::size_t m, Rng& rng) {
  std::vector<float> v(s * m);
  for (std::size_t r = 0; r < s; ++r) {
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += (v[r * m + j] = static_cast<float>(uniform01(rng) + 1e-3));
    for (std::size_t j = 0; j < m; ++j) v[r * m + j] = static_cast<float>(v[r * m + j] / total);
  }
  return make_sp(s, m, std::move(v));
}

// Rank oracle: event j is in the top-k of a row when fewer than k entries
// outrank it, with earlier indices winning ties.
bool tagged(std::span<const float> row, std::size_t j, int k) {
  int better = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] > row[j] || (row[i] == row[j] && i < j)) ++better;
  }
  return better < k;
}

std::vector<double> naive_num(const SegmentProbabilities& sp, int k) {
  std::vector<double> n(sp.events, 0.0);
  for (std::size_t s = 0; s < sp.segments; ++s)
    for (std::size_t j = 0; j < sp.events; ++j)
      if (tagged(sp.row(s), j, k)) n[j] += 1.0;
  for (double& x : n) x /= static_cast<double>(k * sp.segments);
  return n;
}

std::vector<double> naive_prob(const SegmentProbabilities& sp, int k) {
  std::vector<double> p(sp.events, 0.0);
  for (std::size_t s = 0; s < sp.segments; ++s)
    for (std::size_t j = 0; j < sp.events; ++j)
      if (tagged(sp.row(s), j, k)) p[j] += sp.at(s, j);
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& x : p) x /= total;
  return p;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol);
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

TEST_CASE("top-k tags") {
  const std::vector<float> a = {0.1f, 0.7f, 0.2f};
  CHECK(emb::topk_tags(a, 1) == std::vector<std::size_t>{1});
  const std::vector<float> flat = {0.25f, 0.25f, 0.25f, 0.25f};
  CHECK(emb::topk_tags(flat, 2) == std::vector<std::size_t>{0, 1});
  CHECK(emb::topk_tags(a, 3) == std::vector<std::size_t>{0, 1, 2});
  CHECK(emb::topk_tags(a, 2) == std::vector<std::size_t>{1, 2});
  CHECK(kind_of([&] { emb::topk_tags(a, 0); }) == ErrorKind::kContractViolation);
  CHECK(kind_of([&] { emb::topk_tags(a, 4); }) == ErrorKind::kContractViolation);
}

TEST_CASE("mean-num worked examples") {
  const auto one = emb::mean_num(make_sp(1, 4, {0.1f, 0.2f, 0.3f, 0.4f}), 1);
  CHECK(one.values == std::vector<double>{0, 0, 0, 1});
  CHECK(one.kind == emb::Kind::kNum);
  CHECK(one.k == 1);

  // Top-2 sets {0,1}, {0,2}, {0,1}.
  const auto sp = make_sp(3, 4, {0.5f, 0.3f, 0.1f, 0.1f,  //
                                 0.6f, 0.1f, 0.2f, 0.1f,  //
                                 0.4f, 0.35f, 0.15f, 0.1f});
  const auto num = emb::mean_num(sp, 2);
  check_close(num.values, {0.5, 2.0 / 6.0, 1.0 / 6.0, 0.0}, 1e-15);

  const auto c = emb::combined(sp, 2);
  REQUIRE(c.values.size() == 8);
  CHECK(std::vector<double>(c.values.begin(), c.values.begin() + 4) == num.values);
  CHECK(std::vector<double>(c.values.begin() + 4, c.values.end()) == emb::mean_prob(sp, 2).values);
  CHECK(c.kind == emb::Kind::kCombined);
}

TEST_CASE("mean-prob worked examples") {
  const auto sp = make_sp(2, 3, {0.6f, 0.3f, 0.1f, 0.2f, 0.7f, 0.1f});
  const auto p = emb::mean_prob(sp, 1);
  const double z = static_cast<double>(0.6f) + static_cast<double>(0.7f);
  check_close(p.values, {static_cast<double>(0.6f) / z, static_cast<double>(0.7f) / z, 0.0}, 1e-15);
  CHECK(p.values[0] == doctest::Approx(0.4615).epsilon(1e-4));

  // k = M on one segment reproduces the row.
  const auto row = make_sp(1, 3, {0.2f, 0.5f, 0.3f});
  const auto all = emb::mean_prob(row, 3);
  const double sum = static_cast<double>(0.2f) + static_cast<double>(0.5f) + static_cast<double>(0.3f);
  check_close(all.values, {0.2f / sum, 0.5f / sum, 0.3f / sum}, 1e-12);
}

TEST_CASE("production embeddings match a naive rank oracle on random inputs") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t s = 1 + rng() % 12, m = 2 + rng() % 15;
    auto sp = random_sp(s, m, rng);
    // Inject ties now and then.
    if (trial % 3 == 0) sp.probs[0] = sp.probs[1];
    const int k = 1 + static_cast<int>(rng() % m);
    check_close(emb::mean_num(sp, k).values, naive_num(sp, k), 1e-12);
    check_close(emb::mean_prob(sp, k).values, naive_prob(sp, k), 1e-12);
  }
}

TEST_CASE("counts total k S and both embeddings lie on the simplex") {
  Rng rng(5);
  for (int k = 1; k <= 6; ++k) {
    const auto sp = random_sp(9, 6, rng);
    const auto num = emb::mean_num(sp, k);
    double counts = 0.0;
    for (double v : num.values) counts += v * k * 9;
    CHECK(counts == doctest::Approx(k * 9.0).epsilon(1e-12));
    for (const auto& e : {num, emb::mean_prob(sp, k)}) {
      double total = 0.0;
      for (double v : e.values) {
        CHECK(v >= 0.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("segment order does not matter and event relabelling permutes the output") {
  Rng rng(8);
  const auto sp = random_sp(7, 5, rng);
  std::vector<std::size_t> rows = {6, 2, 0, 5, 1, 4, 3};
  SegmentProbabilities shuffled = sp;
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t j = 0; j < 5; ++j) shuffled.probs[r * 5 + j] = sp.at(rows[r], j);

  const std::vector<std::size_t> pi = {3, 0, 4, 1, 2};  // new index of event j
  SegmentProbabilities relabelled = sp;
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t j = 0; j < 5; ++j) relabelled.probs[r * 5 + pi[j]] = sp.at(r, j);

  for (auto kind : {emb::Kind::kNum, emb::Kind::kProb, emb::Kind::kCombined}) {
    for (int k : {1, 2, 4}) {
      const auto base = emb::embed(sp, kind, k);
      CHECK(emb::embed(shuffled, kind, k).values == base.values);
      const auto moved = emb::embed(relabelled, kind, k);
      const std::size_t halves = kind == emb::Kind::kCombined ? 2 : 1;
      for (std::size_t h = 0; h < halves; ++h)
        for (std::size_t j = 0; j < 5; ++j)
          CHECK(moved.values[h * 5 + pi[j]] == doctest::Approx(base.values[h * 5 + j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("support of mean-num grows with k") {
  Rng rng(13);
  const auto sp = random_sp(4, 12, rng);
  for (int k = 1; k < 12; ++k) {
    const auto a = emb::mean_num(sp, k).values, b = emb::mean_num(sp, k + 1).values;
    for (std::size_t j = 0; j < 12; ++j)
      if (a[j] > 0.0) CHECK(b[j] > 0.0);
  }
}

TEST_CASE("embedding errors") {
  const auto sp = make_sp(1, 3, {0.2f, 0.5f, 0.3f});
  CHECK(kind_of([&] { emb::mean_num(sp, 4); }) == ErrorKind::kContractViolation);
  CHECK(kind_of([&] { emb::mean_num(make_sp(0, 3, {}), 1); }) == ErrorKind::kEmptyProgramme);
  CHECK(kind_of([&] { emb::mean_prob(make_sp(1, 2, {0.0f, 0.0f}), 1); }) == ErrorKind::kInvariantViolation);
  CHECK(kind_of([] { emb::parse_kind("median"); }) == ErrorKind::kFormat);
  CHECK(emb::parse_kind("combined") == emb::Kind::kCombined);
  CHECK(emb::to_string(emb::Kind::kProb) == "prob");
}

TEST_CASE("embed_all preserves order and matches embed") {
  Rng rng(3);
  std::vector<SegmentProbabilities> progs;
  for (int i = 0; i < 9; ++i) {
    progs.push_back(random_sp(1 + i, 6, rng));
    progs.back().programme_id = "p" + std::to_string(i);
  }
  const auto all = emb::embed_all(progs, emb::Kind::kCombined, 2);
  REQUIRE(all.size() == 9);
  for (std::size_t i = 0; i < 9; ++i) {
    CHECK(all[i] == emb::embed(progs[i], emb::Kind::kCombined, 2));
    CHECK(all[i].programme_id == progs[i].programme_id);
  }
}

TEST_CASE("embedding CSV round-trips exactly") {
  Rng rng(4);
  std::vector<emb::ProgrammeEmbedding> rows;
  for (int i = 0; i < 4; ++i) {
    auto e = emb::embed(random_sp(3, 5, rng), emb::Kind::kProb, 2);
    e.programme_id = "prog" + std::to_string(i);
    e.genre = i == 2 ? -1 : i * 2;
    rows.push_back(e);
  }
  const std::string text = emb::format_embeddings(rows);
  CHECK(text.rfind("programme_id,genre,kind,k,v0,v1,v2,v3,v4\n", 0) == 0);
  CHECK(emb::parse_embeddings(text, "mem") == rows);

  const fs::path p = fs::temp_directory_path() / "genrestat_emb.csv";
  emb::write_embeddings(p, rows);
  CHECK(emb::read_embeddings(p) == rows);
  fs::remove(p);

  CHECK_THROWS_AS(emb::parse_embeddings("programme_id,genre,kind,k,v0\nx,Drama,num,1,abc\n", "bad"), Error);
}
