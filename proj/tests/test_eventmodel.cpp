#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "genrestat/error.hpp"
#include "genrestat/eventmodel.hpp"
#include "genrestat/features.hpp"
#include "genrestat/synthkit.hpp"

using namespace genrestat;
namespace em = genrestat::eventmodel;
namespace fs = std::filesystem;

namespace {

em::CnnConfig tiny(int m, double width, std::uint64_t seed = 1) {
  em::CnnConfig cfg;
  cfg.n_events = m;
  cfg.width_scale = width;
  cfg.seed = seed;
  cfg.dropout.fill(0.0);
  return cfg;
}

nn::Activation random_images(std::size_t n, std::size_t h, std::size_t w, Rng& rng) {
  nn::Activation a;
  a.reset(n, {1, h, w});
  for (double& v : a.data) v = 4.0 * uniform01(rng) - 2.0;
  return a;
}

features::LogMelSpectrogram random_spectrogram(Rng& rng, std::size_t h = 16, std::size_t w = 24) {
  features::LogMelSpectrogram s;
  s.mel_bins = h;
  s.frames = w;
  s.values.resize(h * w);
  for (double& v : s.values) v = 4.0 * uniform01(rng) - 2.0;
  return s;
}

// Mean cross-entropy in train mode (batch statistics, no dropout).
double train_loss(const em::EventCnn& model, const nn::Activation& x, const Matrix& targets) {
  Matrix p = nn::to_matrix(model.logits(x, true, nullptr));
  nn::softmax_rows(p);
  return nn::cross_entropy(p, targets);
}

}  // namespace

TEST_CASE("full-size shape trace matches the reference architecture") {
  em::CnnConfig cfg;
  const auto rows = em::shape_trace(cfg);
  REQUIRE(rows.size() == 16);
  const std::size_t conv_c[8] = {64, 64, 128, 128, 256, 256, 512, 512};
  for (std::size_t r = 0; r < 8; ++r) CHECK(rows[r].dims == std::vector<std::size_t>{64, 496, conv_c[r]});
  CHECK(rows[8].dims == std::vector<std::size_t>{32, 248, 512});
  const std::size_t deep_c[4] = {1024, 1024, 2048, 2048};
  for (std::size_t r = 9; r < 13; ++r) CHECK(rows[r].dims == std::vector<std::size_t>{32, 248, deep_c[r - 9]});
  CHECK(rows[13].dims == std::vector<std::size_t>{2048});
  CHECK(rows[14].dims == std::vector<std::size_t>{2048});
  CHECK(rows[15].dims == std::vector<std::size_t>{527});

  CHECK(rows[0].layer == "Convolution [3x3 @ 64] - BN - ReLU");
  CHECK(rows[1].layer == "Convolution [3x3 @ 64] - BN - ReLU - Dropout (20%)");
  CHECK(rows[8].layer == "Average Pooling [2x2] - Dropout (30%)");
  CHECK(rows[13].layer == "Global Pooling - Dropout (50%)");
  CHECK(rows[15].layer == "FC - Softmax");
}

TEST_CASE("width scaling and input pooling change the trace consistently") {
  em::CnnConfig cfg = tiny(10, 1.0 / 32.0);
  cfg.input_pool_freq = 4;
  cfg.input_pool_time = 16;
  const auto rows = em::shape_trace(cfg);
  CHECK(rows[0].dims == std::vector<std::size_t>{16, 31, 2});
  CHECK(rows[8].dims == std::vector<std::size_t>{8, 15, 16});
  CHECK(rows[12].dims == std::vector<std::size_t>{8, 15, 64});
  CHECK(rows[13].dims == std::vector<std::size_t>{64});
  CHECK(rows[14].dims == std::vector<std::size_t>{64});
  CHECK(rows[15].dims == std::vector<std::size_t>{10});
  CHECK(cfg.scaled(64) == 2);
  CHECK(tiny(3, 1e-6).scaled(64) == 1);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(tiny(1, 1.0).validate(), Error);
  CHECK_THROWS_AS(tiny(4, 0.0).validate(), Error);
  auto cfg = tiny(4, 0.1);
  cfg.dropout[3] = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("softmax rows sum to one and batch composition does not matter at inference") {
  const em::EventCnn model(tiny(5, 1.0 / 16.0, 3));
  Rng rng(9);
  std::vector<features::LogMelSpectrogram> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(random_spectrogram(rng));
  const Matrix all = model.forward(batch);
  REQUIRE(all.rows() == 6);
  REQUIRE(all.cols() == 5);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (double p : all.row(i)) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    const Matrix one = model.forward(std::span(batch).subspan(i, 1));
    for (std::size_t j = 0; j < 5; ++j) CHECK(one(0, j) == doctest::Approx(all(i, j)).epsilon(1e-12));
  }
}

TEST_CASE("global pooling ignores the order of spatial positions") {
  auto pool = nn::global_max_mean_pool();
  nn::Activation a;
  a.reset(1, {3, 4, 5});
  Rng rng(2);
  for (double& v : a.data) v = uniform01(rng);
  nn::Activation b = a;
  // Reverse the spatial positions of every channel.
  for (std::size_t c = 0; c < 3; ++c) std::reverse(b.data.begin() + c * 20, b.data.begin() + (c + 1) * 20);
  nn::WeightStore w;
  nn::LayerCache cache;
  nn::Context ctx;
  nn::Activation oa, ob;
  pool->forward(w, a, oa, cache, ctx);
  pool->forward(w, b, ob, cache, ctx);
  REQUIRE(oa.shape.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(oa.data[i] == doctest::Approx(ob.data[i]).epsilon(1e-15));
  // Max plus mean per channel.
  for (std::size_t c = 0; c < 3; ++c) {
    double mx = -1e300, mean = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      mx = std::max(mx, a.data[c * 20 + i]);
      mean += a.data[c * 20 + i] / 20.0;
    }
    CHECK(oa.data[c] == doctest::Approx(mx + mean));
  }
}

TEST_CASE("backward matches central finite differences") {
  em::EventCnn model(tiny(4, 1.0 / 16.0, 5));
  Rng rng(17);
  const nn::Activation x = random_images(2, 16, 24, rng);
  Matrix targets(2, 4);
  targets(0, 1) = 1.0;
  targets(1, 3) = 1.0;

  nn::Sequential::Trace trace;
  const nn::Activation out = model.logits(x, true, nullptr, &trace);
  Matrix p = nn::to_matrix(out);
  nn::softmax_rows(p);
  auto grads = nn::zero_grads(model.weights());
  model.network().backward(model.weights(), trace, nn::cross_entropy_logit_grad(p, targets, out.shape), grads);

  const double h = 1e-6;
  std::size_t checked = 0, worst_ok = 0;
  double worst = 0.0;
  for (std::size_t ti = 0; ti < model.weights().tensors.size(); ++ti) {
    const auto& t = model.weights().tensors[ti];
    if (!t.trainable) continue;
    for (int pick = 0; pick < 3; ++pick) {
      const std::size_t j = static_cast<std::size_t>(rng() % t.size());
      const double saved = t.values[j];
      model.mutable_weights().tensors[ti].values[j] = saved + h;
      const double up = train_loss(model, x, targets);
      model.mutable_weights().tensors[ti].values[j] = saved - h;
      const double down = train_loss(model, x, targets);
      model.mutable_weights().tensors[ti].values[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[ti][j];
      const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
      CAPTURE(t.name);
      CAPTURE(j);
      worst = std::max(worst, rel);
      if (rel < 1e-4) ++worst_ok;
      ++checked;
    }
  }
  CAPTURE(worst);
  // A few samples can straddle a ReLU or max-pool kink; nearly all must agree.
  CHECK(worst_ok >= checked - checked / 20);
}

TEST_CASE("zero epochs returns the seeded initialisation") {
  Rng rng(1);
  std::vector<features::LogMelSpectrogram> clips = {random_spectrogram(rng), random_spectrogram(rng)};
  std::vector<int> labels = {0, 1};
  const auto cfg = tiny(3, 1.0 / 16.0, 77);
  const auto r = em::train_events(clips, labels, cfg, {.epochs = 0});
  CHECK(r.loss_trace.empty());
  CHECK(r.weights == em::EventCnn(cfg).weights());
  CHECK(em::EventCnn(tiny(3, 1.0 / 16.0, 78)).weights() != r.weights);
}

TEST_CASE("a single class cannot be trained") {
  Rng rng(1);
  std::vector<features::LogMelSpectrogram> clips = {random_spectrogram(rng), random_spectrogram(rng)};
  std::vector<int> labels = {2, 2};
  try {
    em::train_events(clips, labels, tiny(3, 1.0 / 16.0), {.epochs = 1});
    FAIL("expected DegenerateTraining");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateTraining);
  }
  std::vector<int> bad = {0, 3};
  CHECK_THROWS_AS(em::train_events(clips, bad, tiny(3, 1.0 / 16.0), {.epochs = 1}), Error);
}

TEST_CASE("non-finite input is reported as numeric overflow") {
  const em::EventCnn model(tiny(3, 1.0 / 16.0));
  Rng rng(1);
  nn::Activation x = random_images(1, 16, 24, rng);
  x.data[5] = std::nan("");
  try {
    model.logits(x, false, nullptr);
    FAIL("expected NumericOverflow");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumericOverflow);
  }
}

TEST_CASE("a toy event set is learned, deterministically, and survives save/load") {
  const int m = 4;
  const auto sigs = synth::default_signatures(m + 12);
  const auto fb = features::MelFilterbank::build();
  std::vector<features::LogMelSpectrogram> train, test;
  std::vector<int> train_y, test_y;
  for (int e = 0; e < m; ++e) {
    const auto& sig = sigs[static_cast<std::size_t>(e * 3)];
    for (int c = 0; c < 10; ++c) {
      Segment s;
      s.samples = synth::gen_event_clip(sig, 5.0, mix_seed(100 + e, c)).samples;
      auto img = features::log_mel(s, fb);
      (c < 7 ? train : test).push_back(std::move(img));
      (c < 7 ? train_y : test_y).push_back(e);
    }
  }
  auto cfg = tiny(m, 1.0 / 32.0, 11);
  cfg.input_pool_freq = 4;
  cfg.input_pool_time = 16;
  const em::TrainingOptions opt{.epochs = 15, .lr = 3e-3, .batch_size = 8};
  const auto result = em::train_events(train, train_y, cfg, opt);
  REQUIRE(result.loss_trace.size() == 15);
  for (double l : result.loss_trace) CHECK(std::isfinite(l));
  CHECK(result.loss_trace.back() < result.loss_trace.front());

  const em::EventCnn model(cfg, result.weights);
  const auto sp = em::infer_programme(model, test, "toy", "cnn");
  CHECK(sp.segments == test.size());
  CHECK(sp.events == static_cast<std::size_t>(m));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < sp.segments; ++i) {
    const auto row = sp.row(i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == test_y[i]) ++correct;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(test.size()) >= 0.9);

  const auto again = em::train_events(train, train_y, cfg, opt);
  CHECK(again.weights == result.weights);
  CHECK(again.loss_trace == result.loss_trace);

  const fs::path p = fs::temp_directory_path() / "genrestat_cnn_test.json";
  em::save_model(p, model, {{"note", "test"}});
  const em::EventCnn loaded = em::load_model(p);
  CHECK(loaded.weights() == model.weights());
  CHECK(em::to_json(loaded.config()) == em::to_json(cfg));
  const auto sp2 = em::infer_programme(loaded, test, "toy", "cnn");
  CHECK(sp2.probs == sp.probs);
  fs::remove(p);
  fs::remove(fs::path(p).replace_extension(".bin"));
}

TEST_CASE("an empty programme is rejected") {
  const em::EventCnn model(tiny(3, 1.0 / 16.0));
  try {
    em::infer_programme(model, {}, "empty", "m");
    FAIL("expected EmptyProgramme");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyProgramme);
  }
}

TEST_CASE("weights with the wrong shape are refused") {
  auto w = em::EventCnn(tiny(3, 1.0 / 16.0)).weights();
  w.tensors[0].shape[0] += 1;
  CHECK_THROWS_AS(em::EventCnn(tiny(3, 1.0 / 16.0), w), Error);
}
