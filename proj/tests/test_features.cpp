#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "genrestat/error.hpp"
#include "genrestat/features.hpp"
#include "genrestat/rng.hpp"

using namespace genrestat;
namespace f = genrestat::features;
namespace fs = std::filesystem;

namespace {

Segment make_segment(auto&& gen, std::string id = "s", std::size_t index = 0) {
  Segment s;
  s.samples.resize(kSegmentSamples);
  for (std::size_t i = 0; i < kSegmentSamples; ++i) s.samples[i] = static_cast<float>(gen(i));
  s.programme_id = std::move(id);
  s.index = index;
  return s;
}

Segment tone(double hz, double amp = 0.5) {
  return make_segment([&](std::size_t i) { return amp * std::sin(2.0 * std::numbers::pi * hz * i / kPipelineRate); });
}

std::size_t frame_power_argmax(const Matrix& power, std::size_t t) {
  std::size_t best = 0;
  for (std::size_t b = 1; b < power.cols(); ++b)
    if (power(t, b) > power(t, best)) best = b;
  return best;
}

bool frame_nonzero(const Matrix& power, std::size_t t) {
  for (std::size_t b = 0; b < power.cols(); ++b)
    if (power(t, b) > 0.0) return true;
  return false;
}

}  // namespace

TEST_CASE("frames are 1024-sample windows at a 320-sample hop") {
  std::vector<float> ramp(kSegmentSamples);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<float>(i) / 1e6f;
  const Matrix frames = f::frame_and_window(ramp);
  REQUIRE(frames.rows() == f::kFrames);
  REQUIRE(frames.cols() == f::kWindowSize);
  const auto w = f::hann_window();
  for (std::size_t t : {std::size_t{0}, std::size_t{1}, std::size_t{250}, f::kFrames - 1}) {
    for (std::size_t n : {std::size_t{1}, std::size_t{300}, std::size_t{512}, std::size_t{1023}}) {
      CHECK(frames(t, n) == doctest::Approx(w[n] * ramp[320 * t + n]).epsilon(1e-12));
    }
  }
  // The last frame ends inside the segment.
  CHECK(320 * (f::kFrames - 1) + f::kWindowSize <= kSegmentSamples);
}

TEST_CASE("periodic Hann window values") {
  const auto w = f::hann_window(8);
  CHECK(w[0] == 0.0);
  CHECK(w[4] == doctest::Approx(1.0));
  CHECK(w[2] == doctest::Approx(0.5));
}

TEST_CASE("an impulse only reaches the frames that cover it") {
  auto at = [](std::size_t pos) {
    std::vector<float> x(kSegmentSamples, 0.0f);
    x[pos] = 1.0f;
    return f::power_spectrum(f::frame_and_window(x));
  };
  const Matrix p320 = at(320);
  CHECK(frame_nonzero(p320, 0));
  for (std::size_t t = 2; t < f::kFrames; ++t) REQUIRE_FALSE(frame_nonzero(p320, t));

  const Matrix p330 = at(330);
  CHECK(frame_nonzero(p330, 0));
  CHECK(frame_nonzero(p330, 1));
  for (std::size_t t = 2; t < f::kFrames; ++t) REQUIRE_FALSE(frame_nonzero(p330, t));
}

TEST_CASE("a 1 kHz tone peaks at bin 32") {
  const Matrix power = f::power_spectrum(f::frame_and_window(tone(1000.0).samples));
  REQUIRE(power.cols() == f::kSpectrumBins);
  for (std::size_t t : {std::size_t{0}, std::size_t{100}, std::size_t{495}}) CHECK(frame_power_argmax(power, t) == 32);
}

TEST_CASE("power spectrum matches a direct DFT and satisfies one-sided Parseval") {
  Rng rng(4);
  std::vector<float> x(kSegmentSamples);
  for (float& v : x) v = static_cast<float>(2.0 * uniform01(rng) - 1.0);
  const Matrix frames = f::frame_and_window(x);
  const Matrix power = f::power_spectrum(frames);
  const std::size_t n = f::kWindowSize;
  for (std::size_t t : {std::size_t{0}, std::size_t{77}}) {
    // Direct O(n^2) DFT at a few bins.
    for (std::size_t k : {std::size_t{0}, std::size_t{5}, std::size_t{200}, std::size_t{512}}) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += frames(t, i) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * i) / n);
      }
      CHECK(power(t, k) == doctest::Approx(std::norm(acc)).epsilon(1e-9));
    }
    double time_energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) time_energy += frames(t, i) * frames(t, i);
    double spec = power(t, 0) + power(t, n / 2);
    for (std::size_t k = 1; k < n / 2; ++k) spec += 2.0 * power(t, k);
    CHECK(spec / n == doctest::Approx(time_energy).epsilon(1e-9));
  }
}

TEST_CASE("mel scale anchors") {
  CHECK(f::hz_to_mel(1000.0) == doctest::Approx(15.0));
  CHECK(f::hz_to_mel(0.0) == 0.0);
  CHECK(f::hz_to_mel(500.0) == doctest::Approx(7.5));
  for (double hz : {50.0, 700.0, 1000.0, 3000.0, 14000.0}) CHECK(f::mel_to_hz(f::hz_to_mel(hz)) == doctest::Approx(hz));
  CHECK(f::hz_to_mel(6400.0) > f::hz_to_mel(3200.0));
}

TEST_CASE("filterbank support lies inside 50 Hz - 14 kHz") {
  const auto fb = f::MelFilterbank::build();
  REQUIRE(fb.bands() == f::kMelBins);
  REQUIRE(fb.weights.cols() == f::kSpectrumBins);
  CHECK(fb.edges_hz.front() == doctest::Approx(50.0));
  CHECK(fb.edges_hz.back() == doctest::Approx(14000.0));
  const double bin_hz = static_cast<double>(kPipelineRate) / f::kWindowSize;
  for (std::size_t b = 0; b < fb.bands(); ++b) {
    for (std::size_t k = 0; k < f::kSpectrumBins; ++k) {
      const double hz = static_cast<double>(k) * bin_hz;
      if (hz < 50.0 || hz > 14000.0) REQUIRE(fb.weights(b, k) == 0.0);
      REQUIRE(fb.weights(b, k) >= 0.0);
    }
    CHECK(fb.center_hz(b) > fb.edges_hz[b]);
  }
}

TEST_CASE("silence sits at the log floor and amplitude doubling adds ln 4") {
  const auto fb = f::MelFilterbank::build();
  const auto silent = f::log_mel(make_segment([](std::size_t) { return 0.0; }), fb);
  for (double v : silent.values) REQUIRE(v == doctest::Approx(std::log(f::kLogFloor)));

  Rng rng(1);
  std::vector<double> noise(kSegmentSamples);
  for (double& v : noise) v = 0.2 * (2.0 * uniform01(rng) - 1.0);
  const auto a = f::log_mel(make_segment([&](std::size_t i) { return noise[i]; }), fb);
  const auto b = f::log_mel(make_segment([&](std::size_t i) { return 2.0 * noise[i]; }), fb);
  for (std::size_t i = 0; i < a.values.size(); i += 97) {
    CHECK(b.values[i] - a.values[i] == doctest::Approx(std::log(4.0)).epsilon(1e-4));
  }
}

TEST_CASE("only spectrum bins 0-1 give an all-floor image") {
  // Energy confined to the DC bin falls below every filter.
  const auto fb = f::MelFilterbank::build();
  Matrix power(f::kFrames, f::kSpectrumBins, 0.0);
  for (std::size_t t = 0; t < f::kFrames; ++t) {
    power(t, 0) = 5.0;
    power(t, 1) = 5.0;
  }
  const auto img = f::apply_log_mel(power, fb);
  for (double v : img.values) REQUIRE(v == doctest::Approx(std::log(f::kLogFloor)));
}

TEST_CASE("a tone lands in the mel band whose support brackets it") {
  const auto fb = f::MelFilterbank::build();
  for (double hz : {440.0, 1000.0, 2500.0, 7000.0}) {
    const auto img = f::log_mel(tone(hz), fb);
    std::size_t best = 0;
    for (std::size_t b = 1; b < img.mel_bins; ++b)
      if (img.at(b, 200) > img.at(best, 200)) best = b;
    CAPTURE(hz);
    CHECK(fb.edges_hz[best] <= hz);
    CHECK(hz <= fb.edges_hz[best + 2]);
  }
}

TEST_CASE("log-mel image shape and identity") {
  const auto fb = f::MelFilterbank::build();
  Segment s = tone(300.0);
  s.programme_id = "prog7";
  s.index = 3;
  const auto img = f::log_mel(s, fb);
  CHECK(img.mel_bins == 64);
  CHECK(img.frames == 496);
  CHECK(img.values.size() == 64 * 496);
  CHECK(img.programme_id == "prog7");
  CHECK(img.segment_index == 3);
}

TEST_CASE("serial and parallel batches agree exactly") {
  const auto fb = f::MelFilterbank::build();
  std::vector<Segment> segs;
  Rng rng(12);
  for (std::size_t i = 0; i < 5; ++i) {
    segs.push_back(make_segment([&](std::size_t) { return 2.0 * uniform01(rng) - 1.0; }, "p", i));
  }
  const auto a = f::serial::log_mel_batch(segs, fb);
  const auto b = f::omp::log_mel_batch(segs, fb);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].values == b[i].values);
    CHECK(b[i].segment_index == i);
  }
}

TEST_CASE("LMEL cache round-trips at float32 precision and rejects garbage") {
  const auto fb = f::MelFilterbank::build();
  std::vector<f::LogMelSpectrogram> imgs = {f::log_mel(tone(500.0), fb), f::log_mel(tone(4000.0), fb)};
  const fs::path p = fs::temp_directory_path() / "genrestat_test.lmel";
  f::write_lmel_cache(p, imgs);
  const auto back = f::read_lmel_cache(p);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    REQUIRE(back[i].values.size() == imgs[i].values.size());
    for (std::size_t j = 0; j < imgs[i].values.size(); ++j) {
      REQUIRE(back[i].values[j] == static_cast<double>(static_cast<float>(imgs[i].values[j])));
    }
  }
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOPE0000000000000000";
  }
  CHECK_THROWS_AS(f::read_lmel_cache(p), Error);
  fs::remove(p);
}
