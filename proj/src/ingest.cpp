#include "genrestat/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "genrestat/error.hpp"

namespace genrestat {

std::vector<float> resample(std::span<const float> samples, int in_rate, int out_rate) {
  require(in_rate > 0 && out_rate > 0, "resample: rates must be positive");
  if (in_rate == out_rate) return {samples.begin(), samples.end()};

  const auto n_in = static_cast<long long>(samples.size());
  const auto n_out = static_cast<std::size_t>(n_in * out_rate / in_rate);
  const double half = kResamplerTaps / 2.0;
  // Cutoff as a fraction of the input rate.
  const double fc = 0.5 * std::min(in_rate, out_rate) / in_rate;
  const double i0_beta = std::cyl_bessel_i(0.0, kResamplerKaiserBeta);
  auto kernel = [&](double u) {
    const double r = u / half;
    if (r <= -1.0 || r >= 1.0) return 0.0;
    const double window = std::cyl_bessel_i(0.0, kResamplerKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
    const double x = 2.0 * fc * u;
    const double sinc = x == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    return 2.0 * fc * sinc * window;
  };

  std::vector<float> out(n_out);
  const double step = static_cast<double>(in_rate) / out_rate;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(n_out); ++n) {
    const double t = static_cast<double>(n) * step;
    const auto base = static_cast<long long>(std::floor(t));
    double acc = 0.0;
    for (long long j = base - kResamplerTaps / 2 + 1; j <= base + kResamplerTaps / 2; ++j) {
      if (j < 0 || j >= n_in) continue;
      acc += samples[static_cast<std::size_t>(j)] * kernel(t - static_cast<double>(j));
    }
    out[static_cast<std::size_t>(n)] = static_cast<float>(acc);
  }
  return out;
}

Waveform normalize_audio(const WavData& wav, std::string source_id) {
  require(wav.channels >= 1, "normalize_audio: no channels");
  const std::size_t frames = wav.frames();
  std::vector<float> mono(frames);
  if (wav.channels == 1) {
    mono.assign(wav.interleaved.begin(), wav.interleaved.begin() + frames);
  } else {
    for (std::size_t f = 0; f < frames; ++f) {
      double acc = 0.0;
      for (int c = 0; c < wav.channels; ++c) acc += wav.interleaved[f * wav.channels + c];
      mono[f] = static_cast<float>(acc / wav.channels);
    }
  }
  Waveform w;
  w.samples = resample(mono, wav.sample_rate, kPipelineRate);
  for (float& x : w.samples) x = std::clamp(x, -1.0f, 1.0f);
  w.sample_rate = kPipelineRate;
  w.source_id = std::move(source_id);
  return w;
}

Waveform load_audio(const std::filesystem::path& path) {
  return normalize_audio(read_wav(path), path.stem().string());
}

std::vector<Segment> segment(const Waveform& w) {
  require(w.sample_rate == kPipelineRate, "segment: waveform not at the pipeline rate");
  const std::size_t count = w.samples.size() / kSegmentSamples;
  if (count == 0) {
    fail(ErrorKind::kProgrammeTooShort,
         w.source_id + ": " + std::to_string(w.samples.size()) + " samples is shorter than one segment");
  }
  std::vector<Segment> out(count);
  for (std::size_t s = 0; s < count; ++s) {
    const auto first = w.samples.begin() + static_cast<std::ptrdiff_t>(s * kSegmentSamples);
    out[s].samples.assign(first, first + static_cast<std::ptrdiff_t>(kSegmentSamples));
    out[s].programme_id = w.source_id;
    out[s].index = s;
  }
  return out;
}

}  // namespace genrestat
