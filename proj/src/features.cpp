#include "genrestat/features.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>

#include "genrestat/error.hpp"
#include "genrestat/io.hpp"

namespace genrestat::features {

namespace {

constexpr double kMelLinearStep = 200.0 / 3.0;
constexpr double kMelLogStartHz = 1000.0;
constexpr double kMelLogStart = kMelLogStartHz / kMelLinearStep;
const double kMelLogStep = std::log(6.4) / 27.0;

using cplx = std::complex<double>;

// Real-input DFT of length 2n through one complex FFT of length n.
class RealFft {
 public:
  explicit RealFft(std::size_t size) : n_(size / 2), twiddle_(n_ / 2), post_(n_ + 1) {
    require(size >= 4 && (size & (size - 1)) == 0, "RealFft: size must be a power of two >= 4");
    for (std::size_t k = 0; k < n_ / 2; ++k) {
      twiddle_[k] = std::polar(1.0, -2.0 * std::numbers::pi * k / static_cast<double>(n_));
    }
    for (std::size_t k = 0; k <= n_; ++k) {
      post_[k] = std::polar(1.0, -std::numbers::pi * k / static_cast<double>(n_));
    }
  }

  // Writes |X_k|^2 for k = 0..n into `power`.
  void power(const double* x, double* power, std::vector<cplx>& z) const {
    z.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) z[i] = {x[2 * i], x[2 * i + 1]};
    fft(z);
    for (std::size_t k = 0; k <= n_; ++k) {
      const cplx a = z[k % n_];
      const cplx b = std::conj(z[(n_ - k) % n_]);
      const cplx even = 0.5 * (a + b);
      const cplx odd = cplx(0.0, -0.5) * (a - b);
      power[k] = std::norm(even + post_[k] * odd);
    }
  }

 private:
  void fft(std::vector<cplx>& z) const {
    for (std::size_t i = 1, j = 0; i < n_; ++i) {
      std::size_t bit = n_ >> 1;
      for (; j & bit; bit >>= 1) j ^= bit;
      j ^= bit;
      if (i < j) std::swap(z[i], z[j]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < len / 2; ++k) {
          const cplx t = twiddle_[k * stride] * z[start + k + len / 2];
          z[start + k + len / 2] = z[start + k] - t;
          z[start + k] += t;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<cplx> twiddle_;
  std::vector<cplx> post_;
};

const RealFft& fft1024() {
  static const RealFft fft(kWindowSize);
  return fft;
}

void check_segment(std::span<const float> samples) {
  require(samples.size() == kSegmentSamples,
          "frame_and_window: segment has " + std::to_string(samples.size()) +
              " samples, expected 160000");
}

}  // namespace

double hz_to_mel(double hz) {
  if (hz < kMelLogStartHz) return hz / kMelLinearStep;
  return kMelLogStart + std::log(hz / kMelLogStartHz) / kMelLogStep;
}

double mel_to_hz(double mel) {
  if (mel < kMelLogStart) return mel * kMelLinearStep;
  return kMelLogStartHz * std::exp(kMelLogStep * (mel - kMelLogStart));
}

MelFilterbank MelFilterbank::build(std::size_t n_mels, double sample_rate, std::size_t n_fft,
                                   double f_min, double f_max) {
  require(n_mels >= 1 && n_fft >= 2, "MelFilterbank: empty configuration");
  require(0.0 <= f_min && f_min < f_max && f_max <= sample_rate / 2.0,
          "MelFilterbank: frequency range must satisfy 0 <= f_min < f_max <= Nyquist");
  const std::size_t n_bins = n_fft / 2 + 1;
  MelFilterbank fb;
  fb.weights = Matrix(n_mels, n_bins);
  const double mel_lo = hz_to_mel(f_min), mel_hi = hz_to_mel(f_max);
  for (std::size_t i = 0; i < n_mels + 2; ++i) {
    fb.edges_hz.push_back(
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_mels + 1)));
  }
  for (std::size_t b = 0; b < n_mels; ++b) {
    const double lo = fb.edges_hz[b], mid = fb.edges_hz[b + 1], hi = fb.edges_hz[b + 2];
    const double area_norm = 2.0 / (hi - lo);
    std::size_t first = n_bins, last = 0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = sample_rate * static_cast<double>(k) / static_cast<double>(n_fft);
      const double rising = (f - lo) / (mid - lo);
      const double falling = (hi - f) / (hi - mid);
      const double w = std::max(0.0, std::min(rising, falling)) * area_norm;
      fb.weights(b, k) = w;
      if (w > 0.0) {
        first = std::min(first, k);
        last = k;
      }
    }
    require(first <= last, "MelFilterbank: band " + std::to_string(b) + " has empty support");
    fb.first_bin.push_back(first);
    fb.last_bin.push_back(last);
  }
  return fb;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

Matrix frame_and_window(std::span<const float> samples) {
  check_segment(samples);
  static const std::vector<double> window = hann_window(kWindowSize);
  Matrix frames(kFrames, kWindowSize);
  for (std::size_t t = 0; t < kFrames; ++t) {
    const float* src = samples.data() + t * kHopSize;
    auto dst = frames.row(t);
    for (std::size_t i = 0; i < kWindowSize; ++i) dst[i] = window[i] * src[i];
  }
  return frames;
}

Matrix power_spectrum(const Matrix& frames) {
  require(frames.cols() == kWindowSize, "power_spectrum: frames must be 1024 wide");
  Matrix power(frames.rows(), kSpectrumBins);
  std::vector<cplx> scratch;
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    fft1024().power(frames.row(t).data(), power.row(t).data(), scratch);
  }
  return power;
}

LogMelSpectrogram apply_log_mel(const Matrix& power, const MelFilterbank& fb) {
  require(power.cols() == fb.weights.cols(), "apply_log_mel: bin count mismatch");
  LogMelSpectrogram out;
  out.mel_bins = fb.bands();
  out.frames = power.rows();
  out.values.resize(out.mel_bins * out.frames);
  for (std::size_t b = 0; b < out.mel_bins; ++b) {
    const auto w = fb.weights.row(b);
    for (std::size_t t = 0; t < out.frames; ++t) {
      const auto p = power.row(t);
      double acc = 0.0;
      for (std::size_t k = fb.first_bin[b]; k <= fb.last_bin[b]; ++k) acc += w[k] * p[k];
      out.values[b * out.frames + t] = std::log(std::max(acc, kLogFloor));
    }
  }
  return out;
}

LogMelSpectrogram log_mel(const Segment& seg, const MelFilterbank& fb) {
  LogMelSpectrogram out = apply_log_mel(power_spectrum(frame_and_window(seg.samples)), fb);
  out.programme_id = seg.programme_id;
  out.segment_index = seg.index;
  return out;
}

namespace serial {

std::vector<LogMelSpectrogram> log_mel_batch(std::span<const Segment> segments,
                                             const MelFilterbank& fb) {
  std::vector<LogMelSpectrogram> out;
  out.reserve(segments.size());
  for (const auto& s : segments) out.push_back(log_mel(s, fb));
  return out;
}

}  // namespace serial

namespace omp {

std::vector<LogMelSpectrogram> log_mel_batch(std::span<const Segment> segments,
                                             const MelFilterbank& fb) {
  for (const auto& s : segments) check_segment(s.samples);
  fft1024();  // build the shared tables before the parallel region
  std::vector<LogMelSpectrogram> out(segments.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(segments.size()); ++i) {
    out[static_cast<std::size_t>(i)] = log_mel(segments[static_cast<std::size_t>(i)], fb);
  }
  return out;
}

}  // namespace omp

void write_lmel_cache(const std::filesystem::path& path,
                      std::span<const LogMelSpectrogram> spectrograms) {
  std::string out = "LMEL";
  io::put_u32(out, kLmelVersion);
  io::put_u32(out, static_cast<std::uint32_t>(spectrograms.size()));
  io::put_u32(out, static_cast<std::uint32_t>(kMelBins));
  io::put_u32(out, static_cast<std::uint32_t>(kFrames));
  for (const auto& s : spectrograms) {
    require(s.mel_bins == kMelBins && s.frames == kFrames && s.values.size() == kMelBins * kFrames,
            "write_lmel_cache: spectrogram is not 64 x 496");
    for (double v : s.values) io::put_f32(out, static_cast<float>(v));
  }
  io::write_file_atomic(path, out);
}

std::vector<LogMelSpectrogram> read_lmel_cache(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 20 || std::memcmp(p, "LMEL", 4) != 0) {
    fail(ErrorKind::kFormat, path.string() + ": bad LMEL magic");
  }
  if (io::get_u32(p + 4) != kLmelVersion) fail(ErrorKind::kFormat, path.string() + ": unsupported LMEL version");
  const std::uint32_t n = io::get_u32(p + 8), mel = io::get_u32(p + 12), frames = io::get_u32(p + 16);
  if (mel != kMelBins || frames != kFrames) fail(ErrorKind::kFormat, path.string() + ": LMEL shape is not 64 x 496");
  const std::size_t block = static_cast<std::size_t>(mel) * frames;
  if (bytes.size() != 20 + static_cast<std::size_t>(n) * block * 4) {
    fail(ErrorKind::kFormat, path.string() + ": LMEL payload size mismatch");
  }
  std::vector<LogMelSpectrogram> out(n);
  for (std::uint32_t s = 0; s < n; ++s) {
    out[s].segment_index = s;
    out[s].values.resize(block);
    for (std::size_t i = 0; i < block; ++i) out[s].values[i] = io::get_f32(p + 20 + (s * block + i) * 4);
  }
  return out;
}

}  // namespace genrestat::features
