#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "genrestat/audio.hpp"
#include "genrestat/matrix.hpp"

namespace genrestat::features {

inline constexpr std::size_t kWindowSize = 1024;
inline constexpr std::size_t kHopSize = 320;
inline constexpr std::size_t kFrames = 496;
inline constexpr std::size_t kMelBins = 64;
inline constexpr std::size_t kSpectrumBins = kWindowSize / 2 + 1;
inline constexpr double kMinHz = 50.0;
inline constexpr double kMaxHz = 14000.0;
inline constexpr double kLogFloor = 1e-10;

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular, area-normalised filters mapping power-spectrum bins to mel
// bands. `edges_hz` holds the n_mels + 2 filter corner frequencies; band b
// rises from edges_hz[b] to its centre edges_hz[b + 1] and falls to
// edges_hz[b + 2].
struct MelFilterbank {
  Matrix weights;  // n_mels x n_bins
  std::vector<double> edges_hz;
  std::vector<std::size_t> first_bin;  // support of each band, inclusive
  std::vector<std::size_t> last_bin;

  std::size_t bands() const { return weights.rows(); }
  double center_hz(std::size_t band) const { return edges_hz[band + 1]; }

  static MelFilterbank build(std::size_t n_mels = kMelBins, double sample_rate = kPipelineRate,
                             std::size_t n_fft = kWindowSize, double f_min = kMinHz,
                             double f_max = kMaxHz);
};

// Mel-major (bands x frames) log-power image of one segment.
struct LogMelSpectrogram {
  std::size_t mel_bins = kMelBins;
  std::size_t frames = kFrames;
  std::vector<double> values;
  std::string programme_id;
  std::size_t segment_index = 0;

  double at(std::size_t band, std::size_t frame) const { return values[band * frames + frame]; }
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n = kWindowSize);

// 496 x 1024 matrix; frame t covers samples [320 t, 320 t + 1024), no padding.
Matrix frame_and_window(std::span<const float> segment_samples);

// Squared magnitude of the 1024-point real DFT of every frame, bins 0..512.
Matrix power_spectrum(const Matrix& frames);

// ln(max(fb * power^T, 1e-10)), shaped bands x frames.
LogMelSpectrogram apply_log_mel(const Matrix& power, const MelFilterbank& fb);

// frame_and_window -> power_spectrum -> apply_log_mel for one segment.
LogMelSpectrogram log_mel(const Segment& seg, const MelFilterbank& fb);

namespace serial {
std::vector<LogMelSpectrogram> log_mel_batch(std::span<const Segment> segments,
                                             const MelFilterbank& fb);
}
namespace omp {
std::vector<LogMelSpectrogram> log_mel_batch(std::span<const Segment> segments,
                                             const MelFilterbank& fb);
}

// LMEL cache: magic "LMEL", u32 version, u32 n_segments, u32 mel, u32 frames,
// then row-major float32 little-endian blocks per segment.
inline constexpr std::uint32_t kLmelVersion = 1;
void write_lmel_cache(const std::filesystem::path& path,
                      std::span<const LogMelSpectrogram> spectrograms);
std::vector<LogMelSpectrogram> read_lmel_cache(const std::filesystem::path& path);

}  // namespace genrestat::features
