#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "genrestat/audio.hpp"
#include "genrestat/wav.hpp"

namespace genrestat {

// Number of taps of the Kaiser-windowed sinc interpolation kernel.
inline constexpr int kResamplerTaps = 64;
inline constexpr double kResamplerKaiserBeta = 8.6;

// Band-limited resampling. The -6 dB cutoff sits at the lower of the two
// Nyquist frequencies; output length is floor(n * out_rate / in_rate).
std::vector<float> resample(std::span<const float> samples, int in_rate, int out_rate);

// Channel-mean downmix followed by resampling to the pipeline rate; samples
// are clamped to [-1, 1]. Mono input at the pipeline rate passes through.
Waveform normalize_audio(const WavData& wav, std::string source_id);

Waveform load_audio(const std::filesystem::path& path);

// Splits into floor(n / 160000) consecutive 5-second segments; the trailing
// remainder is dropped.
std::vector<Segment> segment(const Waveform& w);

}  // namespace genrestat
