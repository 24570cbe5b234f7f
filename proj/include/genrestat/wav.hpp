#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace genrestat {

enum class SampleFormat { kPcm16, kFloat32 };

// Decoded RIFF/WAVE contents before any channel or rate normalisation.
struct WavData {
  std::vector<float> interleaved;
  int channels = 1;
  int sample_rate = 0;
  SampleFormat format = SampleFormat::kPcm16;

  std::size_t frames() const { return channels > 0 ? interleaved.size() / channels : 0; }
};

// Accepts PCM 16-bit and IEEE float 32-bit, plain or WAVE_FORMAT_EXTENSIBLE.
WavData decode_wav(std::string_view bytes, const std::string& name);
WavData read_wav(const std::filesystem::path& path);

// 16-bit encoding maps x to round(x * 32768) clamped to the int16 range, so
// decoding a 16-bit file and re-encoding it is lossless.
std::string encode_wav(std::span<const float> interleaved, int channels, int sample_rate,
                       SampleFormat format);
void write_wav(const std::filesystem::path& path, std::span<const float> interleaved,
               int channels, int sample_rate, SampleFormat format = SampleFormat::kPcm16);

}  // namespace genrestat
