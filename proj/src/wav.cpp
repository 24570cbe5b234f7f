#include "genrestat/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "genrestat/error.hpp"
#include "genrestat/io.hpp"

namespace genrestat {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace

WavData decode_wav(std::string_view bytes, const std::string& name) {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12) fail(ErrorKind::kCorruptFile, name + ": truncated RIFF header");
  if (std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    fail(ErrorKind::kCorruptFile, name + ": not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  std::uint16_t tag = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk = io::get_u32(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    const std::size_t available = size - (pos + 8);
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk < 16 || available < 16) fail(ErrorKind::kCorruptFile, name + ": truncated fmt chunk");
      tag = get_u16(body);
      channels = get_u16(body + 2);
      rate = io::get_u32(body + 4);
      block_align = get_u16(body + 12);
      bits = get_u16(body + 14);
      if (tag == kFormatExtensible) {
        if (chunk < 40 || available < 40) fail(ErrorKind::kCorruptFile, name + ": truncated extensible fmt");
        tag = get_u16(body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      if (!have_fmt) fail(ErrorKind::kCorruptFile, name + ": data chunk before fmt chunk");
      WavData out;
      if (tag == kFormatPcm && bits == 16) {
        out.format = SampleFormat::kPcm16;
      } else if (tag == kFormatFloat && bits == 32) {
        out.format = SampleFormat::kFloat32;
      } else {
        fail(ErrorKind::kUnsupportedFormat, name + ": format tag " + std::to_string(tag) + " with " +
                                                std::to_string(bits) + " bits per sample");
      }
      if (channels == 0 || rate == 0) fail(ErrorKind::kCorruptFile, name + ": zero channels or rate");
      const std::size_t width = bits / 8;
      if (block_align != channels * width) fail(ErrorKind::kCorruptFile, name + ": inconsistent block align");
      // A data chunk longer than the file is read up to the last whole frame.
      const std::size_t frames = std::min<std::size_t>(chunk, available) / block_align;
      out.channels = channels;
      out.sample_rate = static_cast<int>(rate);
      out.interleaved.resize(frames * channels);
      for (std::size_t i = 0; i < out.interleaved.size(); ++i) {
        const unsigned char* p = body + i * width;
        out.interleaved[i] = out.format == SampleFormat::kPcm16
                                 ? static_cast<float>(static_cast<std::int16_t>(get_u16(p))) / 32768.0f
                                 : io::get_f32(p);
      }
      return out;
    }
    pos += 8 + chunk + (chunk & 1u);
  }
  fail(ErrorKind::kCorruptFile, name + (have_fmt ? ": missing data chunk" : ": missing fmt chunk"));
}

WavData read_wav(const std::filesystem::path& path) {
  return decode_wav(io::read_file(path), path.string());
}

std::string encode_wav(std::span<const float> interleaved, int channels, int sample_rate,
                       SampleFormat format) {
  require(channels > 0 && sample_rate > 0, "encode_wav: channels and rate must be positive");
  require(interleaved.size() % static_cast<std::size_t>(channels) == 0,
          "encode_wav: sample count not a multiple of channel count");
  const std::uint16_t width = format == SampleFormat::kPcm16 ? 2 : 4;
  const auto data_bytes = static_cast<std::uint32_t>(interleaved.size() * width);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  io::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  io::put_u32(out, 16);
  put_u16(out, format == SampleFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  put_u16(out, static_cast<std::uint16_t>(channels));
  io::put_u32(out, static_cast<std::uint32_t>(sample_rate));
  io::put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * width));
  put_u16(out, static_cast<std::uint16_t>(channels * width));
  put_u16(out, static_cast<std::uint16_t>(8 * width));
  out += "data";
  io::put_u32(out, data_bytes);
  for (float x : interleaved) {
    if (format == SampleFormat::kPcm16) {
      const double q = std::clamp(std::round(static_cast<double>(x) * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
    } else {
      io::put_f32(out, x);
    }
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const float> interleaved,
               int channels, int sample_rate, SampleFormat format) {
  io::write_file_atomic(path, encode_wav(interleaved, channels, sample_rate, format));
}

}  // namespace genrestat
