#include "genrestat/probabilities.hpp"

#include <cmath>
#include <cstring>

#include "genrestat/error.hpp"
#include "genrestat/io.hpp"

namespace genrestat {

void validate_probabilities(const SegmentProbabilities& sp, double tolerance) {
  if (sp.segments == 0) fail(ErrorKind::kEmptyProgramme, sp.programme_id + ": programme has no segments");
  if (sp.events < 2) fail(ErrorKind::kInvalidProbabilities, sp.programme_id + ": fewer than two events");
  require(sp.probs.size() == sp.segments * sp.events, "probabilities: size does not match S x M");
  for (std::size_t s = 0; s < sp.segments; ++s) {
    double sum = 0.0;
    for (float p : sp.row(s)) {
      if (!(p >= 0.0f && p <= 1.0f)) {
        fail(ErrorKind::kInvalidProbabilities,
             sp.programme_id + ": entry outside [0, 1] in segment " + std::to_string(s));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      fail(ErrorKind::kInvalidProbabilities, sp.programme_id + ": segment " + std::to_string(s) +
                                                 " sums to " + std::to_string(sum));
    }
  }
}

std::string encode_segp(const SegmentProbabilities& sp) {
  require(sp.probs.size() == sp.segments * sp.events, "encode_segp: size does not match S x M");
  std::string out = "SEGP";
  io::put_u32(out, kSegpVersion);
  io::put_u32(out, static_cast<std::uint32_t>(sp.segments));
  io::put_u32(out, static_cast<std::uint32_t>(sp.events));
  for (float p : sp.probs) io::put_f32(out, p);
  return out;
}

SegmentProbabilities decode_segp(std::string_view bytes, const std::string& name) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(p, "SEGP", 4) != 0) {
    fail(ErrorKind::kFormat, name + ": bad SEGP magic");
  }
  if (io::get_u32(p + 4) != kSegpVersion) {
    fail(ErrorKind::kFormat, name + ": unsupported SEGP version " + std::to_string(io::get_u32(p + 4)));
  }
  SegmentProbabilities sp;
  sp.programme_id = name;
  sp.segments = io::get_u32(p + 8);
  sp.events = io::get_u32(p + 12);
  if (bytes.size() != 16 + sp.segments * sp.events * 4) {
    fail(ErrorKind::kFormat, name + ": SEGP payload size does not match S x M");
  }
  sp.probs.resize(sp.segments * sp.events);
  for (std::size_t i = 0; i < sp.probs.size(); ++i) sp.probs[i] = io::get_f32(p + 16 + 4 * i);
  validate_probabilities(sp, kSegpRowSumTolerance);
  return sp;
}

void save_probabilities(const SegmentProbabilities& sp, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_segp(sp));
}

SegmentProbabilities load_probabilities(const std::filesystem::path& path) {
  SegmentProbabilities sp = decode_segp(io::read_file(path), path.stem().string());
  return sp;
}

}  // namespace genrestat
