#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace genrestat {

// S x M matrix of per-segment event probabilities for one programme. Values
// are held in float32, the precision of the SEGP file, so save/load is
// lossless.
struct SegmentProbabilities {
  std::size_t segments = 0;
  std::size_t events = 0;
  std::vector<float> probs;  // row-major S x M
  std::string programme_id;
  std::string model_id;

  float at(std::size_t s, std::size_t m) const { return probs[s * events + m]; }
  std::span<const float> row(std::size_t s) const { return {probs.data() + s * events, events}; }
};

// Row-sum tolerance enforced when reading a SEGP file.
inline constexpr double kSegpRowSumTolerance = 1e-3;
inline constexpr std::uint32_t kSegpVersion = 1;

// SEGP: magic "SEGP", u32 version = 1, u32 S, u32 M, then S*M float32
// little-endian, row-major.
std::string encode_segp(const SegmentProbabilities& sp);
SegmentProbabilities decode_segp(std::string_view bytes, const std::string& name);

void save_probabilities(const SegmentProbabilities& sp, const std::filesystem::path& path);
// programme_id is taken from the file stem.
SegmentProbabilities load_probabilities(const std::filesystem::path& path);

// Checks entries in [0, 1] and every row sum within `tolerance` of 1; throws
// kInvalidProbabilities otherwise and kEmptyProgramme when S = 0.
void validate_probabilities(const SegmentProbabilities& sp, double tolerance);

}  // namespace genrestat
