#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace genrestat {

inline constexpr int kPipelineRate = 32000;
inline constexpr double kSegmentSeconds = 5.0;
inline constexpr std::size_t kSegmentSamples = 160000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kPipelineRate;
  std::string source_id;
};

struct Segment {
  std::vector<float> samples;
  std::string programme_id;
  std::size_t index = 0;
};

}  // namespace genrestat
