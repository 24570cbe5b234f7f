#pragma once

#include <filesystem>

#include <json.hpp>

#include "genrestat/nn.hpp"

// Weight container shared by the event CNN and the back-end classifiers: a
// JSON manifest (names, shapes, dtype, byte offsets, free-form metadata) next
// to a raw little-endian blob. For `model.json` the blob is `model.bin`.
namespace genrestat::container {

inline constexpr int kContainerVersion = 1;

std::filesystem::path blob_path(const std::filesystem::path& manifest);

void save(const std::filesystem::path& manifest, const nlohmann::json& meta,
          const nn::WeightStore& weights);

struct Loaded {
  nlohmann::json meta;
  nn::WeightStore weights;
};

Loaded load(const std::filesystem::path& manifest);

}  // namespace genrestat::container
