#include "genrestat/container.hpp"

#include <bit>
#include <cstdint>

#include "genrestat/error.hpp"
#include "genrestat/io.hpp"

namespace genrestat::container {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "genrestat-weights";

std::string_view dtype_name(nn::DType d) { return d == nn::DType::kFloat32 ? "float32" : "float64"; }

nn::DType parse_dtype(const std::string& s) {
  if (s == "float32") return nn::DType::kFloat32;
  if (s == "float64") return nn::DType::kFloat64;
  fail(ErrorKind::kFormat, "unsupported tensor dtype '" + s + "'");
}

std::size_t width(nn::DType d) { return d == nn::DType::kFloat32 ? 4 : 8; }

}  // namespace

fs::path blob_path(const fs::path& manifest) {
  fs::path p = manifest;
  p.replace_extension(".bin");
  return p;
}

void save(const fs::path& manifest, const json& meta, const nn::WeightStore& weights) {
  std::string blob;
  json tensors = json::array();
  for (const auto& t : weights.tensors) {
    std::size_t expected = 1;
    for (auto d : t.shape) expected *= d;
    require(expected == t.size(), "container: tensor '" + t.name + "' shape does not match its size");
    tensors.push_back({{"name", t.name},
                       {"shape", t.shape},
                       {"dtype", std::string(dtype_name(t.dtype))},
                       {"offset", blob.size()},
                       {"count", t.size()},
                       {"trainable", t.trainable}});
    for (double v : t.values) {
      if (t.dtype == nn::DType::kFloat32) {
        io::put_f32(blob, static_cast<float>(v));
      } else {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        io::put_u32(blob, static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
        io::put_u32(blob, static_cast<std::uint32_t>(bits >> 32));
      }
    }
  }
  const fs::path blob_file = blob_path(manifest);
  json j = {{"format", kFormatName},
            {"version", kContainerVersion},
            {"blob", blob_file.filename().string()},
            {"blob_bytes", blob.size()},
            {"meta", meta},
            {"tensors", tensors}};
  io::write_file_atomic(blob_file, blob);
  io::write_file_atomic(manifest, j.dump(2) + "\n");
}

Loaded load(const fs::path& manifest) {
  Loaded out;
  try {
    const json j = json::parse(io::read_file(manifest));
    if (j.at("format").get<std::string>() != kFormatName) {
      fail(ErrorKind::kFormat, manifest.string() + ": not a weight container");
    }
    if (j.at("version").get<int>() != kContainerVersion) {
      fail(ErrorKind::kFormat, manifest.string() + ": unsupported container version");
    }
    const fs::path blob_file = manifest.parent_path() / j.at("blob").get<std::string>();
    const std::string blob = io::read_file(blob_file);
    if (blob.size() != j.at("blob_bytes").get<std::size_t>()) {
      fail(ErrorKind::kFormat, blob_file.string() + ": blob size does not match manifest");
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    out.meta = j.at("meta");
    for (const auto& tj : j.at("tensors")) {
      nn::Tensor t;
      t.name = tj.at("name").get<std::string>();
      t.shape = tj.at("shape").get<std::vector<std::size_t>>();
      t.dtype = parse_dtype(tj.at("dtype").get<std::string>());
      t.trainable = tj.at("trainable").get<bool>();
      const auto offset = tj.at("offset").get<std::size_t>();
      const auto count = tj.at("count").get<std::size_t>();
      std::size_t expected = 1;
      for (auto d : t.shape) expected *= d;
      if (expected != count || offset + count * width(t.dtype) > blob.size()) {
        fail(ErrorKind::kFormat, manifest.string() + ": tensor '" + t.name + "' out of range");
      }
      t.values.resize(count);
      for (std::size_t i = 0; i < count; ++i) {
        const unsigned char* p = bytes + offset + i * width(t.dtype);
        if (t.dtype == nn::DType::kFloat32) {
          t.values[i] = io::get_f32(p);
        } else {
          const std::uint64_t bits = static_cast<std::uint64_t>(io::get_u32(p)) |
                                     (static_cast<std::uint64_t>(io::get_u32(p + 4)) << 32);
          t.values[i] = std::bit_cast<double>(bits);
        }
      }
      out.weights.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, manifest.string() + ": " + e.what());
  }
  return out;
}

}  // namespace genrestat::container
