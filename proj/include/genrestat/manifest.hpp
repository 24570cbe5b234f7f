#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace genrestat {

// One programme of a dataset. `path` is absolute (or relative to the working
// directory) in memory and written relative to the manifest's directory.
struct ManifestRow {
  std::string programme_id;
  std::filesystem::path path;
  int genre = 0;
};
using Manifest = std::vector<ManifestRow>;

// One labelled event clip used to train the event CNN.
struct ClipRow {
  std::string clip_id;
  std::filesystem::path path;
  int event = 0;
};
using ClipManifest = std::vector<ClipRow>;

// CSV with header `programme_id,path,genre`.
Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const Manifest& manifest);

// CSV with header `clip_id,path,event`.
ClipManifest read_clip_manifest(const std::filesystem::path& file);
void write_clip_manifest(const std::filesystem::path& file, const ClipManifest& clips);

}  // namespace genrestat
