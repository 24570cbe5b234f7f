#include "genrestat/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "genrestat/error.hpp"
#include "genrestat/genres.hpp"
#include "genrestat/io.hpp"

namespace genrestat {

namespace fs = std::filesystem;

std::string_view genre_name(int code) {
  require(code >= 0 && code < kGenreCount, "genre code out of range: " + std::to_string(code));
  return kGenreNames[static_cast<std::size_t>(code)];
}

int parse_genre(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  };
  const std::string needle = lower(text);
  for (int g = 0; g < kGenreCount; ++g) {
    if (lower(kGenreNames[static_cast<std::size_t>(g)]) == needle) return g;
  }
  if (!text.empty() && std::all_of(text.begin(), text.end(),
                                   [](unsigned char c) { return std::isdigit(c); })) {
    const long long code = io::parse_int(text);
    if (code >= 0 && code < kGenreCount) return static_cast<int>(code);
  }
  fail(ErrorKind::kFormat, "unknown genre '" + std::string(text) + "'");
}

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& file,
                                               std::string_view expected_header) {
  const std::string text = io::read_file(file);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, "empty CSV: " + file.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header) {
    fail(ErrorKind::kFormat, file.string() + ": expected header '" +
                                 std::string(expected_header) + "', got '" + line + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = io::split_csv_line(line);
    if (fields.size() != 3) {
      fail(ErrorKind::kFormat, file.string() + ": expected 3 fields in '" + line + "'");
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

fs::path resolve(const fs::path& file, const std::string& stored) {
  const fs::path p(stored);
  return p.is_absolute() ? p : file.parent_path() / p;
}

std::string relative_to(const fs::path& file, const fs::path& target) {
  const fs::path base = file.parent_path().empty() ? fs::path(".") : file.parent_path();
  std::error_code ec;
  const fs::path rel = fs::relative(target, base, ec);
  return (ec || rel.empty()) ? target.generic_string() : rel.generic_string();
}

}  // namespace

Manifest read_manifest(const fs::path& file) {
  Manifest out;
  for (auto& f : read_csv(file, "programme_id,path,genre")) {
    out.push_back({f[0], resolve(file, f[1]), parse_genre(f[2])});
  }
  return out;
}

void write_manifest(const fs::path& file, const Manifest& manifest) {
  std::string text = "programme_id,path,genre\n";
  for (const auto& row : manifest) {
    text += row.programme_id + "," + relative_to(file, row.path) + "," +
            std::string(genre_name(row.genre)) + "\n";
  }
  io::write_file_atomic(file, text);
}

ClipManifest read_clip_manifest(const fs::path& file) {
  ClipManifest out;
  for (auto& f : read_csv(file, "clip_id,path,event")) {
    const long long event = io::parse_int(f[2]);
    if (event < 0) fail(ErrorKind::kFormat, "negative event id in " + file.string());
    out.push_back({f[0], resolve(file, f[1]), static_cast<int>(event)});
  }
  return out;
}

void write_clip_manifest(const fs::path& file, const ClipManifest& clips) {
  std::string text = "clip_id,path,event\n";
  for (const auto& row : clips) {
    text += row.clip_id + "," + relative_to(file, row.path) + "," + std::to_string(row.event) +
            "\n";
  }
  io::write_file_atomic(file, text);
}

}  // namespace genrestat
