#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace genrestat::io {

// Writes `bytes` to `path` through a sibling temporary file and a rename, so
// readers never observe a partially written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

void ensure_directory(const std::filesystem::path& dir);

std::vector<std::string> split_csv_line(std::string_view line);

// Shortest round-trip decimal text for a double (17 significant digits).
std::string format_double(double value);
double parse_double(std::string_view text);
long long parse_int(std::string_view text);

// Little-endian binary helpers for the SEGP / LMEL / weight-blob formats.
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
std::uint32_t get_u32(const unsigned char* p);
float get_f32(const unsigned char* p);

}  // namespace genrestat::io
