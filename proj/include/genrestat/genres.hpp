#pragma once

#include <array>
#include <string>
#include <string_view>

namespace genrestat {

// The nine programme genres, coded 0-8 in this order.
enum class Genre : int {
  kChildrens = 0,
  kDrama,
  kFactual,
  kMusic,
  kSport,
  kWeather,
  kComedy,
  kEntertainment,
  kNews,
};

inline constexpr int kGenreCount = 9;

inline constexpr std::array<std::string_view, kGenreCount> kGenreNames = {
    "Children's", "Drama", "Factual", "Music", "Sport",
    "Weather", "Comedy", "Entertainment", "News"};

std::string_view genre_name(int code);

// Accepts either a genre name (case-insensitive) or its integer code.
int parse_genre(std::string_view text);

}  // namespace genrestat
