#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrestat/audio.hpp"
#include "genrestat/manifest.hpp"

// Deterministic synthetic event clips and multi-event "programmes". Stands in
// for a large tagged sound-event corpus and a broadcast archive so that the
// whole pipeline can be trained and tested at desk scale.
namespace genrestat::synth {

enum class EventKind { kPureTone, kHarmonicStack, kBandNoise, kChirp, kAmNoise };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct EventSignature {
  int event_id = 0;
  EventKind kind = EventKind::kPureTone;
  double center_hz = 1000.0;
  // Noise bandwidth, or the sweep span of a chirp.
  double bandwidth_hz = 0.0;
  // Amplitude-modulation rate of kAmNoise.
  double modulation_hz = 0.0;
};

struct GenreRecipe {
  int genre = 0;
  std::vector<double> event_mixture;
  double min_duration_s = 5.0;
  double max_duration_s = 5.0;
};

// Signal-to-noise ratio of every generated clip.
inline constexpr double kClipSnrDb = 20.0;

// Renders `duration_s` seconds of the signature at 32 kHz plus white noise at
// -20 dB. Per-clip gain and a small centre-frequency jitter are drawn from
// `seed`; identical arguments give bit-identical buffers.
Waveform gen_event_clip(const EventSignature& sig, double duration_s, std::uint64_t seed);

// M signatures with log-spaced centres between 160 Hz and 9 kHz, cycling
// through the five event kinds.
std::vector<EventSignature> default_signatures(int n_events = 16);

// Nine recipes, one per genre: a dominant event (mass 0.5), a secondary event
// (0.25) and the remaining mass spread evenly; programmes last 60-120 s.
std::vector<GenreRecipe> default_recipes(int n_events = 16);

void validate(const GenreRecipe& recipe, std::size_t n_events);

// Event sequence of one programme: a clip count drawn uniformly from the
// recipe's duration range (in whole 5-second clips), then i.i.d. event ids.
std::vector<int> plan_programme(const GenreRecipe& recipe, std::uint64_t seed);

// Concatenates one 5-second clip per planned event.
Waveform render_programme(const std::vector<int>& events,
                          const std::vector<EventSignature>& signatures, std::uint64_t seed);

// Writes programmes_per_genre programmes for every recipe under out_dir/audio
// plus out_dir/manifest.csv, and returns the manifest.
Manifest gen_corpus(const std::vector<GenreRecipe>& recipes,
                    const std::vector<EventSignature>& signatures, int programmes_per_genre,
                    std::uint64_t seed, const std::filesystem::path& out_dir);

// Writes clips_per_event labelled 5-second clips per signature under
// out_dir/clips plus out_dir/clips.csv.
ClipManifest gen_event_clips(const std::vector<EventSignature>& signatures, int clips_per_event,
                             std::uint64_t seed, const std::filesystem::path& out_dir);

// JSON recipe file: {"events": [...], "recipes": [...]}.
struct RecipeBook {
  std::vector<EventSignature> events;
  std::vector<GenreRecipe> recipes;
};
RecipeBook read_recipe_book(const std::filesystem::path& path);
std::string recipe_book_json(const RecipeBook& book);

}  // namespace genrestat::synth
