#include "genrestat/synthkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numbers>
#include <random>

#include <json.hpp>

#include "genrestat/error.hpp"
#include "genrestat/genres.hpp"
#include "genrestat/io.hpp"
#include "genrestat/rng.hpp"
#include "genrestat/wav.hpp"

namespace genrestat::synth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNyquist = kPipelineRate / 2.0;
constexpr double kMaxHarmonicHz = 14000.0;
constexpr int kMaxHarmonics = 8;
constexpr std::size_t kFilterWarmup = 4096;

struct Biquad {
  double b0, b1, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  // Band-pass with 0 dB peak gain.
  static Biquad bandpass(double center_hz, double q) {
    const double w0 = kTwoPi * center_hz / kPipelineRate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    return {alpha / a0, 0.0, -alpha / a0, -2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};
  }

  double step(double x) {
    const double y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

std::vector<double> band_noise(std::size_t n, double center_hz, double bandwidth_hz, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double q = center_hz / std::max(bandwidth_hz, 1.0);
  Biquad first = Biquad::bandpass(center_hz, q);
  Biquad second = Biquad::bandpass(center_hz, q);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n + kFilterWarmup; ++i) {
    const double y = second.step(first.step(gauss(rng)));
    if (i >= kFilterWarmup) out[i - kFilterWarmup] = y;
  }
  return out;
}

void check_band(const EventSignature& sig, double low, double high) {
  if (!(low > 0.0) || !(high < kNyquist)) {
    fail(ErrorKind::kInvalidSignature,
         "event " + std::to_string(sig.event_id) + " occupies [" + std::to_string(low) + ", " +
             std::to_string(high) + "] Hz, outside (0, 16000)");
  }
}

std::pair<double, double> band_of(const EventSignature& sig, double center) {
  switch (sig.kind) {
    case EventKind::kBandNoise:
    case EventKind::kAmNoise:
    case EventKind::kChirp:
      return {center - sig.bandwidth_hz / 2.0, center + sig.bandwidth_hz / 2.0};
    default:
      return {center, center};
  }
}

int sample_index(const std::vector<double>& weights, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding slack above the final cumulative sum.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

template <typename Fn>
void parallel_for_each(std::size_t n, Fn&& fn) {
  std::exception_ptr first_error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(genrestat_synth_error)
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  switch (kind) {
    case EventKind::kPureTone: return "pure_tone";
    case EventKind::kHarmonicStack: return "harmonic_stack";
    case EventKind::kBandNoise: return "band_noise";
    case EventKind::kChirp: return "chirp";
    case EventKind::kAmNoise: return "am_noise";
  }
  return "pure_tone";
}

EventKind parse_event_kind(std::string_view text) {
  for (EventKind k : {EventKind::kPureTone, EventKind::kHarmonicStack, EventKind::kBandNoise,
                      EventKind::kChirp, EventKind::kAmNoise}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorKind::kFormat, "unknown event kind '" + std::string(text) + "'");
}

Waveform gen_event_clip(const EventSignature& sig, double duration_s, std::uint64_t seed) {
  require(duration_s > 0.0, "gen_event_clip: duration must be positive");
  const auto [low, high] = band_of(sig, sig.center_hz);
  check_band(sig, low, high);

  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(sig.event_id)));
  const double gain = 0.5 + 0.5 * uniform01(rng);
  double center = sig.center_hz * (1.0 + 0.03 * (2.0 * uniform01(rng) - 1.0));
  {
    // Keep the jittered band inside the valid range.
    const auto [lo, hi] = band_of(sig, center);
    if (lo <= 0.0 || hi >= kNyquist) center = sig.center_hz;
  }
  const double phase = kTwoPi * uniform01(rng);

  const auto n = static_cast<std::size_t>(std::llround(duration_s * kPipelineRate));
  std::vector<double> x(n, 0.0);
  const double dt = 1.0 / kPipelineRate;
  switch (sig.kind) {
    case EventKind::kPureTone:
      for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(kTwoPi * center * i * dt + phase);
      break;
    case EventKind::kHarmonicStack: {
      const int harmonics =
          std::clamp(static_cast<int>(kMaxHarmonicHz / center), 1, kMaxHarmonics);
      for (int h = 1; h <= harmonics; ++h) {
        const double ph = kTwoPi * uniform01(rng);
        const double w = kTwoPi * center * h * dt;
        for (std::size_t i = 0; i < n; ++i) x[i] += std::sin(w * i + ph) / h;
      }
      break;
    }
    case EventKind::kBandNoise:
      x = band_noise(n, center, sig.bandwidth_hz, rng);
      break;
    case EventKind::kChirp: {
      const double f0 = center - sig.bandwidth_hz / 2.0;
      const double sweep = sig.bandwidth_hz / duration_s;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i * dt;
        x[i] = std::sin(kTwoPi * (f0 * t + 0.5 * sweep * t * t) + phase);
      }
      break;
    }
    case EventKind::kAmNoise: {
      x = band_noise(n, center, sig.bandwidth_hz, rng);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] *= 1.0 + 0.8 * std::sin(kTwoPi * sig.modulation_hz * i * dt + phase);
      }
      break;
    }
  }

  double energy = 0.0;
  for (double v : x) energy += v * v;
  const double rms = n > 0 ? std::sqrt(energy / static_cast<double>(n)) : 0.0;
  const double target_rms = 0.12 * gain;
  const double scale = rms > 0.0 ? target_rms / rms : 0.0;
  const double noise_sigma = target_rms * std::pow(10.0, -kClipSnrDb / 20.0);
  std::normal_distribution<double> gauss(0.0, noise_sigma);

  Waveform w;
  w.sample_rate = kPipelineRate;
  w.source_id = "event" + std::to_string(sig.event_id);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    w.samples[i] = static_cast<float>(std::clamp(x[i] * scale + gauss(rng), -1.0, 1.0));
  }
  return w;
}

std::vector<EventSignature> default_signatures(int n_events) {
  require(n_events >= 2, "default_signatures: need at least two events");
  constexpr double lo = 160.0, hi = 9000.0;
  std::vector<EventSignature> out;
  for (int i = 0; i < n_events; ++i) {
    const double f = lo * std::pow(hi / lo, static_cast<double>(i) / (n_events - 1));
    EventSignature s;
    s.event_id = i;
    s.kind = static_cast<EventKind>(i % 5);
    s.center_hz = f;
    s.bandwidth_hz = s.kind == EventKind::kChirp ? 0.3 * f : 0.25 * f;
    s.modulation_hz = 4.0 + (i % 3);
    if (s.kind == EventKind::kPureTone || s.kind == EventKind::kHarmonicStack) s.bandwidth_hz = 0.0;
    out.push_back(s);
  }
  return out;
}

std::vector<GenreRecipe> default_recipes(int n_events) {
  require(n_events >= kGenreCount + 2, "default_recipes: need at least 11 events");
  const int secondary_pool = n_events - kGenreCount;
  std::vector<GenreRecipe> out;
  for (int g = 0; g < kGenreCount; ++g) {
    GenreRecipe r;
    r.genre = g;
    // 12 to 24 segments: enough that a 60% subsample still sees the mixture.
    r.min_duration_s = 60.0;
    r.max_duration_s = 120.0;
    const int primary = g;
    const int secondary = kGenreCount + g % secondary_pool;
    r.event_mixture.assign(static_cast<std::size_t>(n_events),
                           0.25 / static_cast<double>(n_events - 2));
    r.event_mixture[static_cast<std::size_t>(primary)] = 0.5;
    r.event_mixture[static_cast<std::size_t>(secondary)] = 0.25;
    out.push_back(std::move(r));
  }
  return out;
}

void validate(const GenreRecipe& recipe, std::size_t n_events) {
  require(recipe.genre >= 0 && recipe.genre < kGenreCount, "recipe: genre code out of range");
  require(recipe.event_mixture.size() == n_events,
          "recipe: mixture length " + std::to_string(recipe.event_mixture.size()) +
              " does not match event count " + std::to_string(n_events));
  double total = 0.0;
  for (double p : recipe.event_mixture) {
    require(p >= 0.0 && std::isfinite(p), "recipe: mixture entries must be finite and non-negative");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-9, "recipe: mixture must sum to 1");
  require(recipe.min_duration_s >= kSegmentSeconds, "recipe: minimum duration below 5 s");
  require(recipe.max_duration_s >= recipe.min_duration_s, "recipe: duration range inverted");
  require(std::floor(recipe.max_duration_s / kSegmentSeconds) >=
              std::ceil(recipe.min_duration_s / kSegmentSeconds),
          "recipe: duration range holds no whole number of 5-second clips");
}

std::vector<int> plan_programme(const GenreRecipe& recipe, std::uint64_t seed) {
  validate(recipe, recipe.event_mixture.size());
  Rng rng(seed);
  const auto lo = static_cast<long long>(std::ceil(recipe.min_duration_s / kSegmentSeconds));
  const auto hi = static_cast<long long>(std::floor(recipe.max_duration_s / kSegmentSeconds));
  const auto span = static_cast<std::uint64_t>(hi - lo + 1);
  const long long clips = lo + static_cast<long long>(rng() % span);
  std::vector<int> events(static_cast<std::size_t>(clips));
  for (int& e : events) e = sample_index(recipe.event_mixture, rng);
  return events;
}

Waveform render_programme(const std::vector<int>& events,
                          const std::vector<EventSignature>& signatures, std::uint64_t seed) {
  Waveform w;
  w.samples.reserve(events.size() * kSegmentSamples);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto e = static_cast<std::size_t>(events[i]);
    require(e < signatures.size(), "render_programme: event id without signature");
    const Waveform clip = gen_event_clip(signatures[e], kSegmentSeconds, mix_seed(seed, i));
    w.samples.insert(w.samples.end(), clip.samples.begin(), clip.samples.end());
  }
  return w;
}

Manifest gen_corpus(const std::vector<GenreRecipe>& recipes,
                    const std::vector<EventSignature>& signatures, int programmes_per_genre,
                    std::uint64_t seed, const fs::path& out_dir) {
  require(recipes.size() >= 2, "gen_corpus: at least two recipes are required");
  require(programmes_per_genre >= 1, "gen_corpus: programmes_per_genre must be >= 1");
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    require(signatures[i].event_id == static_cast<int>(i), "gen_corpus: event ids must be 0..M-1");
  }
  for (const auto& r : recipes) validate(r, signatures.size());

  const fs::path audio_dir = out_dir / "audio";
  io::ensure_directory(audio_dir);

  Manifest manifest;
  for (std::size_t r = 0; r < recipes.size(); ++r) {
    for (int p = 0; p < programmes_per_genre; ++p) {
      char id[32];
      std::snprintf(id, sizeof id, "prog%05zu", manifest.size());
      manifest.push_back({id, audio_dir / (std::string(id) + ".wav"), recipes[r].genre});
    }
  }
  parallel_for_each(manifest.size(), [&](std::size_t i) {
    const auto& recipe = recipes[i / static_cast<std::size_t>(programmes_per_genre)];
    const std::uint64_t programme_seed = mix_seed(seed, i);
    const auto events = plan_programme(recipe, programme_seed);
    const Waveform w = render_programme(events, signatures, mix_seed(programme_seed, 1));
    write_wav(manifest[i].path, w.samples, 1, kPipelineRate);
  });
  write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

ClipManifest gen_event_clips(const std::vector<EventSignature>& signatures, int clips_per_event,
                             std::uint64_t seed, const fs::path& out_dir) {
  require(clips_per_event >= 1, "gen_event_clips: clips_per_event must be >= 1");
  const fs::path clip_dir = out_dir / "clips";
  io::ensure_directory(clip_dir);
  ClipManifest clips;
  for (const auto& sig : signatures) {
    for (int c = 0; c < clips_per_event; ++c) {
      char id[32];
      std::snprintf(id, sizeof id, "e%03d_%04d", sig.event_id, c);
      clips.push_back({id, clip_dir / (std::string(id) + ".wav"), sig.event_id});
    }
  }
  parallel_for_each(clips.size(), [&](std::size_t i) {
    const auto& sig = signatures[static_cast<std::size_t>(clips[i].event)];
    const Waveform w = gen_event_clip(sig, kSegmentSeconds, mix_seed(seed ^ 0xC11Bu, i));
    write_wav(clips[i].path, w.samples, 1, kPipelineRate);
  });
  write_clip_manifest(out_dir / "clips.csv", clips);
  return clips;
}

RecipeBook read_recipe_book(const fs::path& path) {
  RecipeBook book;
  try {
    const json j = json::parse(io::read_file(path));
    for (const auto& e : j.at("events")) {
      EventSignature s;
      s.event_id = e.at("event_id").get<int>();
      s.kind = parse_event_kind(e.at("kind").get<std::string>());
      s.center_hz = e.at("center_hz").get<double>();
      s.bandwidth_hz = e.value("bandwidth_hz", 0.0);
      s.modulation_hz = e.value("modulation_hz", 0.0);
      book.events.push_back(s);
    }
    for (const auto& r : j.at("recipes")) {
      GenreRecipe g;
      const auto& genre = r.at("genre");
      g.genre = genre.is_number_integer() ? genre.get<int>() : parse_genre(genre.get<std::string>());
      g.event_mixture = r.at("mixture").get<std::vector<double>>();
      const auto duration = r.at("duration_s").get<std::vector<double>>();
      if (duration.size() != 2) fail(ErrorKind::kFormat, "duration_s must be [min, max]");
      g.min_duration_s = duration[0];
      g.max_duration_s = duration[1];
      book.recipes.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  return book;
}

std::string recipe_book_json(const RecipeBook& book) {
  json j;
  j["events"] = json::array();
  for (const auto& s : book.events) {
    j["events"].push_back({{"event_id", s.event_id},
                           {"kind", std::string(to_string(s.kind))},
                           {"center_hz", s.center_hz},
                           {"bandwidth_hz", s.bandwidth_hz},
                           {"modulation_hz", s.modulation_hz}});
  }
  j["recipes"] = json::array();
  for (const auto& r : book.recipes) {
    j["recipes"].push_back({{"genre", std::string(genre_name(r.genre))},
                            {"mixture", r.event_mixture},
                            {"duration_s", {r.min_duration_s, r.max_duration_s}}});
  }
  return j.dump(2) + "\n";
}

}  // namespace genrestat::synth
