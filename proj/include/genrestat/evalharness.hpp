#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrestat/classifiers.hpp"
#include "genrestat/embedding.hpp"
#include "genrestat/genres.hpp"
#include "genrestat/manifest.hpp"
#include "genrestat/matrix.hpp"
#include "genrestat/probabilities.hpp"

// Cross-validation protocol, accuracy / confusion reporting and the
// segment-fraction ablation.
namespace genrestat::eval {

inline constexpr int kDefaultFolds = 14;

struct FoldSplit {
  int folds = kDefaultFolds;
  std::uint64_t seed = 0;
  std::map<std::string, int> assignment;  // programme_id -> fold

  int fold_of(const std::string& programme_id) const;
};

// Stratified by genre: within each genre, programmes are ordered by id,
// shuffled with the seed and dealt round-robin, continuing from the fold
// where the previous genre stopped. Per-genre fold counts differ by <= 1.
FoldSplit make_folds(const Manifest& manifest, int folds, std::uint64_t seed);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct Confusion {
  Matrix counts;   // truth x predicted
  Matrix percent;  // rows normalised to 100
  std::vector<bool> empty_rows;
};

Confusion confusion(std::span<const int> predicted, std::span<const int> truth, std::size_t n_classes);

struct AblationPoint {
  double fraction = 1.0;
  double mean_accuracy = 0.0;
  std::vector<double> fold_accuracy;
};

struct EvaluationReport {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  Confusion pooled;
  // Per programme, sorted by id.
  std::vector<std::string> programme_ids;
  std::vector<int> truth;
  std::vector<int> predicted;

  std::string embedding_kind;
  int k = 0;
  classifiers::ClassifierSpec spec;
  int folds = kDefaultFolds;
  std::uint64_t fold_seed = 0;
  std::vector<AblationPoint> ablation;
};

// Fold f trains on every other fold with seed mix_seed(spec.seed, f) and is
// evaluated on fold f. Folds run in parallel; the report is schedule- and
// manifest-order independent.
EvaluationReport cross_validate(const Manifest& manifest,
                                std::span<const embedding::ProgrammeEmbedding> embeddings,
                                const classifiers::ClassifierSpec& spec, const FoldSplit& folds,
                                std::size_t n_classes = kGenreCount);

// Trains each fold once on full-programme embeddings, then evaluates test
// programmes on ceil(f S) segments sampled without replacement per fraction.
std::vector<AblationPoint> segment_ablation(const Manifest& manifest,
                                            std::span<const SegmentProbabilities> probabilities,
                                            embedding::Kind kind, int k,
                                            const classifiers::ClassifierSpec& spec, const FoldSplit& folds,
                                            std::span<const double> fractions, std::uint64_t seed,
                                            std::size_t n_classes = kGenreCount);

// Segments kept for fraction f of S, seeded per programme.
std::vector<std::size_t> sample_segments(std::size_t segments, double fraction, const std::string& programme_id,
                                         std::uint64_t seed);

// Accuracy reported on the BBC programme corpus for a (classifier,
// embedding kind, k) configuration, shown next to our numbers for
// comparison only.
std::optional<double> published_accuracy(classifiers::Kind classifier, embedding::Kind kind, int k);

nlohmann::json report_json(const EvaluationReport& report, const nlohmann::json& run_config);
std::string report_csv(const EvaluationReport& report);
std::string ablation_csv(std::span<const AblationPoint> curve);

}  // namespace genrestat::eval
