#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genrestat/probabilities.hpp"

// Programme-level embeddings built from top-k sound-event tags.
namespace genrestat::embedding {

enum class Kind { kNum, kProb, kCombined };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view text);

struct ProgrammeEmbedding {
  std::vector<double> values;  // M entries (num, prob) or 2M (combined)
  Kind kind = Kind::kNum;
  int k = 1;
  std::string programme_id;
  int genre = -1;  // -1 when unknown

  bool operator==(const ProgrammeEmbedding&) const = default;
};

// Indices of the k largest entries in ascending index order. Ties go to the
// lower index.
std::vector<std::size_t> topk_tags(std::span<const float> row, int k);

// n_i / (k S), where n_i counts the segments whose top-k set contains i.
ProgrammeEmbedding mean_num(const SegmentProbabilities& sp, int k);
// Probability mass of event i summed over the segments that tag it,
// normalised to sum to one.
ProgrammeEmbedding mean_prob(const SegmentProbabilities& sp, int k);
// mean_num ++ mean_prob.
ProgrammeEmbedding combined(const SegmentProbabilities& sp, int k);

ProgrammeEmbedding embed(const SegmentProbabilities& sp, Kind kind, int k);

// One embedding per programme, in input order. Programmes are processed in
// parallel; the result does not depend on the schedule.
std::vector<ProgrammeEmbedding> embed_all(std::span<const SegmentProbabilities> programmes, Kind kind,
                                          int k);

// CSV with header programme_id,genre,kind,k,v0..v{D-1}; values use 17
// significant digits so a round trip is exact.
std::string format_embeddings(std::span<const ProgrammeEmbedding> rows);
std::vector<ProgrammeEmbedding> parse_embeddings(std::string_view text, const std::string& name);
void write_embeddings(const std::filesystem::path& path, std::span<const ProgrammeEmbedding> rows);
std::vector<ProgrammeEmbedding> read_embeddings(const std::filesystem::path& path);

}  // namespace genrestat::embedding
