#include "genrestat/embedding.hpp"

#include <algorithm>
#include <exception>
#include <numeric>
#include <sstream>

#include "genrestat/error.hpp"
#include "genrestat/genres.hpp"
#include "genrestat/io.hpp"

namespace genrestat::embedding {

namespace {

void check_k(const SegmentProbabilities& sp, int k) {
  if (sp.segments == 0) fail(ErrorKind::kEmptyProgramme, sp.programme_id + ": programme has no segments");
  require(k >= 1 && static_cast<std::size_t>(k) <= sp.events,
          "k must satisfy 1 <= k <= M (k = " + std::to_string(k) + ", M = " + std::to_string(sp.events) + ")");
}

ProgrammeEmbedding blank(const SegmentProbabilities& sp, Kind kind, int k) {
  ProgrammeEmbedding e;
  e.kind = kind;
  e.k = k;
  e.programme_id = sp.programme_id;
  return e;
}

}  // namespace

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kNum: return "num";
    case Kind::kProb: return "prob";
    case Kind::kCombined: return "combined";
  }
  return "num";
}

Kind parse_kind(std::string_view text) {
  if (text == "num") return Kind::kNum;
  if (text == "prob") return Kind::kProb;
  if (text == "combined") return Kind::kCombined;
  fail(ErrorKind::kFormat, "unknown embedding kind '" + std::string(text) + "' (expected num, prob or combined)");
}

std::vector<std::size_t> topk_tags(std::span<const float> row, int k) {
  require(k >= 1 && static_cast<std::size_t>(k) <= row.size(),
          "topk_tags: k must satisfy 1 <= k <= M (k = " + std::to_string(k) + ", M = " +
              std::to_string(row.size()) + ")");
  std::vector<std::size_t> idx(row.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto kk = static_cast<std::size_t>(k);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk), idx.end(),
                    [&](std::size_t a, std::size_t b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  idx.resize(kk);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ProgrammeEmbedding mean_num(const SegmentProbabilities& sp, int k) {
  check_k(sp, k);
  std::vector<std::size_t> counts(sp.events, 0);
  for (std::size_t s = 0; s < sp.segments; ++s) {
    for (std::size_t i : topk_tags(sp.row(s), k)) ++counts[i];
  }
  ProgrammeEmbedding e = blank(sp, Kind::kNum, k);
  const double total = static_cast<double>(k) * static_cast<double>(sp.segments);
  e.values.reserve(sp.events);
  for (std::size_t n : counts) e.values.push_back(static_cast<double>(n) / total);
  return e;
}

ProgrammeEmbedding mean_prob(const SegmentProbabilities& sp, int k) {
  check_k(sp, k);
  ProgrammeEmbedding e = blank(sp, Kind::kProb, k);
  e.values.assign(sp.events, 0.0);
  for (std::size_t s = 0; s < sp.segments; ++s) {
    const auto row = sp.row(s);
    for (std::size_t i : topk_tags(row, k)) e.values[i] += row[i];
  }
  const double total = std::accumulate(e.values.begin(), e.values.end(), 0.0);
  if (!(total > 0.0)) {
    fail(ErrorKind::kInvariantViolation, sp.programme_id + ": tagged probability mass is zero");
  }
  for (double& v : e.values) v /= total;
  return e;
}

ProgrammeEmbedding combined(const SegmentProbabilities& sp, int k) {
  ProgrammeEmbedding e = mean_num(sp, k);
  const ProgrammeEmbedding p = mean_prob(sp, k);
  e.kind = Kind::kCombined;
  e.values.insert(e.values.end(), p.values.begin(), p.values.end());
  return e;
}

ProgrammeEmbedding embed(const SegmentProbabilities& sp, Kind kind, int k) {
  switch (kind) {
    case Kind::kNum: return mean_num(sp, k);
    case Kind::kProb: return mean_prob(sp, k);
    case Kind::kCombined: return combined(sp, k);
  }
  return mean_num(sp, k);
}

std::vector<ProgrammeEmbedding> embed_all(std::span<const SegmentProbabilities> programmes, Kind kind,
                                          int k) {
  std::vector<ProgrammeEmbedding> out(programmes.size());
  std::exception_ptr error;
  const auto n = static_cast<std::ptrdiff_t>(programmes.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[static_cast<std::size_t>(i)] = embed(programmes[static_cast<std::size_t>(i)], kind, k);
    } catch (...) {
#pragma omp critical(genrestat_embed_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

std::string format_embeddings(std::span<const ProgrammeEmbedding> rows) {
  std::size_t dim = rows.empty() ? 0 : rows.front().values.size();
  std::string out = "programme_id,genre,kind,k";
  for (std::size_t d = 0; d < dim; ++d) out += ",v" + std::to_string(d);
  out += '\n';
  for (const auto& e : rows) {
    require(e.values.size() == dim, "format_embeddings: rows have different dimensions");
    out += e.programme_id;
    out += ',';
    if (e.genre >= 0) out += genre_name(e.genre);
    out += ',';
    out += to_string(e.kind);
    out += ',' + std::to_string(e.k);
    for (double v : e.values) out += ',' + io::format_double(v);
    out += '\n';
  }
  return out;
}

std::vector<ProgrammeEmbedding> parse_embeddings(std::string_view text, const std::string& name) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kFormat, name + ": empty embedding file");
  const auto header = io::split_csv_line(line);
  if (header.size() < 4 || header[0] != "programme_id" || header[1] != "genre" || header[2] != "kind" ||
      header[3] != "k") {
    fail(ErrorKind::kFormat, name + ": expected header programme_id,genre,kind,k,v0..");
  }
  const std::size_t dim = header.size() - 4;
  for (std::size_t d = 0; d < dim; ++d) {
    if (header[4 + d] != "v" + std::to_string(d)) fail(ErrorKind::kFormat, name + ": bad value column '" + header[4 + d] + "'");
  }
  std::vector<ProgrammeEmbedding> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != header.size()) {
      fail(ErrorKind::kFormat, name + ":" + std::to_string(line_no) + ": expected " +
                                   std::to_string(header.size()) + " fields");
    }
    ProgrammeEmbedding e;
    e.programme_id = f[0];
    e.genre = f[1].empty() ? -1 : parse_genre(f[1]);
    e.kind = parse_kind(f[2]);
    e.k = static_cast<int>(io::parse_int(f[3]));
    e.values.reserve(dim);
    for (std::size_t d = 0; d < dim; ++d) e.values.push_back(io::parse_double(f[4 + d]));
    rows.push_back(std::move(e));
  }
  return rows;
}

void write_embeddings(const std::filesystem::path& path, std::span<const ProgrammeEmbedding> rows) {
  io::write_file_atomic(path, format_embeddings(rows));
}

std::vector<ProgrammeEmbedding> read_embeddings(const std::filesystem::path& path) {
  return parse_embeddings(io::read_file(path), path.string());
}

}  // namespace genrestat::embedding
