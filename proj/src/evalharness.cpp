#include "genrestat/evalharness.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <exception>
#include <numeric>
#include <set>
#include <unordered_map>

#include "genrestat/error.hpp"
#include "genrestat/io.hpp"
#include "genrestat/rng.hpp"

namespace genrestat::eval {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Manifest rows sorted by programme id, so results do not depend on row order.
std::vector<const ManifestRow*> sorted_rows(const Manifest& manifest) {
  std::vector<const ManifestRow*> rows;
  rows.reserve(manifest.size());
  std::set<std::string> seen;
  for (const auto& r : manifest) {
    require(seen.insert(r.programme_id).second, "manifest lists programme '" + r.programme_id + "' twice");
    rows.push_back(&r);
  }
  std::sort(rows.begin(), rows.end(),
            [](const ManifestRow* a, const ManifestRow* b) { return a->programme_id < b->programme_id; });
  return rows;
}

struct Dataset {
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::vector<int> fold;
  Matrix x;
};

Dataset assemble(const Manifest& manifest, std::span<const embedding::ProgrammeEmbedding> embeddings,
                 const FoldSplit& folds, std::size_t n_classes) {
  std::unordered_map<std::string, const embedding::ProgrammeEmbedding*> by_id;
  for (const auto& e : embeddings) by_id[e.programme_id] = &e;
  const auto rows = sorted_rows(manifest);
  require(!rows.empty(), "cross-validation needs a non-empty manifest");
  Dataset d;
  std::size_t dim = 0;
  for (const auto* r : rows) {
    const auto it = by_id.find(r->programme_id);
    if (it == by_id.end()) {
      fail(ErrorKind::kIncompleteDataset, "no embedding for programme '" + r->programme_id + "'");
    }
    if (d.ids.empty()) dim = it->second->values.size();
    if (it->second->values.size() != dim || dim == 0) {
      fail(ErrorKind::kInvalidInput, "embedding of '" + r->programme_id + "' has dimension " +
                                         std::to_string(it->second->values.size()) + ", expected " +
                                         std::to_string(dim));
    }
    require(r->genre >= 0 && static_cast<std::size_t>(r->genre) < n_classes,
            "genre of '" + r->programme_id + "' outside [0, n_classes)");
    d.ids.push_back(r->programme_id);
    d.labels.push_back(r->genre);
    d.fold.push_back(folds.fold_of(r->programme_id));
  }
  d.x = Matrix(d.ids.size(), dim);
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    const auto& v = by_id.at(d.ids[i])->values;
    std::copy(v.begin(), v.end(), d.x.row(i).begin());
  }
  return d;
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(x.row(rows[i]).begin(), x.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

struct FoldModel {
  classifiers::FittedModel model;
  std::vector<std::size_t> test;
};

FoldModel fit_fold(const Dataset& d, const classifiers::ClassifierSpec& spec, int f, std::size_t n_classes) {
  std::vector<std::size_t> train;
  FoldModel fm;
  for (std::size_t i = 0; i < d.ids.size(); ++i) (d.fold[i] == f ? fm.test : train).push_back(i);
  require(!fm.test.empty() && !train.empty(), "fold " + std::to_string(f) + " has an empty train or test side");
  std::vector<int> y;
  for (std::size_t i : train) y.push_back(d.labels[i]);
  classifiers::ClassifierSpec fold_spec = spec;
  fold_spec.seed = mix_seed(spec.seed, static_cast<std::uint64_t>(f));
  fm.model = classifiers::fit(fold_spec, select_rows(d.x, train), y, n_classes);
  return fm;
}

// Runs body(f) for every fold in parallel and rethrows the first failure.
template <typename Body>
void for_each_fold(int folds, Body&& body) {
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (int f = 0; f < folds; ++f) {
    try {
      body(f);
    } catch (...) {
#pragma omp critical(genrestat_fold_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int FoldSplit::fold_of(const std::string& programme_id) const {
  const auto it = assignment.find(programme_id);
  require(it != assignment.end(), "programme '" + programme_id + "' has no fold assignment");
  return it->second;
}

FoldSplit make_folds(const Manifest& manifest, int folds, std::uint64_t seed) {
  require(folds >= 2, "make_folds: need at least 2 folds (got " + std::to_string(folds) + ")");
  std::map<int, std::vector<std::string>> by_genre;
  for (const auto* r : sorted_rows(manifest)) by_genre[r->genre].push_back(r->programme_id);
  FoldSplit split;
  split.folds = folds;
  split.seed = seed;
  int offset = 0;
  for (auto& [genre, ids] : by_genre) {
    if (ids.size() < static_cast<std::size_t>(folds)) {
      fail(ErrorKind::kInsufficientData, "genre " + std::to_string(genre) + " has " + std::to_string(ids.size()) +
                                             " programmes, fewer than " + std::to_string(folds) + " folds");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(genre)));
    for (std::size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng() % i]);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      split.assignment[ids[i]] = static_cast<int>((static_cast<std::size_t>(offset) + i) % static_cast<std::size_t>(folds));
    }
    offset = static_cast<int>((static_cast<std::size_t>(offset) + ids.size()) % static_cast<std::size_t>(folds));
  }
  return split;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require(predicted.size() == truth.size(), "accuracy: prediction and truth lengths differ");
  require(!truth.empty(), "accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(truth.size());
}

Confusion confusion(std::span<const int> predicted, std::span<const int> truth, std::size_t n_classes) {
  require(predicted.size() == truth.size(), "confusion: prediction and truth lengths differ");
  Confusion c{Matrix(n_classes, n_classes), Matrix(n_classes, n_classes), std::vector<bool>(n_classes, false)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require(truth[i] >= 0 && static_cast<std::size_t>(truth[i]) < n_classes && predicted[i] >= 0 &&
                static_cast<std::size_t>(predicted[i]) < n_classes,
            "confusion: label outside [0, n_classes)");
    c.counts(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i])) += 1.0;
  }
  for (std::size_t r = 0; r < n_classes; ++r) {
    const auto row = c.counts.row(r);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    c.empty_rows[r] = total == 0.0;
    if (total == 0.0) continue;
    for (std::size_t j = 0; j < n_classes; ++j) c.percent(r, j) = 100.0 * row[j] / total;
  }
  return c;
}

EvaluationReport cross_validate(const Manifest& manifest,
                                std::span<const embedding::ProgrammeEmbedding> embeddings,
                                const classifiers::ClassifierSpec& spec, const FoldSplit& folds,
                                std::size_t n_classes) {
  const Dataset d = assemble(manifest, embeddings, folds, n_classes);
  EvaluationReport report;
  report.fold_accuracy.assign(static_cast<std::size_t>(folds.folds), 0.0);
  report.programme_ids = d.ids;
  report.truth = d.labels;
  report.predicted.assign(d.ids.size(), -1);

  for_each_fold(folds.folds, [&](int f) {
    const FoldModel fm = fit_fold(d, spec, f, n_classes);
    const auto pred = classifiers::predict(fm.model, select_rows(d.x, fm.test));
    std::vector<int> truth;
    for (std::size_t j = 0; j < fm.test.size(); ++j) {
      report.predicted[fm.test[j]] = pred.labels[j];
      truth.push_back(d.labels[fm.test[j]]);
    }
    report.fold_accuracy[static_cast<std::size_t>(f)] = accuracy(pred.labels, truth);
  });

  report.mean_accuracy = mean(report.fold_accuracy);
  report.pooled = confusion(report.predicted, report.truth, n_classes);
  if (!embeddings.empty()) {
    report.embedding_kind = std::string(embedding::to_string(embeddings.front().kind));
    report.k = embeddings.front().k;
  }
  report.spec = spec;
  report.folds = folds.folds;
  report.fold_seed = folds.seed;
  return report;
}

std::vector<std::size_t> sample_segments(std::size_t segments, double fraction, const std::string& programme_id,
                                         std::uint64_t seed) {
  require(fraction > 0.0 && fraction <= 1.0, "segment fraction must lie in (0, 1]");
  const double want = std::ceil(fraction * static_cast<double>(segments) - 1e-9);
  if (want < 1.0) {
    fail(ErrorKind::kFractionTooSmall, programme_id + ": fraction " + io::format_double(fraction) +
                                           " keeps no segment of " + std::to_string(segments));
  }
  const auto keep = std::min(segments, static_cast<std::size_t>(want));
  std::vector<std::size_t> idx(segments);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (keep == segments) return idx;
  Rng rng(mix_seed(seed, fnv1a(programme_id), std::bit_cast<std::uint64_t>(fraction)));
  for (std::size_t i = 0; i < keep; ++i) std::swap(idx[i], idx[i + rng() % (segments - i)]);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<AblationPoint> segment_ablation(const Manifest& manifest,
                                            std::span<const SegmentProbabilities> probabilities,
                                            embedding::Kind kind, int k,
                                            const classifiers::ClassifierSpec& spec, const FoldSplit& folds,
                                            std::span<const double> fractions, std::uint64_t seed,
                                            std::size_t n_classes) {
  require(!fractions.empty(), "segment_ablation: no fractions given");
  for (double f : fractions) require(f > 0.0 && f <= 1.0, "segment_ablation: fractions must lie in (0, 1]");
  std::unordered_map<std::string, const SegmentProbabilities*> by_id;
  for (const auto& sp : probabilities) by_id[sp.programme_id] = &sp;
  for (const auto& r : manifest) {
    if (!by_id.contains(r.programme_id)) {
      fail(ErrorKind::kIncompleteDataset, "no probabilities for programme '" + r.programme_id + "'");
    }
  }
  const auto full = embedding::embed_all(probabilities, kind, k);
  const Dataset d = assemble(manifest, full, folds, n_classes);

  // Test embeddings per fraction, computed up front so every fold sees the
  // same subsample of a programme.
  std::vector<Matrix> reduced(fractions.size(), Matrix(d.ids.size(), d.x.cols()));
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
      const SegmentProbabilities& sp = *by_id.at(d.ids[i]);
      const auto keep = sample_segments(sp.segments, fractions[fi], sp.programme_id, seed);
      SegmentProbabilities sub;
      sub.programme_id = sp.programme_id;
      sub.events = sp.events;
      sub.segments = keep.size();
      for (std::size_t s : keep) sub.probs.insert(sub.probs.end(), sp.row(s).begin(), sp.row(s).end());
      const auto e = embedding::embed(sub, kind, k);
      std::copy(e.values.begin(), e.values.end(), reduced[fi].row(i).begin());
    }
  }

  std::vector<AblationPoint> curve(fractions.size());
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    curve[fi].fraction = fractions[fi];
    curve[fi].fold_accuracy.assign(static_cast<std::size_t>(folds.folds), 0.0);
  }
  for_each_fold(folds.folds, [&](int f) {
    const FoldModel fm = fit_fold(d, spec, f, n_classes);
    std::vector<int> truth;
    for (std::size_t i : fm.test) truth.push_back(d.labels[i]);
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      const auto pred = classifiers::predict(fm.model, select_rows(reduced[fi], fm.test));
      curve[fi].fold_accuracy[static_cast<std::size_t>(f)] = accuracy(pred.labels, truth);
    }
  });
  for (auto& p : curve) p.mean_accuracy = mean(p.fold_accuracy);
  return curve;
}

std::optional<double> published_accuracy(classifiers::Kind classifier, embedding::Kind kind, int k) {
  using classifiers::Kind;
  // Rows LR, SVM, DT, RF, MLP; columns num/prob for k = 1, 4, 6, 8, 10.
  static constexpr std::array<std::array<double, 10>, 5> kTable = {{
      {56.7, 56.1, 85.9, 83.9, 88.0, 85.8, 88.6, 86.9, 89.1, 87.4},
      {35.1, 34.2, 84.9, 73.9, 87.2, 75.7, 87.5, 76.8, 88.3, 77.2},
      {61.5, 60.2, 79.8, 78.9, 79.0, 79.5, 80.2, 79.3, 80.5, 79.4},
      {69.4, 68.5, 90.9, 90.5, 91.4, 90.8, 91.4, 91.1, 91.5, 91.1},
      {62.1, 60.9, 92.6, 91.6, 93.2, 92.1, 93.5, 92.2, 93.7, 92.4},
  }};
  // Combined feature at k = 10.
  static constexpr std::array<double, 5> kCombined10 = {89.7, 83.6, 80.4, 91.8, 93.6};
  if (classifier == Kind::kConstant) return std::nullopt;
  const auto row = static_cast<std::size_t>(classifier);
  if (kind == embedding::Kind::kCombined) {
    return k == 10 ? std::optional<double>(kCombined10[row]) : std::nullopt;
  }
  static constexpr std::array<int, 5> kKs = {1, 4, 6, 8, 10};
  const auto it = std::find(kKs.begin(), kKs.end(), k);
  if (it == kKs.end()) return std::nullopt;
  const auto col = static_cast<std::size_t>(it - kKs.begin()) * 2 + (kind == embedding::Kind::kProb ? 1 : 0);
  return kTable[row][col];
}

json report_json(const EvaluationReport& r, const json& run_config) {
  json confusion_rows = json::array();
  for (std::size_t i = 0; i < r.pooled.percent.rows(); ++i) {
    const auto row = r.pooled.percent.row(i);
    confusion_rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json labels = json::array();
  for (std::size_t i = 0; i < r.pooled.percent.rows(); ++i) {
    labels.push_back(i < static_cast<std::size_t>(kGenreCount) ? std::string(genre_name(static_cast<int>(i)))
                                                               : std::to_string(i));
  }
  json predictions = json::array();
  for (std::size_t i = 0; i < r.programme_ids.size(); ++i) {
    predictions.push_back({{"programme_id", r.programme_ids[i]}, {"truth", r.truth[i]}, {"predicted", r.predicted[i]}});
  }
  json ablation = json::array();
  for (const auto& p : r.ablation) {
    ablation.push_back({{"fraction", p.fraction}, {"mean_accuracy", p.mean_accuracy}, {"fold_accuracy", p.fold_accuracy}});
  }
  json reference = nullptr;
  if (!r.embedding_kind.empty()) {
    if (const auto v = published_accuracy(r.spec.kind, embedding::parse_kind(r.embedding_kind), r.k)) {
      reference = {{"accuracy", *v},
                   {"note", "BBC programme corpus with an AudioSet-scale event model; for comparison only"}};
    }
  }
  return {{"config",
           {{"embedding_kind", r.embedding_kind},
            {"k", r.k},
            {"classifier", classifiers::to_json(r.spec)},
            {"folds", r.folds},
            {"fold_seed", r.fold_seed}}},
          {"run_config", run_config},
          {"fold_accuracy", r.fold_accuracy},
          {"mean_accuracy", r.mean_accuracy},
          {"confusion", {{"labels", labels}, {"percent", confusion_rows}, {"empty_rows", r.pooled.empty_rows}}},
          {"predictions", predictions},
          {"ablation", ablation},
          {"published_reference", reference}};
}

std::string report_csv(const EvaluationReport& r) {
  std::string out = "section,row,col,value\n";
  for (std::size_t f = 0; f < r.fold_accuracy.size(); ++f) {
    out += "fold_accuracy," + std::to_string(f) + ",," + io::format_double(r.fold_accuracy[f]) + "\n";
  }
  out += "mean_accuracy,,," + io::format_double(r.mean_accuracy) + "\n";
  for (std::size_t i = 0; i < r.pooled.percent.rows(); ++i) {
    for (std::size_t j = 0; j < r.pooled.percent.cols(); ++j) {
      out += "confusion," + std::to_string(i) + "," + std::to_string(j) + "," +
             io::format_double(r.pooled.percent(i, j)) + "\n";
    }
  }
  for (const auto& p : r.ablation) {
    out += "ablation," + io::format_double(p.fraction) + ",," + io::format_double(p.mean_accuracy) + "\n";
  }
  return out;
}

std::string ablation_csv(std::span<const AblationPoint> curve) {
  std::string out = "fraction,mean_accuracy";
  const std::size_t folds = curve.empty() ? 0 : curve.front().fold_accuracy.size();
  for (std::size_t f = 0; f < folds; ++f) out += ",fold" + std::to_string(f);
  out += "\n";
  for (const auto& p : curve) {
    out += io::format_double(p.fraction) + "," + io::format_double(p.mean_accuracy);
    for (double a : p.fold_accuracy) out += "," + io::format_double(a);
    out += "\n";
  }
  return out;
}

}  // namespace genrestat::eval
