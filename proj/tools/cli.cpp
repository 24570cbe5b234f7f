#include "genrestat/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "genrestat/classifiers.hpp"
#include "genrestat/embedding.hpp"
#include "genrestat/error.hpp"
#include "genrestat/evalharness.hpp"
#include "genrestat/eventmodel.hpp"
#include "genrestat/features.hpp"
#include "genrestat/ingest.hpp"
#include "genrestat/io.hpp"
#include "genrestat/manifest.hpp"
#include "genrestat/probabilities.hpp"
#include "genrestat/synthkit.hpp"

namespace genrestat::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flag-level problem detected after parsing; reported as a usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  // shared
  std::string manifest, weights, probs_dir, embeddings, out, recipes;
  std::string kind = "num";
  int k = 1;
  std::string classifier = "mlp";
  int folds = eval::kDefaultFolds;
  std::string fractions = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::uint64_t seed = 0;

  // synth
  int events = 16;
  int programmes_per_genre = 28;
  int clips_per_event = 0;

  // train-events
  double width_scale = 1.0;
  std::string input_pool = "1x1";
  double dropout_scale = 1.0;
  int cnn_epochs = 100;
  double cnn_lr = 1e-3;
  std::size_t cnn_batch = 16;

  // classifiers
  double mlp_width_scale = 1.0;
  int mlp_epochs = 100;
  double mlp_lr = 1e-3;
  std::size_t mlp_batch = 32;
  double mixup_alpha = 0.2;
  int trees = 100;
  int max_depth = 20;
  double svm_c = 1.0;
  double lr_c = 1.0;
};

fs::path sidecar(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".runconfig.json");
  return p;
}

void write_sidecar(const fs::path& output, const json& run_config) {
  io::write_file_atomic(sidecar(output), run_config.dump(2) + "\n");
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(io::parse_double(item));
    } catch (const Error&) {
      throw UsageError("--fractions: '" + item + "' is not a number");
    }
    if (!(out.back() > 0.0 && out.back() <= 1.0)) throw UsageError("--fractions: values must lie in (0, 1]");
  }
  if (out.empty()) throw UsageError("--fractions: no values given");
  return out;
}

std::pair<std::size_t, std::size_t> parse_pool(const std::string& text) {
  const auto x = text.find('x');
  try {
    if (x == std::string::npos) throw UsageError("");
    const long long f = io::parse_int(text.substr(0, x));
    const long long t = io::parse_int(text.substr(x + 1));
    if (f < 1 || t < 1) throw UsageError("");
    return {static_cast<std::size_t>(f), static_cast<std::size_t>(t)};
  } catch (const std::exception&) {
    throw UsageError("--input-pool: expected FxT with positive integers, got '" + text + "'");
  }
}

classifiers::ClassifierSpec classifier_spec(const Options& o) {
  classifiers::ClassifierSpec s;
  s.kind = classifiers::parse_kind(o.classifier);
  s.seed = o.seed;
  s.lr_c = o.lr_c;
  s.svm_c = o.svm_c;
  s.max_depth = o.max_depth;
  s.n_trees = o.trees;
  s.mlp_width_scale = o.mlp_width_scale;
  s.epochs = o.mlp_epochs;
  s.learning_rate = o.mlp_lr;
  s.batch_size = o.mlp_batch;
  s.mixup_alpha = o.mixup_alpha;
  try {
    s.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return s;
}

json base_config(const std::string& subcommand, const Options& o) {
  return {{"subcommand", subcommand}, {"seed", o.seed}};
}

void add_classifier_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--classifier", o.classifier, "Back-end model")
      ->check(CLI::IsMember({"lr", "svm", "dt", "rf", "mlp", "constant"}))
      ->capture_default_str();
  cmd->add_option("--folds", o.folds, "Cross-validation folds")->capture_default_str();
  cmd->add_option("--mlp-width-scale", o.mlp_width_scale, "Multiplier on the MLP hidden widths")
      ->capture_default_str();
  cmd->add_option("--epochs", o.mlp_epochs, "MLP training epochs")->capture_default_str();
  cmd->add_option("--lr", o.mlp_lr, "MLP Adam learning rate")->capture_default_str();
  cmd->add_option("--batch", o.mlp_batch, "MLP batch size")->capture_default_str();
  cmd->add_option("--mixup-alpha", o.mixup_alpha, "Mixup Beta(alpha, alpha); 0 disables")->capture_default_str();
  cmd->add_option("--trees", o.trees, "Random-forest size")->capture_default_str();
  cmd->add_option("--max-depth", o.max_depth, "Tree depth limit")->capture_default_str();
  cmd->add_option("--svm-c", o.svm_c, "SVM soft-margin C")->capture_default_str();
  cmd->add_option("--lr-c", o.lr_c, "Logistic-regression inverse L2 strength")->capture_default_str();
}

// Loads SEGP files for the manifest's programmes, or every *.segp in the
// directory (sorted by name) when no manifest is given.
std::vector<SegmentProbabilities> load_probs(const fs::path& dir, const std::optional<Manifest>& manifest) {
  std::vector<fs::path> files;
  if (manifest) {
    for (const auto& r : *manifest) {
      const fs::path p = dir / (r.programme_id + ".segp");
      if (!fs::exists(p)) {
        fail(ErrorKind::kIncompleteDataset, "missing probabilities for '" + r.programme_id + "': " + p.string());
      }
      files.push_back(p);
    }
  } else {
    if (!fs::is_directory(dir)) fail(ErrorKind::kIo, "not a directory: " + dir.string());
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.path().extension() == ".segp") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) fail(ErrorKind::kIncompleteDataset, "no .segp files in " + dir.string());
  }
  std::vector<SegmentProbabilities> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_probabilities(f));
  return out;
}

void check_k(std::span<const SegmentProbabilities> probs, int k) {
  for (const auto& sp : probs) {
    if (k < 1 || static_cast<std::size_t>(k) > sp.events) {
      fail(ErrorKind::kInvalidInput, "--k " + std::to_string(k) + " violates 1 <= k <= M (M = " +
                                         std::to_string(sp.events) + " in " + sp.programme_id + ")");
    }
  }
}

template <typename T, typename Fn>
std::vector<T> parallel_map(std::size_t n, Fn&& fn) {
  std::vector<T> out(n);
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(genrestat_cli_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

// ---- subcommands --------------------------------------------------------

void cmd_synth(const Options& o, std::ostream& out) {
  synth::RecipeBook book;
  if (!o.recipes.empty()) {
    book = synth::read_recipe_book(o.recipes);
  } else {
    book.events = synth::default_signatures(o.events);
    book.recipes = synth::default_recipes(o.events);
  }
  const fs::path dir = o.out;
  io::ensure_directory(dir);
  json cfg = base_config("synth", o);
  cfg["recipes"] = o.recipes;
  cfg["out"] = o.out;
  cfg["M"] = book.events.size();
  cfg["programmes_per_genre"] = o.programmes_per_genre;
  cfg["clips_per_event"] = o.clips_per_event;
  io::write_file_atomic(dir / "recipes.json", synth::recipe_book_json(book));
  const Manifest m = synth::gen_corpus(book.recipes, book.events, o.programmes_per_genre, o.seed, dir);
  out << "synth: wrote " << m.size() << " programmes to " << (dir / "manifest.csv").string() << "\n";
  if (o.clips_per_event > 0) {
    const auto clips = synth::gen_event_clips(book.events, o.clips_per_event, mix_seed(o.seed, 0xC11B), dir);
    out << "synth: wrote " << clips.size() << " event clips to " << (dir / "clips.csv").string() << "\n";
  }
  write_sidecar(dir / "synth", cfg);
}

void cmd_train_events(const Options& o, std::ostream& out) {
  const auto [pool_f, pool_t] = parse_pool(o.input_pool);
  eventmodel::CnnConfig cfg;
  cfg.n_events = o.events;
  cfg.width_scale = o.width_scale;
  cfg.seed = o.seed;
  cfg.input_pool_freq = pool_f;
  cfg.input_pool_time = pool_t;
  if (!(o.dropout_scale >= 0.0)) throw UsageError("--dropout-scale must be >= 0");
  for (double& r : cfg.dropout) r *= o.dropout_scale;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const ClipManifest clips = read_clip_manifest(o.manifest);
  if (clips.empty()) fail(ErrorKind::kIncompleteDataset, o.manifest + ": no clips");
  const auto fb = features::MelFilterbank::build();
  const auto spectrograms = parallel_map<features::LogMelSpectrogram>(clips.size(), [&](std::size_t i) {
    const auto segments = segment(load_audio(clips[i].path));
    return features::log_mel(segments.front(), fb);
  });
  std::vector<int> labels;
  for (const auto& c : clips) labels.push_back(c.event);
  const eventmodel::TrainingOptions topt{.epochs = o.cnn_epochs, .lr = o.cnn_lr, .batch_size = o.cnn_batch};
  const auto result = eventmodel::train_events(spectrograms, labels, cfg, topt);
  json run = base_config("train-events", o);
  run["manifest"] = o.manifest;
  run["out"] = o.out;
  run["M"] = o.events;
  run["width_scale"] = o.width_scale;
  run["input_pool"] = o.input_pool;
  run["dropout_scale"] = o.dropout_scale;
  run["epochs"] = o.cnn_epochs;
  run["lr"] = o.cnn_lr;
  run["batch"] = o.cnn_batch;
  run["loss_trace"] = result.loss_trace;
  eventmodel::save_model(o.out, eventmodel::EventCnn(cfg, result.weights), run);
  out << "train-events: " << clips.size() << " clips, final loss "
      << (result.loss_trace.empty() ? 0.0 : result.loss_trace.back()) << ", wrote " << o.out << "\n";
}

void cmd_infer(const Options& o, std::ostream& out) {
  const Manifest m = read_manifest(o.manifest);
  const eventmodel::EventCnn model = eventmodel::load_model(o.weights);
  const std::string model_id = fs::path(o.weights).stem().string();
  const auto fb = features::MelFilterbank::build();
  const auto probs = parallel_map<SegmentProbabilities>(m.size(), [&](std::size_t i) {
    try {
      const auto segments = segment(load_audio(m[i].path));
      const auto lm = features::serial::log_mel_batch(segments, fb);
      return eventmodel::infer_programme(model, lm, m[i].programme_id, model_id);
    } catch (const Error& e) {
      fail(e.kind(), m[i].path.string() + ": " + e.what());
    }
  });
  const fs::path dir = o.out;
  io::ensure_directory(dir);
  for (const auto& sp : probs) save_probabilities(sp, dir / (sp.programme_id + ".segp"));
  json run = base_config("infer", o);
  run["manifest"] = o.manifest;
  run["weights"] = o.weights;
  run["out"] = o.out;
  run["M"] = model.config().n_events;
  write_sidecar(dir / "infer", run);
  out << "infer: wrote " << probs.size() << " SEGP files to " << dir.string() << "\n";
}

void cmd_embed(const Options& o, std::ostream& out) {
  std::optional<Manifest> manifest;
  if (!o.manifest.empty()) manifest = read_manifest(o.manifest);
  const auto probs = load_probs(o.probs_dir, manifest);
  check_k(probs, o.k);
  auto rows = embedding::embed_all(probs, embedding::parse_kind(o.kind), o.k);
  if (manifest) {
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].genre = (*manifest)[i].genre;
  }
  embedding::write_embeddings(o.out, rows);
  json run = base_config("embed", o);
  run["probs_dir"] = o.probs_dir;
  run["manifest"] = o.manifest;
  run["out"] = o.out;
  run["M"] = probs.front().events;
  run["kind"] = o.kind;
  run["k"] = o.k;
  write_sidecar(o.out, run);
  out << "embed: wrote " << rows.size() << " " << o.kind << "-" << o.k << " embeddings to " << o.out << "\n";
}

Manifest manifest_from_embeddings(std::span<const embedding::ProgrammeEmbedding> rows) {
  Manifest m;
  for (const auto& e : rows) {
    if (e.genre < 0) fail(ErrorKind::kIncompleteDataset, "embedding '" + e.programme_id + "' has no genre");
    m.push_back({e.programme_id, {}, e.genre});
  }
  return m;
}

void cmd_evaluate(const Options& o, std::ostream& out) {
  const auto spec = classifier_spec(o);
  if (o.folds < 2) throw UsageError("--folds must be >= 2");
  const auto rows = embedding::read_embeddings(o.embeddings);
  if (rows.empty()) fail(ErrorKind::kIncompleteDataset, o.embeddings + ": no embeddings");
  const Manifest m = o.manifest.empty() ? manifest_from_embeddings(rows) : read_manifest(o.manifest);
  const auto folds = eval::make_folds(m, o.folds, o.seed);
  const auto report = eval::cross_validate(m, rows, spec, folds);
  json run = base_config("evaluate", o);
  run["embeddings"] = o.embeddings;
  run["manifest"] = o.manifest;
  run["out"] = o.out;
  run["M"] = rows.front().kind == embedding::Kind::kCombined ? rows.front().values.size() / 2
                                                             : rows.front().values.size();
  run["kind"] = embedding::to_string(rows.front().kind);
  run["k"] = rows.front().k;
  run["classifier"] = classifiers::to_json(spec);
  run["folds"] = o.folds;
  const fs::path json_path = o.out;
  fs::path csv_path = json_path;
  csv_path.replace_extension(".csv");
  io::write_file_atomic(json_path, eval::report_json(report, run).dump(2) + "\n");
  io::write_file_atomic(csv_path, eval::report_csv(report));
  write_sidecar(csv_path, run);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", report.mean_accuracy);
  out << "evaluate: " << o.classifier << " mean accuracy " << buf << "% over " << o.folds << " folds; wrote "
      << json_path.string() << "\n";
}

void cmd_ablate(const Options& o, std::ostream& out) {
  const auto spec = classifier_spec(o);
  if (o.folds < 2) throw UsageError("--folds must be >= 2");
  const auto fractions = parse_fractions(o.fractions);
  const Manifest m = read_manifest(o.manifest);
  const auto probs = load_probs(o.probs_dir, m);
  check_k(probs, o.k);
  const auto kind = embedding::parse_kind(o.kind);
  const auto folds = eval::make_folds(m, o.folds, o.seed);
  const auto curve = eval::segment_ablation(m, probs, kind, o.k, spec, folds, fractions, o.seed);
  io::write_file_atomic(o.out, eval::ablation_csv(curve));
  json run = base_config("ablate", o);
  run["probs_dir"] = o.probs_dir;
  run["manifest"] = o.manifest;
  run["out"] = o.out;
  run["M"] = probs.front().events;
  run["kind"] = o.kind;
  run["k"] = o.k;
  run["classifier"] = classifiers::to_json(spec);
  run["folds"] = o.folds;
  run["fractions"] = fractions;
  write_sidecar(o.out, run);
  out << "ablate: " << curve.size() << " fractions; wrote " << o.out << "\n";
}

void apply_thread_limit() {
  const char* env = std::getenv("GENRESTAT_THREADS");
  if (env == nullptr || *env == '\0') return;
  try {
    const long long n = io::parse_int(env);
    if (n >= 1) omp_set_num_threads(static_cast<int>(n));
  } catch (const Error&) {
    throw UsageError(std::string("GENRESTAT_THREADS must be a positive integer, got '") + env + "'");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Audio-based programme genre classification pipeline", "genrestat"};
  app.require_subcommand(1);

  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic programme corpus (and event clips)");
  synth_cmd->add_option("--recipes", o.recipes, "Recipe book JSON (default: built-in recipes)");
  synth_cmd->add_option("--events", o.events, "Event count M for the built-in recipes")->capture_default_str();
  synth_cmd->add_option("--programmes-per-genre", o.programmes_per_genre, "Programmes per genre")
      ->capture_default_str();
  synth_cmd->add_option("--clips-per-event", o.clips_per_event, "Labelled 5 s clips per event (0: none)")
      ->capture_default_str();
  synth_cmd->add_option("--seed", o.seed, "Random seed")->required();
  synth_cmd->add_option("--out", o.out, "Output directory")->required();

  auto* train_cmd = app.add_subcommand("train-events", "Train the sound-event CNN on labelled clips");
  train_cmd->add_option("--manifest", o.manifest, "Clip manifest CSV (clip_id,path,event)")->required();
  train_cmd->add_option("--events", o.events, "Event count M")->capture_default_str();
  train_cmd->add_option("--width-scale", o.width_scale, "Channel multiplier")->capture_default_str();
  train_cmd->add_option("--input-pool", o.input_pool, "Input average pooling FxT")->capture_default_str();
  train_cmd->add_option("--dropout-scale", o.dropout_scale,
                        "Multiplier on every dropout rate (0 disables dropout)")
      ->capture_default_str();
  train_cmd->add_option("--epochs", o.cnn_epochs, "Training epochs")->capture_default_str();
  train_cmd->add_option("--lr", o.cnn_lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--batch", o.cnn_batch, "Batch size")->capture_default_str();
  train_cmd->add_option("--seed", o.seed, "Random seed")->required();
  train_cmd->add_option("--out", o.out, "Weight manifest (JSON) path")->required();

  auto* infer_cmd = app.add_subcommand("infer", "Write per-segment event probabilities (SEGP) per programme");
  infer_cmd->add_option("--manifest", o.manifest, "Programme manifest CSV")->required();
  infer_cmd->add_option("--weights", o.weights, "Event CNN weight manifest")->required();
  infer_cmd->add_option("--out", o.out, "Output directory")->required();

  auto* embed_cmd = app.add_subcommand("embed", "Build programme embeddings from SEGP files");
  embed_cmd->add_option("--probs-dir", o.probs_dir, "Directory of SEGP files")->required();
  embed_cmd->add_option("--manifest", o.manifest, "Programme manifest (adds genres, fixes order)");
  embed_cmd->add_option("--kind", o.kind, "Embedding statistic")
      ->check(CLI::IsMember({"num", "prob", "combined"}))
      ->capture_default_str();
  embed_cmd->add_option("--k", o.k, "Tags per segment")->capture_default_str();
  embed_cmd->add_option("--out", o.out, "Embedding CSV")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Cross-validate a back-end classifier");
  eval_cmd->add_option("--embeddings", o.embeddings, "Embedding CSV")->required();
  eval_cmd->add_option("--manifest", o.manifest, "Programme manifest (default: genres from the CSV)");
  add_classifier_options(eval_cmd, o);
  eval_cmd->add_option("--seed", o.seed, "Fold and classifier seed")->required();
  eval_cmd->add_option("--out", o.out, "Report JSON (a CSV is written alongside)")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "Accuracy versus fraction of segments used at test time");
  ablate_cmd->add_option("--probs-dir", o.probs_dir, "Directory of SEGP files")->required();
  ablate_cmd->add_option("--manifest", o.manifest, "Programme manifest CSV")->required();
  ablate_cmd->add_option("--kind", o.kind, "Embedding statistic")
      ->check(CLI::IsMember({"num", "prob", "combined"}))
      ->capture_default_str();
  ablate_cmd->add_option("--k", o.k, "Tags per segment")->capture_default_str();
  ablate_cmd->add_option("--fractions", o.fractions, "Comma-separated fractions in (0, 1]")->capture_default_str();
  add_classifier_options(ablate_cmd, o);
  ablate_cmd->add_option("--seed", o.seed, "Fold, classifier and sampling seed")->required();
  ablate_cmd->add_option("--out", o.out, "Curve CSV")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "genrestat: " << e.what() << "\n";
    return kExitUsage;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    apply_thread_limit();
    if (name == "synth") cmd_synth(o, out);
    else if (name == "train-events") cmd_train_events(o, out);
    else if (name == "infer") cmd_infer(o, out);
    else if (name == "embed") cmd_embed(o, out);
    else if (name == "evaluate") cmd_evaluate(o, out);
    else if (name == "ablate") cmd_ablate(o, out);
  } catch (const UsageError& e) {
    err << "genrestat " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "genrestat " << name << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "genrestat " << name << ": " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace genrestat::cli
