#include "genrestat/eventmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "genrestat/container.hpp"
#include "genrestat/error.hpp"

namespace genrestat::eventmodel {

using nlohmann::json;

namespace {

constexpr std::string_view kModelKind = "event_cnn";

// Architecture row of the average-pooling stage and of the two FC layers.
constexpr int kAvgPoolRow = 8;
constexpr int kGlobalPoolRow = 13;
constexpr int kHiddenRow = 14;
constexpr int kOutputRow = 15;

int conv_row(std::size_t conv_index) {
  return conv_index < 8 ? static_cast<int>(conv_index) : static_cast<int>(conv_index) + 1;
}

std::vector<nn::Tensor> expected_tensors(const CnnConfig& cfg) {
  std::vector<nn::Tensor> out;
  std::size_t in_c = 1;
  for (std::size_t i = 0; i < kConvChannels.size(); ++i) {
    const std::size_t c = cfg.scaled(kConvChannels[i]);
    const std::string id = std::to_string(i + 1);
    out.push_back({"conv" + id + ".weight", {c, in_c, 3, 3}, {}, true});
    out.push_back({"bn" + id + ".gamma", {c}, {}, true});
    out.push_back({"bn" + id + ".beta", {c}, {}, true});
    out.push_back({"bn" + id + ".running_mean", {c}, {}, false});
    out.push_back({"bn" + id + ".running_var", {c}, {}, false});
    in_c = c;
  }
  const std::size_t hidden = cfg.scaled(kHiddenWidth);
  const auto m = static_cast<std::size_t>(cfg.n_events);
  out.push_back({"fc1.weight", {hidden, in_c}, {}, true});
  out.push_back({"fc1.bias", {hidden}, {}, true});
  out.push_back({"fc2.weight", {m, hidden}, {}, true});
  out.push_back({"fc2.bias", {m}, {}, true});
  return out;
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void check_finite(const nn::Activation& a, std::string_view where) {
  for (double v : a.data) {
    if (!std::isfinite(v)) fail(ErrorKind::kNumericOverflow, "non-finite activation in " + std::string(where));
  }
}

}  // namespace

std::size_t CnnConfig::scaled(std::size_t channels) const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(channels * width_scale)));
}

void CnnConfig::validate() const {
  require(n_events >= 2, "CnnConfig: n_events must be >= 2");
  require(width_scale > 0.0 && width_scale <= 1.0, "CnnConfig: width_scale must be in (0, 1]");
  require(input_pool_freq >= 1 && input_pool_time >= 1, "CnnConfig: input pooling must be >= 1");
  for (double d : dropout) require(d >= 0.0 && d < 1.0, "CnnConfig: dropout rates must be in [0, 1)");
}

json to_json(const CnnConfig& cfg) {
  return {{"n_events", cfg.n_events},
          {"width_scale", cfg.width_scale},
          {"dropout", cfg.dropout},
          {"seed", cfg.seed},
          {"input_pool", {cfg.input_pool_freq, cfg.input_pool_time}}};
}

CnnConfig cnn_config_from_json(const json& j) {
  CnnConfig cfg;
  try {
    cfg.n_events = j.at("n_events").get<int>();
    cfg.width_scale = j.at("width_scale").get<double>();
    cfg.dropout = j.at("dropout").get<std::array<double, kArchitectureRows - 1>>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    const auto pool = j.at("input_pool").get<std::array<std::size_t, 2>>();
    cfg.input_pool_freq = pool[0];
    cfg.input_pool_time = pool[1];
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("CNN config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string ShapeRow::dims_text() const {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s;
}

EventCnn::EventCnn(CnnConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  for (auto& t : expected_tensors(cfg_)) {
    t.values.assign(element_count(t.shape), 0.0);
    const bool is_weight = t.name.ends_with(".weight");
    if (is_weight) {
      const std::size_t fan_in = element_count(t.shape) / t.shape[0];
      nn::kaiming_uniform(t, fan_in, rng);
    } else if (t.name.ends_with(".gamma") || t.name.ends_with(".running_var")) {
      std::fill(t.values.begin(), t.values.end(), 1.0);
    }
    weights_.tensors.push_back(std::move(t));
  }
  weights_.round_to_storage();
  build();
}

EventCnn::EventCnn(CnnConfig cfg, nn::WeightStore weights) : cfg_(cfg), weights_(std::move(weights)) {
  cfg_.validate();
  const auto expected = expected_tensors(cfg_);
  require(expected.size() == weights_.tensors.size(),
          "EventCnn: weight store has " + std::to_string(weights_.tensors.size()) +
              " tensors, architecture needs " + std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& t = weights_.tensors[i];
    require(t.name == expected[i].name && t.shape == expected[i].shape &&
                t.values.size() == element_count(t.shape),
            "EventCnn: tensor '" + t.name + "' does not match the architecture");
    if (t.name.ends_with(".running_var")) {
      for (double v : t.values) require(v > 0.0, "EventCnn: batch-norm running variance must be > 0");
    }
  }
  build();
}

void EventCnn::build() {
  const auto& w = weights_;
  if (cfg_.input_pool_freq > 1 || cfg_.input_pool_time > 1) {
    net_.add(nn::avg_pool(cfg_.input_pool_freq, cfg_.input_pool_time), -1);
  }
  std::size_t in_c = 1;
  for (std::size_t i = 0; i < kConvChannels.size(); ++i) {
    const std::string id = std::to_string(i + 1);
    const int row = conv_row(i);
    const std::size_t c = cfg_.scaled(kConvChannels[i]);
    net_.add(nn::conv3x3(w.index_of("conv" + id + ".weight"), in_c, c), row);
    net_.add(nn::batch_norm(w.index_of("bn" + id + ".gamma"), w.index_of("bn" + id + ".beta"),
                            w.index_of("bn" + id + ".running_mean"),
                            w.index_of("bn" + id + ".running_var")),
             row);
    net_.add(nn::relu(), row);
    if (cfg_.dropout[static_cast<std::size_t>(row)] > 0.0) {
      net_.add(nn::dropout(cfg_.dropout[static_cast<std::size_t>(row)]), row);
    }
    in_c = c;
    if (i == 7) {
      net_.add(nn::avg_pool(2, 2), kAvgPoolRow);
      if (cfg_.dropout[kAvgPoolRow] > 0.0) net_.add(nn::dropout(cfg_.dropout[kAvgPoolRow]), kAvgPoolRow);
    }
  }
  net_.add(nn::global_max_mean_pool(), kGlobalPoolRow);
  if (cfg_.dropout[kGlobalPoolRow] > 0.0) net_.add(nn::dropout(cfg_.dropout[kGlobalPoolRow]), kGlobalPoolRow);
  const std::size_t hidden = cfg_.scaled(kHiddenWidth);
  net_.add(nn::linear(w.index_of("fc1.weight"), w.index_of("fc1.bias"), in_c, hidden), kHiddenRow);
  net_.add(nn::relu(), kHiddenRow);
  if (cfg_.dropout[kHiddenRow] > 0.0) net_.add(nn::dropout(cfg_.dropout[kHiddenRow]), kHiddenRow);
  net_.add(nn::linear(w.index_of("fc2.weight"), w.index_of("fc2.bias"), hidden,
                      static_cast<std::size_t>(cfg_.n_events)),
           kOutputRow);
}

std::vector<ShapeRow> shape_trace(const CnnConfig& cfg, std::size_t height, std::size_t width) {
  // Build the architecture around zero-filled tensors; only shapes matter.
  nn::WeightStore zeros;
  for (auto& t : expected_tensors(cfg)) {
    t.values.assign(element_count(t.shape), t.name.ends_with(".running_var") ? 1.0 : 0.0);
    zeros.tensors.push_back(std::move(t));
  }
  const EventCnn model(cfg, std::move(zeros));
  const auto& net = model.network();
  const auto shapes = net.shapes({1, height, width});

  std::vector<ShapeRow> rows(kArchitectureRows);
  std::vector<std::string> parts(kArchitectureRows);
  for (std::size_t i = 0; i < net.size(); ++i) {
    const int row = net.stage(i).row;
    if (row < 0) continue;
    const auto r = static_cast<std::size_t>(row);
    const nn::Shape& s = shapes[i];
    rows[r].dims = (s.h == 1 && s.w == 1 && row >= kGlobalPoolRow)
                       ? std::vector<std::size_t>{s.c}
                       : std::vector<std::size_t>{s.h, s.w, s.c};
    const std::string kind = net.stage(i).layer->kind();
    std::string label;
    if (kind == "conv3x3") label = "Convolution [3x3 @ " + std::to_string(s.c) + "]";
    else if (kind == "batch_norm") label = "BN";
    else if (kind == "relu") label = "ReLU";
    else if (kind == "dropout") label = "Dropout (" + std::to_string(std::lround(cfg.dropout[r] * 100)) + "%)";
    else if (kind == "avg_pool") label = "Average Pooling [2x2]";
    else if (kind == "global_max_mean_pool") label = "Global Pooling";
    else if (kind == "linear") label = "FC";
    parts[r] += parts[r].empty() ? label : " - " + label;
  }
  parts[kOutputRow] += " - Softmax";
  for (std::size_t r = 0; r < kArchitectureRows; ++r) rows[r].layer = parts[r];
  return rows;
}

nn::Activation to_images(std::span<const features::LogMelSpectrogram> batch) {
  require(!batch.empty(), "to_images: empty batch");
  nn::Activation a;
  const std::size_t h = batch[0].mel_bins, w = batch[0].frames;
  a.reset(batch.size(), {1, h, w});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    require(batch[i].mel_bins == h && batch[i].frames == w && batch[i].values.size() == h * w,
            "to_images: spectrogram shapes differ within the batch");
    std::copy(batch[i].values.begin(), batch[i].values.end(), a.sample(i));
  }
  return a;
}

nn::Activation EventCnn::logits(const nn::Activation& images, bool train_mode, Rng* rng,
                                nn::Sequential::Trace* trace,
                                nn::WeightStore* running_stats) const {
  require(images.shape.c == 1, "EventCnn: input images must have one channel");
  nn::Context ctx{.train = train_mode, .rng = rng, .running_stats = running_stats};
  nn::Activation out = net_.forward(weights_, images, ctx, trace);
  check_finite(out, "event CNN forward");
  return out;
}

Matrix EventCnn::forward(const nn::Activation& images, bool train_mode, Rng* rng) const {
  Matrix probs = nn::to_matrix(logits(images, train_mode, rng));
  nn::softmax_rows(probs);
  return probs;
}

Matrix EventCnn::forward(std::span<const features::LogMelSpectrogram> batch, bool train_mode,
                         Rng* rng) const {
  return forward(to_images(batch), train_mode, rng);
}

TrainingResult train_events(std::span<const features::LogMelSpectrogram> clips,
                            std::span<const int> labels, const CnnConfig& cfg,
                            const TrainingOptions& options) {
  require(clips.size() == labels.size(), "train_events: clip and label counts differ");
  require(options.epochs >= 0 && options.batch_size >= 1 && options.lr > 0.0,
          "train_events: invalid training options");
  std::set<int> classes;
  for (int y : labels) {
    require(y >= 0 && y < cfg.n_events, "train_events: label " + std::to_string(y) + " outside [0, M)");
    classes.insert(y);
  }
  if (classes.size() < 2) fail(ErrorKind::kDegenerateTraining, "train_events: fewer than two classes present");

  EventCnn model(cfg);
  TrainingResult result;
  nn::Adam adam(model.weights(), {.lr = options.lr});
  Rng order_rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(clips.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto m = static_cast<std::size_t>(cfg.n_events);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng() % i]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t n = std::min(options.batch_size, order.size() - start);
      std::vector<features::LogMelSpectrogram> batch;
      Matrix targets(n, m);
      for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(clips[order[start + i]]);
        targets(i, static_cast<std::size_t>(labels[order[start + i]])) = 1.0;
      }
      nn::Sequential::Trace trace;
      const nn::Activation out =
          model.logits(to_images(batch), true, &dropout_rng, &trace, &model.mutable_weights());
      Matrix probs = nn::to_matrix(out);
      nn::softmax_rows(probs);
      const double loss = nn::cross_entropy(probs, targets);
      if (!std::isfinite(loss)) fail(ErrorKind::kNumericOverflow, "train_events: non-finite loss");
      epoch_loss += loss * static_cast<double>(n);
      auto grads = nn::zero_grads(model.weights());
      model.network().backward(model.weights(), trace, nn::cross_entropy_logit_grad(probs, targets, out.shape),
                               grads);
      adam.step(model.mutable_weights(), grads);
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  model.mutable_weights().round_to_storage();
  result.weights = model.weights();
  return result;
}

SegmentProbabilities infer_programme(const EventCnn& model,
                                     std::span<const features::LogMelSpectrogram> segments,
                                     std::string programme_id, std::string model_id) {
  SegmentProbabilities sp;
  sp.programme_id = std::move(programme_id);
  sp.model_id = std::move(model_id);
  sp.events = static_cast<std::size_t>(model.config().n_events);
  sp.segments = segments.size();
  if (segments.empty()) fail(ErrorKind::kEmptyProgramme, sp.programme_id + ": no segments");
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < segments.size(); start += kBatch) {
    const std::size_t n = std::min(kBatch, segments.size() - start);
    const Matrix probs = model.forward(segments.subspan(start, n));
    for (double p : probs.values()) sp.probs.push_back(static_cast<float>(p));
  }
  return sp;
}

void save_model(const std::filesystem::path& manifest, const EventCnn& model,
                const json& run_config) {
  json meta = {{"kind", kModelKind}, {"config", to_json(model.config())}, {"run_config", run_config}};
  container::save(manifest, meta, model.weights());
}

EventCnn load_model(const std::filesystem::path& manifest) {
  auto loaded = container::load(manifest);
  if (loaded.meta.value("kind", std::string()) != kModelKind) {
    fail(ErrorKind::kFormat, manifest.string() + ": not an event CNN weight file");
  }
  return EventCnn(cnn_config_from_json(loaded.meta.at("config")), std::move(loaded.weights));
}

}  // namespace genrestat::eventmodel
