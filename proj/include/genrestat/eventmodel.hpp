#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "genrestat/features.hpp"
#include "genrestat/matrix.hpp"
#include "genrestat/nn.hpp"
#include "genrestat/probabilities.hpp"

// Sound-event CNN: a VGG-style stack of twelve 3x3 conv-BN-ReLU layers with
// one 2x2 average pooling, max+mean global pooling and two fully connected
// layers ending in a softmax over M events.
namespace genrestat::eventmodel {

// Architecture rows, in order. Each row's output shape is reported by
// shape_trace().
inline constexpr std::size_t kArchitectureRows = 16;

// Dropout rate after each of the first 15 rows (the final FC-softmax row has
// none).
inline constexpr std::array<double, kArchitectureRows - 1> kDefaultDropout = {
    0.0, 0.2, 0.0, 0.2, 0.0, 0.2, 0.0, 0.0, 0.3, 0.0, 0.3, 0.0, 0.0, 0.5, 0.5};

inline constexpr std::array<std::size_t, 12> kConvChannels = {64,   64,   128,  128, 256, 256,
                                                              512,  512,  1024, 1024, 2048, 2048};
inline constexpr std::size_t kHiddenWidth = 2048;

struct CnnConfig {
  int n_events = 527;
  // Multiplies every channel count and the hidden FC width.
  double width_scale = 1.0;
  std::array<double, kArchitectureRows - 1> dropout = kDefaultDropout;
  std::uint64_t seed = 0;
  // Optional average pooling of the input image (frequency x time) ahead of
  // the first convolution; 1 x 1 reproduces the full-resolution network.
  std::size_t input_pool_freq = 1;
  std::size_t input_pool_time = 1;

  std::size_t scaled(std::size_t channels) const;
  void validate() const;
};

nlohmann::json to_json(const CnnConfig& cfg);
CnnConfig cnn_config_from_json(const nlohmann::json& j);

struct ShapeRow {
  std::string layer;
  std::vector<std::size_t> dims;  // H x W x C for feature maps, {F} for vectors

  std::string dims_text() const;
};

// Output shape of every architecture row for an input of height x width
// (mel bins x frames), computed from the same layer objects forward() uses.
std::vector<ShapeRow> shape_trace(const CnnConfig& cfg, std::size_t height = features::kMelBins,
                                  std::size_t width = features::kFrames);

class EventCnn {
 public:
  // Seeded Kaiming-uniform initialisation; batch-norm gain 1, bias 0,
  // running mean 0, running variance 1.
  explicit EventCnn(CnnConfig cfg);
  EventCnn(CnnConfig cfg, nn::WeightStore weights);

  const CnnConfig& config() const { return cfg_; }
  const nn::WeightStore& weights() const { return weights_; }
  nn::WeightStore& mutable_weights() { return weights_; }
  const nn::Sequential& network() const { return net_; }

  // Images are n x 1 x H x W. Returns logits n x M. In train mode dropout is
  // active (rng required) and batch norm uses batch statistics.
  nn::Activation logits(const nn::Activation& images, bool train_mode, Rng* rng,
                        nn::Sequential::Trace* trace = nullptr,
                        nn::WeightStore* running_stats = nullptr) const;

  // S x M softmax probabilities.
  Matrix forward(const nn::Activation& images, bool train_mode = false, Rng* rng = nullptr) const;
  Matrix forward(std::span<const features::LogMelSpectrogram> batch, bool train_mode = false,
                 Rng* rng = nullptr) const;

 private:
  void build();

  CnnConfig cfg_;
  nn::WeightStore weights_;
  nn::Sequential net_;
};

// Packs spectrograms into an n x 1 x H x W batch.
nn::Activation to_images(std::span<const features::LogMelSpectrogram> batch);

struct TrainingOptions {
  int epochs = 100;
  double lr = 1e-3;
  std::size_t batch_size = 16;
};

struct TrainingResult {
  nn::WeightStore weights;
  std::vector<double> loss_trace;  // mean training cross-entropy per epoch
};

// Minimises the mean cross-entropy of one-hot event labels with Adam.
// Deterministic given cfg.seed. Final weights are rounded to float32.
TrainingResult train_events(std::span<const features::LogMelSpectrogram> clips,
                            std::span<const int> labels, const CnnConfig& cfg,
                            const TrainingOptions& options);

// Probabilities for every segment of one programme, rounded to float32.
SegmentProbabilities infer_programme(const EventCnn& model,
                                     std::span<const features::LogMelSpectrogram> segments,
                                     std::string programme_id, std::string model_id);

void save_model(const std::filesystem::path& manifest, const EventCnn& model,
                const nlohmann::json& run_config);
EventCnn load_model(const std::filesystem::path& manifest);

}  // namespace genrestat::eventmodel
