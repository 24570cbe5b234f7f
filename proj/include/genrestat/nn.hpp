#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "genrestat/matrix.hpp"
#include "genrestat/rng.hpp"

// Minimal from-scratch network layer stack used by the event CNN and the MLP
// back end: NCHW activations, explicit backward passes, Adam.
namespace genrestat::nn {

enum class DType { kFloat32, kFloat64 };

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  bool trainable = true;
  // Precision used when the tensor is persisted.
  DType dtype = DType::kFloat32;

  std::size_t size() const { return values.size(); }
  bool operator==(const Tensor&) const = default;
};

// Ordered list of named tensors: trainable weights plus batch-norm running
// statistics.
struct WeightStore {
  std::vector<Tensor> tensors;

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  std::size_t index_of(std::string_view name) const;
  std::size_t parameter_count() const;

  // Rounds every float32 tensor to float precision so that the in-memory
  // model equals what a save/load round trip returns.
  void round_to_storage();

  bool operator==(const WeightStore&) const = default;
};

struct Shape {
  std::size_t c = 0, h = 1, w = 1;
  std::size_t size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

// Batch of activations, n x c x h x w.
struct Activation {
  std::size_t n = 0;
  Shape shape;
  std::vector<double> data;

  void reset(std::size_t batch, Shape s) {
    n = batch;
    shape = s;
    data.assign(batch * s.size(), 0.0);
  }
  double* sample(std::size_t i) { return data.data() + i * shape.size(); }
  const double* sample(std::size_t i) const { return data.data() + i * shape.size(); }
};

// Per-call scratch kept between forward and backward.
struct LayerCache {
  std::vector<double> values;
  std::vector<std::size_t> indices;
};

struct Context {
  bool train = false;
  Rng* rng = nullptr;
  // Receives batch-norm running-statistic updates in train mode; may be null.
  WeightStore* running_stats = nullptr;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  virtual Shape output_shape(Shape in) const = 0;
  virtual void forward(const WeightStore& w, const Activation& in, Activation& out,
                       LayerCache& cache, Context& ctx) const = 0;
  // Accumulates parameter gradients into `grads` (indexed like w.tensors)
  // and writes the input gradient into `din`.
  virtual void backward(const WeightStore& w, const Activation& in, const Activation& out,
                        const Activation& dout, Activation& din, const LayerCache& cache,
                        std::vector<std::vector<double>>& grads) const = 0;
};

std::unique_ptr<Layer> conv3x3(std::size_t weight_index, std::size_t in_channels,
                               std::size_t out_channels);
std::unique_ptr<Layer> batch_norm(std::size_t gamma, std::size_t beta, std::size_t running_mean,
                                  std::size_t running_var);
std::unique_ptr<Layer> relu();
std::unique_ptr<Layer> dropout(double rate);
std::unique_ptr<Layer> avg_pool(std::size_t ph, std::size_t pw);
// Per-channel max over space plus mean over space.
std::unique_ptr<Layer> global_max_mean_pool();
std::unique_ptr<Layer> linear(std::size_t weight_index, std::size_t bias_index,
                              std::size_t in_features, std::size_t out_features);

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

// A layer tagged with the architecture row it belongs to, so that shape
// traces can be reported per row.
struct Stage {
  std::unique_ptr<Layer> layer;
  int row = -1;
};

class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer, int row) { stages_.push_back({std::move(layer), row}); }
  std::size_t size() const { return stages_.size(); }
  const Stage& stage(std::size_t i) const { return stages_[i]; }

  std::vector<Shape> shapes(Shape input) const;

  struct Trace {
    std::vector<Activation> acts;  // acts[0] is the input
    std::vector<LayerCache> caches;
  };

  // Returns the final activation (logits); fills `trace` when non-null.
  Activation forward(const WeightStore& w, Activation input, Context& ctx, Trace* trace) const;

  // Backpropagates d(loss)/d(output) through a stored trace.
  void backward(const WeightStore& w, const Trace& trace, const Activation& dout,
                std::vector<std::vector<double>>& grads) const;

 private:
  std::vector<Stage> stages_;
};

// Row-wise softmax in place.
void softmax_rows(Matrix& logits);
Matrix to_matrix(const Activation& a);

// Mean over rows of -sum_j y_j log p_j; p is clamped below at 1e-300.
double cross_entropy(const Matrix& probs, const Matrix& targets);

// Gradient of the mean cross-entropy w.r.t. the logits: (p - y) / N.
Activation cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets, Shape logit_shape);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const WeightStore& w, AdamConfig cfg);
  void step(WeightStore& w, const std::vector<std::vector<double>>& grads);

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long long t_ = 0;
};

std::vector<std::vector<double>> zero_grads(const WeightStore& w);

// Kaiming-uniform (fan-in) initialisation: U(-sqrt(6 / fan_in), +sqrt(6 / fan_in)).
void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

}  // namespace genrestat::nn
