#include "genrestat/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "genrestat/error.hpp"
#include "genrestat/kernels.hpp"

namespace genrestat::nn {

namespace k = genrestat::kernels;

const Tensor& WeightStore::at(std::string_view name) const { return tensors[index_of(name)]; }
Tensor& WeightStore::at(std::string_view name) { return tensors[index_of(name)]; }

std::size_t WeightStore::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return i;
  }
  fail(ErrorKind::kFormat, "weight store has no tensor named '" + std::string(name) + "'");
}

std::size_t WeightStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (t.trainable) n += t.size();
  }
  return n;
}

void WeightStore::round_to_storage() {
  for (auto& t : tensors) {
    if (t.dtype != DType::kFloat32) continue;
    for (double& v : t.values) v = static_cast<double>(static_cast<float>(v));
  }
}

namespace {

class Conv3x3 final : public Layer {
 public:
  Conv3x3(std::size_t w, std::size_t in_c, std::size_t out_c) : w_(w), in_c_(in_c), out_c_(out_c) {}
  std::string kind() const override { return "conv3x3"; }

  Shape output_shape(Shape in) const override {
    require(in.c == in_c_, "conv3x3: input has " + std::to_string(in.c) + " channels, expected " +
                               std::to_string(in_c_));
    return {out_c_, in.h, in.w};
  }

  void forward(const WeightStore& w, const Activation& in, Activation& out, LayerCache&,
               Context&) const override {
    const k::ConvShape s = conv_shape(w, in.shape);
    out.reset(in.n, {s.out_channels, s.height, s.width});
    std::vector<double> scratch(s.patch() * s.plane());
    const double* weights = w.tensors[w_].values.data();
    for (std::size_t i = 0; i < in.n; ++i) {
      k::omp::conv3x3_forward(s, in.sample(i), weights, out.sample(i), scratch);
    }
  }

  void backward(const WeightStore& w, const Activation& in, const Activation&,
                const Activation& dout, Activation& din, const LayerCache&,
                std::vector<std::vector<double>>& grads) const override {
    const k::ConvShape s = conv_shape(w, in.shape);
    din.reset(in.n, in.shape);
    std::vector<double> cols(s.patch() * s.plane());
    std::vector<double> dcols(cols.size());
    const double* weights = w.tensors[w_].values.data();
    double* dw = grads[w_].data();
    for (std::size_t i = 0; i < in.n; ++i) {
      k::im2col_3x3(s, in.sample(i), cols.data());
      k::omp::gemm({.trans_b = k::Trans::kYes, .m = s.out_channels, .n = s.patch(),
                    .k = s.plane(), .a = dout.sample(i), .lda = s.plane(), .b = cols.data(),
                    .ldb = s.plane(), .beta = 1.0, .c = dw, .ldc = s.patch()});
      k::omp::gemm({.trans_a = k::Trans::kYes, .m = s.patch(), .n = s.plane(),
                    .k = s.out_channels, .a = weights, .lda = s.patch(), .b = dout.sample(i),
                    .ldb = s.plane(), .c = dcols.data(), .ldc = s.plane()});
      k::col2im_3x3(s, dcols.data(), din.sample(i));
    }
  }

 private:
  k::ConvShape conv_shape(const WeightStore& w, Shape in) const {
    const auto& shape = w.tensors[w_].shape;
    require(shape.size() == 4 && shape[0] == out_c_ && shape[1] == in_c_ && shape[2] == 3 &&
                shape[3] == 3,
            "conv3x3: weight tensor does not match the layer's channel counts");
    output_shape(in);
    return {.in_channels = in.c, .out_channels = out_c_, .height = in.h, .width = in.w};
  }

  std::size_t w_;
  std::size_t in_c_, out_c_;
};

class BatchNorm final : public Layer {
 public:
  BatchNorm(std::size_t g, std::size_t b, std::size_t rm, std::size_t rv)
      : gamma_(g), beta_(b), mean_(rm), var_(rv) {}
  std::string kind() const override { return "batch_norm"; }
  Shape output_shape(Shape in) const override { return in; }

  void forward(const WeightStore& w, const Activation& in, Activation& out, LayerCache& cache,
               Context& ctx) const override {
    const std::size_t channels = in.shape.c, plane = in.shape.h * in.shape.w;
    require(w.tensors[gamma_].size() == channels, "batch_norm: channel count mismatch");
    out.reset(in.n, in.shape);
    cache.values.assign(in.data.size(), 0.0);            // normalised input
    cache.indices.assign(1, ctx.train ? 1 : 0);
    std::vector<double> inv_std(channels);
    const double count = static_cast<double>(in.n * plane);
    for (std::size_t c = 0; c < channels; ++c) {
      double mean, var;
      if (ctx.train) {
        double sum = 0.0;
        for (std::size_t i = 0; i < in.n; ++i) {
          const double* x = in.sample(i) + c * plane;
          for (std::size_t p = 0; p < plane; ++p) sum += x[p];
        }
        mean = sum / count;
        double sq = 0.0;
        for (std::size_t i = 0; i < in.n; ++i) {
          const double* x = in.sample(i) + c * plane;
          for (std::size_t p = 0; p < plane; ++p) sq += (x[p] - mean) * (x[p] - mean);
        }
        var = sq / count;
        if (ctx.running_stats != nullptr) {
          auto& rm = ctx.running_stats->tensors[mean_].values[c];
          auto& rv = ctx.running_stats->tensors[var_].values[c];
          const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
          rm = kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * mean;
          rv = kBatchNormMomentum * rv + (1.0 - kBatchNormMomentum) * unbiased;
        }
      } else {
        mean = w.tensors[mean_].values[c];
        var = w.tensors[var_].values[c];
      }
      inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEps);
      const double g = w.tensors[gamma_].values[c], b = w.tensors[beta_].values[c];
      for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t off = i * in.shape.size() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const double xhat = (in.data[off + p] - mean) * inv_std[c];
          cache.values[off + p] = xhat;
          out.data[off + p] = g * xhat + b;
        }
      }
    }
    cache.values.insert(cache.values.end(), inv_std.begin(), inv_std.end());
  }

  void backward(const WeightStore& w, const Activation& in, const Activation&,
                const Activation& dout, Activation& din, const LayerCache& cache,
                std::vector<std::vector<double>>& grads) const override {
    const std::size_t channels = in.shape.c, plane = in.shape.h * in.shape.w;
    const bool train = cache.indices.at(0) == 1;
    const double* xhat = cache.values.data();
    const double* inv_std = cache.values.data() + in.data.size();
    const double count = static_cast<double>(in.n * plane);
    din.reset(in.n, in.shape);
    for (std::size_t c = 0; c < channels; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t off = i * in.shape.size() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          sum_dy += dout.data[off + p];
          sum_dy_xhat += dout.data[off + p] * xhat[off + p];
        }
      }
      grads[gamma_][c] += sum_dy_xhat;
      grads[beta_][c] += sum_dy;
      const double g = w.tensors[gamma_].values[c];
      for (std::size_t i = 0; i < in.n; ++i) {
        const std::size_t off = i * in.shape.size() + c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const double dxhat = dout.data[off + p] * g;
          din.data[off + p] =
              train ? inv_std[c] / count *
                          (count * dxhat - g * sum_dy - xhat[off + p] * g * sum_dy_xhat)
                    : dxhat * inv_std[c];
        }
      }
    }
  }

 private:
  std::size_t gamma_, beta_, mean_, var_;
};

class Relu final : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Shape output_shape(Shape in) const override { return in; }
  void forward(const WeightStore&, const Activation& in, Activation& out, LayerCache&,
               Context&) const override {
    out.reset(in.n, in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = std::max(in.data[i], 0.0);
  }
  void backward(const WeightStore&, const Activation& in, const Activation&,
                const Activation& dout, Activation& din, const LayerCache&,
                std::vector<std::vector<double>>&) const override {
    din.reset(in.n, in.shape);
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      din.data[i] = in.data[i] > 0.0 ? dout.data[i] : 0.0;
    }
  }
};

class Dropout final : public Layer {
 public:
  explicit Dropout(double rate) : rate_(rate) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0, 1)");
  }
  std::string kind() const override { return "dropout"; }
  Shape output_shape(Shape in) const override { return in; }
  void forward(const WeightStore&, const Activation& in, Activation& out, LayerCache& cache,
               Context& ctx) const override {
    out = in;
    cache.values.clear();
    if (!ctx.train || rate_ == 0.0) return;
    require(ctx.rng != nullptr, "dropout: train mode needs a random generator");
    const double keep_scale = 1.0 / (1.0 - rate_);
    cache.values.resize(in.data.size());
    for (std::size_t i = 0; i < in.data.size(); ++i) {
      cache.values[i] = uniform01(*ctx.rng) < rate_ ? 0.0 : keep_scale;
      out.data[i] *= cache.values[i];
    }
  }
  void backward(const WeightStore&, const Activation&, const Activation&, const Activation& dout,
                Activation& din, const LayerCache& cache,
                std::vector<std::vector<double>>&) const override {
    din = dout;
    if (cache.values.empty()) return;
    for (std::size_t i = 0; i < din.data.size(); ++i) din.data[i] *= cache.values[i];
  }

 private:
  double rate_;
};

class AvgPool final : public Layer {
 public:
  AvgPool(std::size_t ph, std::size_t pw) : ph_(ph), pw_(pw) {
    require(ph >= 1 && pw >= 1, "avg_pool: window must be at least 1 x 1");
  }
  std::string kind() const override { return "avg_pool"; }
  Shape output_shape(Shape in) const override {
    require(in.h >= ph_ && in.w >= pw_, "avg_pool: input smaller than the pooling window");
    return {in.c, in.h / ph_, in.w / pw_};
  }
  void forward(const WeightStore&, const Activation& in, Activation& out, LayerCache&,
               Context&) const override {
    const Shape os = output_shape(in.shape);
    out.reset(in.n, os);
    const double scale = 1.0 / static_cast<double>(ph_ * pw_);
    for (std::size_t i = 0; i < in.n; ++i) {
      for (std::size_t c = 0; c < os.c; ++c) {
        const double* x = in.sample(i) + c * in.shape.h * in.shape.w;
        double* y = out.sample(i) + c * os.h * os.w;
        for (std::size_t oy = 0; oy < os.h; ++oy) {
          for (std::size_t ox = 0; ox < os.w; ++ox) {
            double acc = 0.0;
            for (std::size_t dy = 0; dy < ph_; ++dy) {
              for (std::size_t dx = 0; dx < pw_; ++dx) {
                acc += x[(oy * ph_ + dy) * in.shape.w + ox * pw_ + dx];
              }
            }
            y[oy * os.w + ox] = acc * scale;
          }
        }
      }
    }
  }
  void backward(const WeightStore&, const Activation& in, const Activation& out,
                const Activation& dout, Activation& din, const LayerCache&,
                std::vector<std::vector<double>>&) const override {
    const Shape os = out.shape;
    din.reset(in.n, in.shape);
    const double scale = 1.0 / static_cast<double>(ph_ * pw_);
    for (std::size_t i = 0; i < in.n; ++i) {
      for (std::size_t c = 0; c < os.c; ++c) {
        double* dx = din.sample(i) + c * in.shape.h * in.shape.w;
        const double* dy = dout.sample(i) + c * os.h * os.w;
        for (std::size_t oy = 0; oy < os.h; ++oy) {
          for (std::size_t ox = 0; ox < os.w; ++ox) {
            const double g = dy[oy * os.w + ox] * scale;
            for (std::size_t a = 0; a < ph_; ++a) {
              for (std::size_t b = 0; b < pw_; ++b) dx[(oy * ph_ + a) * in.shape.w + ox * pw_ + b] += g;
            }
          }
        }
      }
    }
  }

 private:
  std::size_t ph_, pw_;
};

class GlobalMaxMeanPool final : public Layer {
 public:
  std::string kind() const override { return "global_max_mean_pool"; }
  Shape output_shape(Shape in) const override { return {in.c, 1, 1}; }
  void forward(const WeightStore&, const Activation& in, Activation& out, LayerCache& cache,
               Context&) const override {
    const std::size_t plane = in.shape.h * in.shape.w;
    require(plane > 0, "global pool: empty feature map");
    out.reset(in.n, {in.shape.c, 1, 1});
    cache.indices.assign(in.n * in.shape.c, 0);
    for (std::size_t i = 0; i < in.n; ++i) {
      for (std::size_t c = 0; c < in.shape.c; ++c) {
        const double* x = in.sample(i) + c * plane;
        std::size_t arg = 0;
        double sum = 0.0;
        for (std::size_t p = 0; p < plane; ++p) {
          sum += x[p];
          if (x[p] > x[arg]) arg = p;
        }
        cache.indices[i * in.shape.c + c] = arg;
        out.sample(i)[c] = x[arg] + sum / static_cast<double>(plane);
      }
    }
  }
  void backward(const WeightStore&, const Activation& in, const Activation&,
                const Activation& dout, Activation& din, const LayerCache& cache,
                std::vector<std::vector<double>>&) const override {
    const std::size_t plane = in.shape.h * in.shape.w;
    din.reset(in.n, in.shape);
    for (std::size_t i = 0; i < in.n; ++i) {
      for (std::size_t c = 0; c < in.shape.c; ++c) {
        const double g = dout.sample(i)[c];
        double* dx = din.sample(i) + c * plane;
        const double share = g / static_cast<double>(plane);
        for (std::size_t p = 0; p < plane; ++p) dx[p] = share;
        dx[cache.indices[i * in.shape.c + c]] += g;
      }
    }
  }
};

class Linear final : public Layer {
 public:
  Linear(std::size_t w, std::size_t b, std::size_t in, std::size_t out)
      : w_(w), b_(b), in_(in), out_(out) {}
  std::string kind() const override { return "linear"; }
  Shape output_shape(Shape in) const override {
    require(in.size() == in_, "linear: input has " + std::to_string(in.size()) +
                                  " features, weight expects " + std::to_string(in_));
    return {out_, 1, 1};
  }
  void forward(const WeightStore& w, const Activation& in, Activation& out, LayerCache&,
               Context&) const override {
    const auto& weight = w.tensors[w_];
    const std::size_t n_out = out_, n_in = in_;
    output_shape(in.shape);
    require(weight.shape == std::vector<std::size_t>{out_, in_}, "linear: weight shape mismatch");
    out.reset(in.n, {n_out, 1, 1});
    for (std::size_t i = 0; i < in.n; ++i) {
      std::copy(w.tensors[b_].values.begin(), w.tensors[b_].values.end(), out.sample(i));
    }
    k::omp::gemm({.trans_b = k::Trans::kYes, .m = in.n, .n = n_out, .k = n_in,
                  .a = in.data.data(), .lda = n_in, .b = weight.values.data(), .ldb = n_in,
                  .beta = 1.0, .c = out.data.data(), .ldc = n_out});
  }
  void backward(const WeightStore& w, const Activation& in, const Activation&,
                const Activation& dout, Activation& din, const LayerCache&,
                std::vector<std::vector<double>>& grads) const override {
    const auto& weight = w.tensors[w_];
    const std::size_t n_out = out_, n_in = in_;
    k::omp::gemm({.trans_a = k::Trans::kYes, .m = n_out, .n = n_in, .k = in.n,
                  .a = dout.data.data(), .lda = n_out, .b = in.data.data(), .ldb = n_in,
                  .beta = 1.0, .c = grads[w_].data(), .ldc = n_in});
    for (std::size_t i = 0; i < in.n; ++i) {
      for (std::size_t o = 0; o < n_out; ++o) grads[b_][o] += dout.sample(i)[o];
    }
    din.reset(in.n, in.shape);
    k::omp::gemm({.m = in.n, .n = n_in, .k = n_out, .a = dout.data.data(), .lda = n_out,
                  .b = weight.values.data(), .ldb = n_in, .c = din.data.data(), .ldc = n_in});
  }

 private:
  std::size_t w_, b_;
  std::size_t in_, out_;
};

}  // namespace

std::unique_ptr<Layer> conv3x3(std::size_t weight_index, std::size_t in_channels,
                               std::size_t out_channels) {
  return std::make_unique<Conv3x3>(weight_index, in_channels, out_channels);
}

std::unique_ptr<Layer> batch_norm(std::size_t gamma, std::size_t beta, std::size_t running_mean,
                                  std::size_t running_var) {
  return std::make_unique<BatchNorm>(gamma, beta, running_mean, running_var);
}

std::unique_ptr<Layer> relu() { return std::make_unique<Relu>(); }
std::unique_ptr<Layer> dropout(double rate) { return std::make_unique<Dropout>(rate); }
std::unique_ptr<Layer> avg_pool(std::size_t ph, std::size_t pw) {
  return std::make_unique<AvgPool>(ph, pw);
}
std::unique_ptr<Layer> global_max_mean_pool() { return std::make_unique<GlobalMaxMeanPool>(); }
std::unique_ptr<Layer> linear(std::size_t weight_index, std::size_t bias_index,
                              std::size_t in_features, std::size_t out_features) {
  return std::make_unique<Linear>(weight_index, bias_index, in_features, out_features);
}

std::vector<Shape> Sequential::shapes(Shape input) const {
  std::vector<Shape> out;
  Shape s = input;
  for (const auto& st : stages_) {
    s = st.layer->output_shape(s);
    out.push_back(s);
  }
  return out;
}

Activation Sequential::forward(const WeightStore& w, Activation input, Context& ctx,
                               Trace* trace) const {
  if (trace != nullptr) {
    trace->acts.clear();
    trace->caches.assign(stages_.size(), {});
    trace->acts.reserve(stages_.size() + 1);
    trace->acts.push_back(std::move(input));
    for (std::size_t i = 0; i < stages_.size(); ++i) {
      Activation out;
      stages_[i].layer->forward(w, trace->acts.back(), out, trace->caches[i], ctx);
      trace->acts.push_back(std::move(out));
    }
    return trace->acts.back();
  }
  Activation current = std::move(input);
  LayerCache scratch;
  for (const auto& st : stages_) {
    Activation out;
    st.layer->forward(w, current, out, scratch, ctx);
    current = std::move(out);
  }
  return current;
}

void Sequential::backward(const WeightStore& w, const Trace& trace, const Activation& dout,
                          std::vector<std::vector<double>>& grads) const {
  Activation grad = dout;
  for (std::size_t i = stages_.size(); i-- > 0;) {
    Activation din;
    stages_[i].layer->backward(w, trace.acts[i], trace.acts[i + 1], grad, din, trace.caches[i],
                               grads);
    grad = std::move(din);
  }
}

void softmax_rows(Matrix& logits) {
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    auto row = logits.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
}

Matrix to_matrix(const Activation& a) {
  Matrix m(a.n, a.shape.size());
  std::copy(a.data.begin(), a.data.end(), m.data());
  return m;
}

double cross_entropy(const Matrix& probs, const Matrix& targets) {
  require(probs.rows() == targets.rows() && probs.cols() == targets.cols(),
          "cross_entropy: shape mismatch");
  require(probs.rows() > 0, "cross_entropy: empty batch");
  double total = 0.0;
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double y = targets(r, c);
      if (y != 0.0) total -= y * std::log(std::max(probs(r, c), 1e-300));
    }
  }
  return total / static_cast<double>(probs.rows());
}

Activation cross_entropy_logit_grad(const Matrix& probs, const Matrix& targets, Shape logit_shape) {
  Activation g;
  g.reset(probs.rows(), logit_shape);
  const double inv_n = 1.0 / static_cast<double>(probs.rows());
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    g.data[i] = (probs.values()[i] - targets.values()[i]) * inv_n;
  }
  return g;
}

Adam::Adam(const WeightStore& w, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& t : w.tensors) {
    m_.emplace_back(t.trainable ? t.size() : 0, 0.0);
    v_.emplace_back(t.trainable ? t.size() : 0, 0.0);
  }
}

void Adam::step(WeightStore& w, const std::vector<std::vector<double>>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.tensors.size(); ++i) {
    auto& t = w.tensors[i];
    if (!t.trainable) continue;
    for (std::size_t j = 0; j < t.size(); ++j) {
      const double g = grads[i][j];
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      t.values[j] -= cfg_.lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + cfg_.eps);
    }
  }
}

std::vector<std::vector<double>> zero_grads(const WeightStore& w) {
  std::vector<std::vector<double>> g;
  g.reserve(w.tensors.size());
  for (const auto& t : w.tensors) g.emplace_back(t.size(), 0.0);
  return g;
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  require(fan_in > 0, "kaiming_uniform: fan_in must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.values) v = (2.0 * uniform01(rng) - 1.0) * bound;
}

}  // namespace genrestat::nn
