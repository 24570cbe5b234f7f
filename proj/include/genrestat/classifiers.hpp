#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "genrestat/matrix.hpp"
#include "genrestat/nn.hpp"
#include "genrestat/rng.hpp"

// Back-end genre classifiers with a shared fit/predict contract.
namespace genrestat::classifiers {

// kConstant always predicts class 0 and exists to measure the chance floor.
enum class Kind { kLr, kSvm, kDt, kRf, kMlp, kConstant };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view text);

struct ClassifierSpec {
  Kind kind = Kind::kMlp;
  std::uint64_t seed = 0;

  // Logistic regression: L2 weight 1 / (C N), bias unpenalised.
  double lr_c = 1.0;
  int lr_max_iter = 500;

  // SVM: one-vs-rest, RBF kernel. gamma <= 0 selects 1 / (D var(X)).
  double svm_c = 1.0;
  double svm_gamma = 0.0;
  double svm_tol = 1e-3;

  // Decision tree and forest. max_features = 0 means sqrt(D) for the forest
  // and every feature for a single tree.
  int max_depth = 20;
  int n_trees = 100;
  bool bootstrap = true;
  int max_features = 0;

  // MLP: FC-ReLU-Dropout blocks followed by FC-softmax.
  std::vector<std::size_t> mlp_hidden = {2048, 4096, 4096, 1024};
  std::vector<double> mlp_dropout = {0.2, 0.3, 0.4, 0.5};
  double mlp_width_scale = 1.0;
  int epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  // Beta(alpha, alpha) mixing weight per batch; 0 disables mixup.
  double mixup_alpha = 0.2;

  void validate() const;
  std::vector<std::size_t> hidden_widths() const;
};

nlohmann::json to_json(const ClassifierSpec& spec);
ClassifierSpec spec_from_json(const nlohmann::json& j);

struct LinearParams {
  Matrix weight;  // C x D
  std::vector<double> bias;
};

struct SvmParams {
  double gamma = 1.0;
  Matrix support;    // nSV x D
  Matrix dual_coef;  // C x nSV, alpha_i y_i per one-vs-rest machine
  std::vector<double> rho;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int label = 0;  // majority label of the node's samples

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;
  int predict(std::span<const double> x) const;
  bool operator==(const Tree&) const = default;
};

struct ForestParams {
  std::vector<Tree> trees;
};

struct MlpParams {
  std::vector<std::size_t> hidden;
  std::vector<double> dropout;
  nn::WeightStore weights;
  std::vector<double> loss_trace;  // mean training loss per epoch
};

struct ConstantParams {
  int label = 0;
};

struct FittedModel {
  ClassifierSpec spec;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  std::variant<LinearParams, SvmParams, Tree, ForestParams, MlpParams, ConstantParams> params;
};

struct Prediction {
  std::vector<int> labels;
  // Q x C: softmax for LR/MLP, vote fractions for RF, one-hot leaf labels
  // for DT, one-vs-rest margins for SVM.
  Matrix scores;
};

// n_classes = 0 takes max(y) + 1.
FittedModel fit(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y,
                std::size_t n_classes = 0);
Prediction predict(const FittedModel& model, const Matrix& x);

struct MixedBatch {
  Matrix x;
  Matrix y;
};

// x' = lambda x + (1 - lambda) x[perm], and likewise for the targets.
MixedBatch mixup_batch(const Matrix& x, const Matrix& y, double lambda, std::span<const std::size_t> perm);

// Sequential MLP over the given weights; dropout layers are included for
// every positive rate.
nn::Sequential build_mlp(const nn::WeightStore& w, std::size_t n_features,
                         const std::vector<std::size_t>& hidden, const std::vector<double>& dropout,
                         std::size_t n_classes);
// Kaiming-uniform weights, zero biases, tensors fc{i}.weight / fc{i}.bias.
nn::WeightStore init_mlp(std::size_t n_features, const std::vector<std::size_t>& hidden,
                         std::size_t n_classes, Rng& rng);

void save_classifier(const std::filesystem::path& manifest, const FittedModel& model,
                     const nlohmann::json& run_config);
FittedModel load_classifier(const std::filesystem::path& manifest);

}  // namespace genrestat::classifiers
