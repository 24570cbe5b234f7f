#include "genrestat/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "genrestat/error.hpp"

namespace genrestat::classifiers {

using nlohmann::json;

std::string_view to_string(Kind kind) {
  switch (kind) {
    case Kind::kLr: return "lr";
    case Kind::kSvm: return "svm";
    case Kind::kDt: return "dt";
    case Kind::kRf: return "rf";
    case Kind::kMlp: return "mlp";
    case Kind::kConstant: return "constant";
  }
  return "mlp";
}

Kind parse_kind(std::string_view text) {
  for (Kind k : {Kind::kLr, Kind::kSvm, Kind::kDt, Kind::kRf, Kind::kMlp, Kind::kConstant}) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorKind::kFormat, "unknown classifier '" + std::string(text) + "' (expected lr, svm, dt, rf, mlp or constant)");
}

void ClassifierSpec::validate() const {
  require(lr_c > 0.0 && lr_max_iter >= 1, "classifier spec: LR needs C > 0 and max_iter >= 1");
  require(svm_c > 0.0 && svm_tol > 0.0, "classifier spec: SVM needs C > 0 and tol > 0");
  require(max_depth >= 1 && n_trees >= 1 && max_features >= 0, "classifier spec: invalid tree settings");
  require(!mlp_hidden.empty() && mlp_hidden.size() == mlp_dropout.size(),
          "classifier spec: MLP needs one dropout rate per hidden layer");
  for (std::size_t w : mlp_hidden) require(w > 0, "classifier spec: MLP widths must be positive");
  for (double d : mlp_dropout) require(d >= 0.0 && d < 1.0, "classifier spec: dropout must be in [0, 1)");
  require(mlp_width_scale > 0.0, "classifier spec: width scale must be positive");
  require(epochs >= 0 && batch_size >= 1 && learning_rate > 0.0, "classifier spec: invalid MLP training settings");
  require(mixup_alpha >= 0.0, "classifier spec: mixup alpha must be >= 0");
}

std::vector<std::size_t> ClassifierSpec::hidden_widths() const {
  std::vector<std::size_t> out;
  for (std::size_t w : mlp_hidden) {
    out.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(w * mlp_width_scale))));
  }
  return out;
}

json to_json(const ClassifierSpec& s) {
  return {{"model", to_string(s.kind)},
          {"seed", s.seed},
          {"lr_c", s.lr_c},
          {"lr_max_iter", s.lr_max_iter},
          {"svm_c", s.svm_c},
          {"svm_gamma", s.svm_gamma},
          {"svm_tol", s.svm_tol},
          {"max_depth", s.max_depth},
          {"n_trees", s.n_trees},
          {"bootstrap", s.bootstrap},
          {"max_features", s.max_features},
          {"mlp_hidden", s.mlp_hidden},
          {"mlp_dropout", s.mlp_dropout},
          {"mlp_width_scale", s.mlp_width_scale},
          {"epochs", s.epochs},
          {"learning_rate", s.learning_rate},
          {"batch_size", s.batch_size},
          {"mixup_alpha", s.mixup_alpha}};
}

ClassifierSpec spec_from_json(const json& j) {
  ClassifierSpec s;
  try {
    s.kind = parse_kind(j.at("model").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.lr_c = j.at("lr_c").get<double>();
    s.lr_max_iter = j.at("lr_max_iter").get<int>();
    s.svm_c = j.at("svm_c").get<double>();
    s.svm_gamma = j.at("svm_gamma").get<double>();
    s.svm_tol = j.at("svm_tol").get<double>();
    s.max_depth = j.at("max_depth").get<int>();
    s.n_trees = j.at("n_trees").get<int>();
    s.bootstrap = j.at("bootstrap").get<bool>();
    s.max_features = j.at("max_features").get<int>();
    s.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
    s.mlp_dropout = j.at("mlp_dropout").get<std::vector<double>>();
    s.mlp_width_scale = j.at("mlp_width_scale").get<double>();
    s.epochs = j.at("epochs").get<int>();
    s.learning_rate = j.at("learning_rate").get<double>();
    s.batch_size = j.at("batch_size").get<std::size_t>();
    s.mixup_alpha = j.at("mixup_alpha").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, std::string("classifier spec: ") + e.what());
  }
  s.validate();
  return s;
}

namespace {

int argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) sum += (v = std::exp(v - mx));
  for (double& v : z) v /= sum;
}

// ---- logistic regression ----------------------------------------------

struct LrProblem {
  const Matrix& x;
  std::span<const int> y;
  std::size_t classes;
  double lambda;

  std::size_t dim() const { return classes * x.cols() + classes; }

  double eval(const std::vector<double>& theta, std::vector<double>& grad) const {
    const std::size_t n = x.rows(), d = x.cols(), c = classes;
    const double* w = theta.data();
    const double* b = theta.data() + c * d;
    grad.assign(theta.size(), 0.0);
    double loss = 0.0;
    std::vector<double> z(c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      for (std::size_t k = 0; k < c; ++k) {
        double s = b[k];
        for (std::size_t j = 0; j < d; ++j) s += w[k * d + j] * xi[j];
        z[k] = s;
      }
      const double mx = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - mx);
      const auto yi = static_cast<std::size_t>(y[i]);
      loss += mx + std::log(sum) - z[yi];
      for (std::size_t k = 0; k < c; ++k) {
        const double r = std::exp(z[k] - mx) / sum - (k == yi ? 1.0 : 0.0);
        for (std::size_t j = 0; j < d; ++j) grad[k * d + j] += r * xi[j];
        grad[c * d + k] += r;
      }
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double reg = 0.0;
    for (std::size_t p = 0; p < c * d; ++p) {
      reg += w[p] * w[p];
      grad[p] = grad[p] * inv_n + lambda * w[p];
    }
    for (std::size_t k = 0; k < c; ++k) grad[c * d + k] *= inv_n;
    return loss * inv_n + 0.5 * lambda * reg;
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Limited-memory BFGS with a backtracking Armijo line search.
std::vector<double> lbfgs(const LrProblem& problem, int max_iter) {
  constexpr std::size_t kMemory = 10;
  constexpr double kGradTol = 1e-6;
  const std::size_t dim = problem.dim();
  std::vector<double> theta(dim, 0.0), grad, next(dim), next_grad;
  double f = problem.eval(theta, grad);
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;

  for (int iter = 0; iter < max_iter; ++iter) {
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    if (gmax < kGradTol) break;

    std::vector<double> q = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], q);
      for (std::size_t p = 0; p < dim; ++p) q[p] -= alpha[i] * y_hist[i][p];
    }
    if (!s_hist.empty()) {
      const double scale = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (double& v : q) v *= scale;
    } else {
      const double norm = std::sqrt(dot(grad, grad));
      for (double& v : q) v /= std::max(norm, 1.0);
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], q);
      for (std::size_t p = 0; p < dim; ++p) q[p] += (alpha[i] - beta) * s_hist[i][p];
    }
    std::vector<double> dir(dim);
    for (std::size_t p = 0; p < dim; ++p) dir[p] = -q[p];
    double slope = dot(grad, dir);
    if (slope >= 0.0) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t p = 0; p < dim; ++p) dir[p] = -grad[p];
      slope = -dot(grad, grad);
    }

    double step = 1.0, f_next = f;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (std::size_t p = 0; p < dim; ++p) next[p] = theta[p] + step * dir[p];
      f_next = problem.eval(next, next_grad);
      if (f_next <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(dim), yv(dim);
    for (std::size_t p = 0; p < dim; ++p) {
      s[p] = next[p] - theta[p];
      yv[p] = next_grad[p] - grad[p];
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12) {
      if (s_hist.size() == kMemory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
    const double change = f - f_next;
    theta.swap(next);
    grad.swap(next_grad);
    f = f_next;
    if (change <= 1e-12 * std::max({std::abs(f), std::abs(f_next), 1.0})) break;
  }
  return theta;
}

LinearParams fit_lr(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y, std::size_t c) {
  const LrProblem problem{x, y, c, 1.0 / (spec.lr_c * static_cast<double>(x.rows()))};
  const std::vector<double> theta = lbfgs(problem, spec.lr_max_iter);
  LinearParams p;
  const std::size_t d = x.cols();
  p.weight = Matrix(c, d);
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(c * d), p.weight.data());
  p.bias.assign(theta.begin() + static_cast<std::ptrdiff_t>(c * d), theta.end());
  return p;
}

// ---- SVM ----------------------------------------------------------------

double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d2 += t * t;
  }
  return std::exp(-gamma * d2);
}

struct BinarySolution {
  std::vector<double> alpha;
  double rho = 0.0;
};

// SMO on the soft-margin dual with maximal-violating-pair selection.
BinarySolution smo(const Matrix& k, const std::vector<double>& y, double c, double tol, long long max_iter) {
  const std::size_t n = y.size();
  BinarySolution sol;
  sol.alpha.assign(n, 0.0);
  std::vector<double> g(n, -1.0);  // gradient of 1/2 a'Qa - e'a
  auto& a = sol.alpha;
  auto in_up = [&](std::size_t t) { return (y[t] > 0 && a[t] < c) || (y[t] < 0 && a[t] > 0); };
  auto in_low = [&](std::size_t t) { return (y[t] > 0 && a[t] > 0) || (y[t] < 0 && a[t] < c); };

  for (long long iter = 0; iter < max_iter; ++iter) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * g[t];
      if (in_up(t) && v > gmax) gmax = v, i = t;
      if (in_low(t) && v < gmin) gmin = v, j = t;
    }
    if (i == n || j == n || gmax - gmin < tol) break;

    double quad = k(i, i) + k(j, j) - 2.0 * k(i, j);
    if (quad <= 0.0) quad = 1e-12;
    double step = (gmax - gmin) / quad;
    step = std::min(step, y[i] > 0 ? c - a[i] : a[i]);
    step = std::min(step, y[j] > 0 ? a[j] : c - a[j]);
    a[i] = std::clamp(a[i] + y[i] * step, 0.0, c);
    a[j] = std::clamp(a[j] - y[j] * step, 0.0, c);
    for (std::size_t t = 0; t < n; ++t) g[t] += y[t] * step * (k(t, i) - k(t, j));
  }

  double sum_free = 0.0;
  std::size_t n_free = 0;
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * g[t];
    if (a[t] > 0.0 && a[t] < c) {
      sum_free += yg;
      ++n_free;
    } else if (in_up(t)) {
      ub = std::min(ub, yg);
    } else {
      lb = std::max(lb, yg);
    }
  }
  if (n_free > 0) {
    sol.rho = sum_free / static_cast<double>(n_free);
  } else if (std::isfinite(ub) && std::isfinite(lb)) {
    sol.rho = 0.5 * (ub + lb);
  } else {
    sol.rho = std::isfinite(ub) ? ub : lb;
  }
  return sol;
}

SvmParams fit_svm(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y, std::size_t c) {
  const std::size_t n = x.rows(), d = x.cols();
  SvmParams p;
  p.gamma = spec.svm_gamma;
  if (p.gamma <= 0.0) {
    const auto& v = x.values();
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double t : v) var += (t - mean) * (t - mean);
    var /= static_cast<double>(v.size());
    p.gamma = var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
  }
  Matrix k(n, n);
  const auto nn = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < nn; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (std::size_t j = 0; j < n; ++j) k(ui, j) = rbf(x.row(ui), x.row(j), p.gamma);
  }

  const long long max_iter = 10000LL * static_cast<long long>(n);
  std::vector<BinarySolution> machines(c);
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::vector<double> yb(n);
    bool any_positive = false;
    for (std::size_t i = 0; i < n; ++i) {
      yb[i] = y[i] == static_cast<int>(cls) ? 1.0 : -1.0;
      any_positive = any_positive || yb[i] > 0;
    }
    if (!any_positive) {
      machines[cls].alpha.assign(n, 0.0);
      machines[cls].rho = 1.0;  // margin -1 everywhere
      continue;
    }
    machines[cls] = smo(k, yb, spec.svm_c, spec.svm_tol, max_iter);
  }

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& m : machines) {
      if (m.alpha[i] > 0.0) {
        support.push_back(i);
        break;
      }
    }
  }
  p.support = Matrix(support.size(), d);
  p.dual_coef = Matrix(c, support.size());
  for (std::size_t s = 0; s < support.size(); ++s) {
    std::copy(x.row(support[s]).begin(), x.row(support[s]).end(), p.support.row(s).begin());
    for (std::size_t cls = 0; cls < c; ++cls) {
      const double yi = y[support[s]] == static_cast<int>(cls) ? 1.0 : -1.0;
      p.dual_coef(cls, s) = machines[cls].alpha[support[s]] * yi;
    }
  }
  for (const auto& m : machines) p.rho.push_back(m.rho);
  return p;
}

// ---- trees --------------------------------------------------------------

struct TreeBuilder {
  const Matrix& x;
  std::span<const int> y;
  std::size_t classes;
  int max_depth;
  std::size_t max_features;
  Rng* rng;
  Tree tree;

  int majority(std::span<const std::size_t> idx, std::vector<long long>& counts) const {
    counts.assign(classes, 0);
    for (std::size_t i : idx) ++counts[static_cast<std::size_t>(y[i])];
    return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  }

  std::vector<std::size_t> feature_order() {
    std::vector<std::size_t> order(x.cols());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (max_features < x.cols()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[(*rng)() % i]);
    }
    return order;
  }

  int build(std::vector<std::size_t>& idx, int depth) {
    const int node_id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    std::vector<long long> counts;
    const int label = majority(idx, counts);
    tree.nodes[static_cast<std::size_t>(node_id)].label = label;
    const auto n = static_cast<long long>(idx.size());
    if (depth >= max_depth || n < 2 || counts[static_cast<std::size_t>(label)] == n) return node_id;

    // Maximise sum_c l_c^2 / n_l + sum_c r_c^2 / n_r, which minimises the
    // weighted Gini impurity. Squared counts are exact integers.
    double best_score = -1.0;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    std::size_t evaluated = 0;
    std::vector<std::pair<double, int>> column(idx.size());
    for (std::size_t f : feature_order()) {
      if (evaluated >= max_features && best_score >= 0.0) break;
      for (std::size_t i = 0; i < idx.size(); ++i) column[i] = {x(idx[i], f), y[idx[i]]};
      std::sort(column.begin(), column.end());
      if (column.front().first == column.back().first) continue;
      ++evaluated;
      std::vector<long long> left(classes, 0), right = counts;
      long long sq_left = 0, sq_right = 0;
      for (long long c : counts) sq_right += c * c;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        const auto c = static_cast<std::size_t>(column[i].second);
        sq_left += 2 * left[c] + 1;
        ++left[c];
        sq_right -= 2 * right[c] - 1;
        --right[c];
        if (column[i].first == column[i + 1].first) continue;
        const auto nl = static_cast<double>(i + 1);
        const double nr = static_cast<double>(n) - nl;
        const double score = static_cast<double>(sq_left) / nl + static_cast<double>(sq_right) / nr;
        if (score > best_score) {
          best_score = score;
          best_feature = f;
          double mid = 0.5 * (column[i].first + column[i + 1].first);
          if (!(mid < column[i + 1].first)) mid = column[i].first;
          best_threshold = mid;
        }
      }
    }
    if (best_score < 0.0) return node_id;

    std::vector<std::size_t> left_idx, right_idx;
    for (std::size_t i : idx) (x(i, best_feature) <= best_threshold ? left_idx : right_idx).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(left_idx, depth + 1);
    const int r = build(right_idx, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(node_id)];
    node.feature = static_cast<int>(best_feature);
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return node_id;
  }
};

Tree grow_tree(const Matrix& x, std::span<const int> y, std::size_t classes, std::vector<std::size_t> idx,
               int max_depth, std::size_t max_features, Rng& rng) {
  TreeBuilder b{x, y, classes, max_depth, std::min(max_features, x.cols()), &rng, {}};
  b.build(idx, 0);
  return std::move(b.tree);
}

std::size_t forest_max_features(const ClassifierSpec& spec, std::size_t d) {
  if (spec.max_features > 0) return static_cast<std::size_t>(spec.max_features);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
}

ForestParams fit_rf(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y, std::size_t c) {
  ForestParams p;
  p.trees.resize(static_cast<std::size_t>(spec.n_trees));
  const std::size_t n = x.rows();
  const std::size_t mf = forest_max_features(spec, x.cols());
  const int n_trees = spec.n_trees;
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> idx(n);
    if (spec.bootstrap) {
      for (auto& i : idx) i = rng() % n;
    } else {
      std::iota(idx.begin(), idx.end(), std::size_t{0});
    }
    p.trees[static_cast<std::size_t>(t)] = grow_tree(x, y, c, std::move(idx), spec.max_depth, mf, rng);
  }
  return p;
}

// ---- MLP ----------------------------------------------------------------

MlpParams fit_mlp(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y, std::size_t c) {
  MlpParams p;
  p.hidden = spec.hidden_widths();
  p.dropout = spec.mlp_dropout;
  const std::size_t n = x.rows(), d = x.cols();
  Rng init_rng(spec.seed);
  p.weights = init_mlp(d, p.hidden, c, init_rng);
  const nn::Sequential net = build_mlp(p.weights, d, p.hidden, p.dropout, c);
  nn::Adam adam(p.weights, {.lr = spec.learning_rate});
  Rng order_rng(mix_seed(spec.seed, 1));
  Rng dropout_rng(mix_seed(spec.seed, 2));
  Rng mixup_rng(mix_seed(spec.seed, 3));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng() % i]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      const std::size_t b = std::min(spec.batch_size, n - start);
      Matrix xb(b, d), yb(b, c);
      for (std::size_t i = 0; i < b; ++i) {
        const auto src = x.row(order[start + i]);
        std::copy(src.begin(), src.end(), xb.row(i).begin());
        yb(i, static_cast<std::size_t>(y[order[start + i]])) = 1.0;
      }
      if (spec.mixup_alpha > 0.0 && b > 1) {
        const double lambda = sample_symmetric_beta(spec.mixup_alpha, mixup_rng);
        std::vector<std::size_t> perm(b);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = b; i > 1; --i) std::swap(perm[i - 1], perm[mixup_rng() % i]);
        auto mixed = mixup_batch(xb, yb, lambda, perm);
        xb = std::move(mixed.x);
        yb = std::move(mixed.y);
      }
      nn::Activation in;
      in.n = b;
      in.shape = {d, 1, 1};
      in.data = xb.values();
      nn::Context ctx{.train = true, .rng = &dropout_rng, .running_stats = nullptr};
      nn::Sequential::Trace trace;
      const nn::Activation out = net.forward(p.weights, std::move(in), ctx, &trace);
      Matrix probs = nn::to_matrix(out);
      nn::softmax_rows(probs);
      const double loss = nn::cross_entropy(probs, yb);
      if (!std::isfinite(loss)) fail(ErrorKind::kNumericOverflow, "MLP training: non-finite loss");
      epoch_loss += loss * static_cast<double>(b);
      auto grads = nn::zero_grads(p.weights);
      net.backward(p.weights, trace, nn::cross_entropy_logit_grad(probs, yb, out.shape), grads);
      adam.step(p.weights, grads);
    }
    p.loss_trace.push_back(epoch_loss / static_cast<double>(n));
  }
  p.weights.round_to_storage();
  return p;
}

Matrix mlp_scores(const MlpParams& p, const Matrix& x, std::size_t c) {
  const nn::Sequential net = build_mlp(p.weights, x.cols(), p.hidden, p.dropout, c);
  nn::Activation in;
  in.n = x.rows();
  in.shape = {x.cols(), 1, 1};
  in.data = x.values();
  nn::Context ctx;
  Matrix probs = nn::to_matrix(net.forward(p.weights, std::move(in), ctx, nullptr));
  nn::softmax_rows(probs);
  return probs;
}

}  // namespace

int Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                                     ? nodes[i].left
                                     : nodes[i].right);
  }
  return nodes[i].label;
}

nn::WeightStore init_mlp(std::size_t n_features, const std::vector<std::size_t>& hidden,
                         std::size_t n_classes, Rng& rng) {
  nn::WeightStore w;
  std::size_t in = n_features;
  std::vector<std::size_t> widths = hidden;
  widths.push_back(n_classes);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const std::string id = "fc" + std::to_string(l + 1);
    nn::Tensor weight{id + ".weight", {widths[l], in}, std::vector<double>(widths[l] * in), true};
    nn::kaiming_uniform(weight, in, rng);
    w.tensors.push_back(std::move(weight));
    w.tensors.push_back({id + ".bias", {widths[l]}, std::vector<double>(widths[l], 0.0), true});
    in = widths[l];
  }
  w.round_to_storage();
  return w;
}

nn::Sequential build_mlp(const nn::WeightStore& w, std::size_t n_features,
                         const std::vector<std::size_t>& hidden, const std::vector<double>& dropout,
                         std::size_t n_classes) {
  require(hidden.size() == dropout.size(), "build_mlp: one dropout rate per hidden layer");
  nn::Sequential net;
  std::size_t in = n_features;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    const std::string id = "fc" + std::to_string(l + 1);
    const int row = static_cast<int>(l);
    net.add(nn::linear(w.index_of(id + ".weight"), w.index_of(id + ".bias"), in, hidden[l]), row);
    net.add(nn::relu(), row);
    if (dropout[l] > 0.0) net.add(nn::dropout(dropout[l]), row);
    in = hidden[l];
  }
  const std::string id = "fc" + std::to_string(hidden.size() + 1);
  net.add(nn::linear(w.index_of(id + ".weight"), w.index_of(id + ".bias"), in, n_classes),
          static_cast<int>(hidden.size()));
  return net;
}

MixedBatch mixup_batch(const Matrix& x, const Matrix& y, double lambda, std::span<const std::size_t> perm) {
  require(lambda >= 0.0 && lambda <= 1.0, "mixup_batch: lambda must lie in [0, 1]");
  require(x.rows() == y.rows() && perm.size() == x.rows(), "mixup_batch: batch sizes differ");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    require(p < perm.size() && !seen[p], "mixup_batch: perm is not a permutation");
    seen[p] = true;
  }
  MixedBatch out{Matrix(x.rows(), x.cols()), Matrix(y.rows(), y.cols())};
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out.x(i, j) = lambda * x(i, j) + (1.0 - lambda) * x(perm[i], j);
    for (std::size_t j = 0; j < y.cols(); ++j) out.y(i, j) = lambda * y(i, j) + (1.0 - lambda) * y(perm[i], j);
  }
  return out;
}

FittedModel fit(const ClassifierSpec& spec, const Matrix& x, std::span<const int> y, std::size_t n_classes) {
  spec.validate();
  require(x.rows() == y.size(), "fit: X and y have different lengths");
  require(x.rows() >= 2 && x.cols() >= 1, "fit: need N >= 2 and D >= 1");
  for (double v : x.values()) {
    if (!std::isfinite(v)) fail(ErrorKind::kInvalidInput, "fit: non-finite feature value");
  }
  std::set<int> classes;
  for (int label : y) {
    require(label >= 0, "fit: negative label");
    classes.insert(label);
  }
  const std::size_t c = n_classes > 0 ? n_classes : static_cast<std::size_t>(*classes.rbegin()) + 1;
  require(static_cast<std::size_t>(*classes.rbegin()) < c, "fit: label outside [0, n_classes)");
  if (classes.size() < 2) fail(ErrorKind::kDegenerateTraining, "fit: training labels contain a single class");

  FittedModel m;
  m.spec = spec;
  m.n_features = x.cols();
  m.n_classes = c;
  switch (spec.kind) {
    case Kind::kLr: m.params = fit_lr(spec, x, y, c); break;
    case Kind::kSvm: m.params = fit_svm(spec, x, y, c); break;
    case Kind::kDt: {
      Rng rng(spec.seed);
      std::vector<std::size_t> idx(x.rows());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      const std::size_t mf = spec.max_features > 0 ? static_cast<std::size_t>(spec.max_features) : x.cols();
      m.params = grow_tree(x, y, c, std::move(idx), spec.max_depth, mf, rng);
      break;
    }
    case Kind::kRf: m.params = fit_rf(spec, x, y, c); break;
    case Kind::kMlp: m.params = fit_mlp(spec, x, y, c); break;
    case Kind::kConstant: m.params = ConstantParams{0}; break;
  }
  return m;
}

Prediction predict(const FittedModel& m, const Matrix& x) {
  require(x.cols() == m.n_features, "predict: expected " + std::to_string(m.n_features) + " features, got " +
                                        std::to_string(x.cols()));
  const std::size_t q = x.rows(), c = m.n_classes;
  Prediction out;
  out.scores = Matrix(q, c);
  if (const auto* p = std::get_if<LinearParams>(&m.params)) {
    for (std::size_t i = 0; i < q; ++i) {
      auto row = out.scores.row(i);
      for (std::size_t k = 0; k < c; ++k) {
        double s = p->bias[k];
        for (std::size_t j = 0; j < x.cols(); ++j) s += p->weight(k, j) * x(i, j);
        row[k] = s;
      }
      softmax_inplace(row);
    }
  } else if (const auto* p = std::get_if<SvmParams>(&m.params)) {
    std::vector<double> kv(p->support.rows());
    for (std::size_t i = 0; i < q; ++i) {
      for (std::size_t s = 0; s < kv.size(); ++s) kv[s] = rbf(x.row(i), p->support.row(s), p->gamma);
      for (std::size_t k = 0; k < c; ++k) {
        double f = -p->rho[k];
        for (std::size_t s = 0; s < kv.size(); ++s) f += p->dual_coef(k, s) * kv[s];
        out.scores(i, k) = f;
      }
    }
  } else if (const auto* p = std::get_if<Tree>(&m.params)) {
    for (std::size_t i = 0; i < q; ++i) out.scores(i, static_cast<std::size_t>(p->predict(x.row(i)))) = 1.0;
  } else if (const auto* p = std::get_if<ForestParams>(&m.params)) {
    const auto n_trees = static_cast<double>(p->trees.size());
    for (std::size_t i = 0; i < q; ++i) {
      std::vector<int> votes(c, 0);
      for (const auto& t : p->trees) ++votes[static_cast<std::size_t>(t.predict(x.row(i)))];
      for (std::size_t k = 0; k < c; ++k) out.scores(i, k) = votes[k] / n_trees;
    }
  } else if (const auto* p = std::get_if<MlpParams>(&m.params)) {
    out.scores = mlp_scores(*p, x, c);
  } else if (const auto* p = std::get_if<ConstantParams>(&m.params)) {
    for (std::size_t i = 0; i < q; ++i) out.scores(i, static_cast<std::size_t>(p->label)) = 1.0;
  }
  out.labels.resize(q);
  for (std::size_t i = 0; i < q; ++i) out.labels[i] = argmax_row(out.scores.row(i));
  return out;
}

}  // namespace genrestat::classifiers
