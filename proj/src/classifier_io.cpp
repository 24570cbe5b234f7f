#include <string>

#include "genrestat/classifiers.hpp"
#include "genrestat/container.hpp"
#include "genrestat/error.hpp"

namespace genrestat::classifiers {

using nlohmann::json;

namespace {

constexpr std::string_view kModelKind = "genre_classifier";

nn::Tensor f64_tensor(std::string name, std::vector<std::size_t> shape, std::vector<double> values) {
  nn::Tensor t{std::move(name), std::move(shape), std::move(values), false};
  t.dtype = nn::DType::kFloat64;
  return t;
}

nn::Tensor matrix_tensor(std::string name, const Matrix& m) {
  return f64_tensor(std::move(name), {m.rows(), m.cols()}, m.values());
}

Matrix tensor_matrix(const nn::Tensor& t) {
  if (t.shape.size() != 2) fail(ErrorKind::kFormat, "classifier tensor '" + t.name + "' is not a matrix");
  Matrix m(t.shape[0], t.shape[1]);
  m.values() = t.values;
  return m;
}

constexpr std::size_t kNodeFields = 5;

nn::Tensor tree_tensor(const std::string& name, const Tree& tree) {
  std::vector<double> v;
  v.reserve(tree.nodes.size() * kNodeFields);
  for (const auto& n : tree.nodes) {
    v.insert(v.end(), {static_cast<double>(n.feature), n.threshold, static_cast<double>(n.left),
                       static_cast<double>(n.right), static_cast<double>(n.label)});
  }
  return f64_tensor(name, {tree.nodes.size(), kNodeFields}, std::move(v));
}

Tree tensor_tree(const nn::Tensor& t, std::size_t n_features, std::size_t n_classes) {
  if (t.shape.size() != 2 || t.shape[1] != kNodeFields || t.shape[0] == 0) {
    fail(ErrorKind::kFormat, "tree tensor '" + t.name + "' has a bad shape");
  }
  Tree tree;
  const auto n_nodes = static_cast<int>(t.shape[0]);
  for (std::size_t i = 0; i < t.shape[0]; ++i) {
    const double* r = t.values.data() + i * kNodeFields;
    TreeNode n{static_cast<int>(r[0]), r[1], static_cast<int>(r[2]), static_cast<int>(r[3]),
               static_cast<int>(r[4])};
    const bool leaf = n.feature < 0;
    const bool ok = n.label >= 0 && static_cast<std::size_t>(n.label) < n_classes &&
                    (leaf || (static_cast<std::size_t>(n.feature) < n_features && n.left > static_cast<int>(i) &&
                              n.right > static_cast<int>(i) && n.left < n_nodes && n.right < n_nodes));
    if (!ok) fail(ErrorKind::kFormat, "tree tensor '" + t.name + "' has an invalid node");
    tree.nodes.push_back(n);
  }
  return tree;
}

}  // namespace

void save_classifier(const std::filesystem::path& manifest, const FittedModel& model, const json& run_config) {
  json meta = {{"kind", kModelKind},
               {"spec", to_json(model.spec)},
               {"n_features", model.n_features},
               {"n_classes", model.n_classes},
               {"run_config", run_config}};
  nn::WeightStore store;
  if (const auto* p = std::get_if<LinearParams>(&model.params)) {
    store.tensors.push_back(matrix_tensor("weight", p->weight));
    store.tensors.push_back(f64_tensor("bias", {p->bias.size()}, p->bias));
  } else if (const auto* p = std::get_if<SvmParams>(&model.params)) {
    meta["gamma"] = p->gamma;
    store.tensors.push_back(matrix_tensor("support", p->support));
    store.tensors.push_back(matrix_tensor("dual_coef", p->dual_coef));
    store.tensors.push_back(f64_tensor("rho", {p->rho.size()}, p->rho));
  } else if (const auto* p = std::get_if<Tree>(&model.params)) {
    store.tensors.push_back(tree_tensor("tree0", *p));
  } else if (const auto* p = std::get_if<ForestParams>(&model.params)) {
    for (std::size_t t = 0; t < p->trees.size(); ++t) {
      store.tensors.push_back(tree_tensor("tree" + std::to_string(t), p->trees[t]));
    }
  } else if (const auto* p = std::get_if<MlpParams>(&model.params)) {
    meta["hidden"] = p->hidden;
    meta["dropout"] = p->dropout;
    meta["loss_trace"] = p->loss_trace;
    store = p->weights;
  } else if (const auto* p = std::get_if<ConstantParams>(&model.params)) {
    meta["label"] = p->label;
  }
  container::save(manifest, meta, store);
}

FittedModel load_classifier(const std::filesystem::path& manifest) {
  auto loaded = container::load(manifest);
  const json& meta = loaded.meta;
  if (meta.value("kind", std::string()) != kModelKind) {
    fail(ErrorKind::kFormat, manifest.string() + ": not a classifier file");
  }
  FittedModel m;
  auto& w = loaded.weights;
  try {
    m.spec = spec_from_json(meta.at("spec"));
    m.n_features = meta.at("n_features").get<std::size_t>();
    m.n_classes = meta.at("n_classes").get<std::size_t>();
    auto tensor = [&](std::string_view name) -> const nn::Tensor& {
      for (const auto& t : w.tensors) {
        if (t.name == name) return t;
      }
      fail(ErrorKind::kFormat, manifest.string() + ": missing tensor '" + std::string(name) + "'");
    };
    switch (m.spec.kind) {
      case Kind::kLr: {
        LinearParams p{tensor_matrix(tensor("weight")), tensor("bias").values};
        if (p.weight.rows() != m.n_classes || p.weight.cols() != m.n_features || p.bias.size() != m.n_classes) {
          fail(ErrorKind::kFormat, manifest.string() + ": LR tensor shapes do not match");
        }
        m.params = std::move(p);
        break;
      }
      case Kind::kSvm: {
        SvmParams p{meta.at("gamma").get<double>(), tensor_matrix(tensor("support")),
                    tensor_matrix(tensor("dual_coef")), tensor("rho").values};
        if (p.support.cols() != m.n_features || p.dual_coef.rows() != m.n_classes ||
            p.dual_coef.cols() != p.support.rows() || p.rho.size() != m.n_classes) {
          fail(ErrorKind::kFormat, manifest.string() + ": SVM tensor shapes do not match");
        }
        m.params = std::move(p);
        break;
      }
      case Kind::kDt: m.params = tensor_tree(tensor("tree0"), m.n_features, m.n_classes); break;
      case Kind::kRf: {
        ForestParams p;
        for (const auto& t : w.tensors) p.trees.push_back(tensor_tree(t, m.n_features, m.n_classes));
        if (p.trees.empty()) fail(ErrorKind::kFormat, manifest.string() + ": forest has no trees");
        m.params = std::move(p);
        break;
      }
      case Kind::kMlp: {
        MlpParams p{meta.at("hidden").get<std::vector<std::size_t>>(),
                    meta.at("dropout").get<std::vector<double>>(), std::move(w),
                    meta.at("loss_trace").get<std::vector<double>>()};
        // Validates tensor names and shapes against the declared widths.
        const nn::Sequential net = build_mlp(p.weights, m.n_features, p.hidden, p.dropout, m.n_classes);
        net.shapes({m.n_features, 1, 1});
        for (std::size_t l = 0; l <= p.hidden.size(); ++l) {
          const std::size_t in = l == 0 ? m.n_features : p.hidden[l - 1];
          const std::size_t out = l == p.hidden.size() ? m.n_classes : p.hidden[l];
          const std::string id = "fc" + std::to_string(l + 1);
          if (p.weights.at(id + ".weight").shape != std::vector<std::size_t>{out, in} ||
              p.weights.at(id + ".bias").shape != std::vector<std::size_t>{out}) {
            fail(ErrorKind::kFormat, manifest.string() + ": MLP tensor '" + id + "' has the wrong shape");
          }
        }
        m.params = std::move(p);
        break;
      }
      case Kind::kConstant: m.params = ConstantParams{meta.at("label").get<int>()}; break;
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, manifest.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kContractViolation) fail(ErrorKind::kFormat, manifest.string() + ": " + e.what());
    throw;
  }
  return m;
}

}  // namespace genrestat::classifiers
