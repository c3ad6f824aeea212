#include <algorithm>
#include <cmath>

#include "models/classifier.hpp"
#include "models/tree_builder.hpp"
#include "qs/error.hpp"

namespace qs::detail {
namespace {

std::size_t node_count(const std::vector<Tree>& trees) {
  std::size_t n = 0;
  for (const auto& t : trees) n += t.nodes.size();
  return n;
}

ordered_json trees_json(const std::vector<Tree>& trees) {
  ordered_json arr = ordered_json::array();
  for (const auto& t : trees) arr.push_back(t.to_json());
  return arr;
}

std::vector<Tree> trees_from_json(const json& arr) {
  std::vector<Tree> out;
  for (const auto& t : arr) out.push_back(Tree::from_json(t));
  return out;
}

double mean_probability(std::span<const int> samples, std::span<const double> g, std::span<const double> h) {
  double gs = 0, hs = 0;
  for (int i : samples) {
    gs += g[static_cast<std::size_t>(i)];
    hs += h[static_cast<std::size_t>(i)];
  }
  return hs > 0 ? gs / hs : 0.5;
}

// Leaves hold the probability of Engaged; a forest averages them.
class TreeAverage final : public Classifier {
 public:
  explicit TreeAverage(std::vector<Tree> trees) : trees_(std::move(trees)) {}

  double predict(const double* x) const override {
    double s = 0;
    for (const auto& t : trees_) s += t.predict(x);
    return s / static_cast<double>(trees_.size());
  }
  ordered_json params() const override {
    ordered_json j;
    j["trees"] = trees_json(trees_);
    return j;
  }
  std::size_t complexity() const override { return node_count(trees_); }

 private:
  std::vector<Tree> trees_;
};

// Additive log-odds model; leaves already carry the learning rate.
class BoostedTrees final : public Classifier {
 public:
  BoostedTrees(double base, std::vector<Tree> trees) : base_(base), trees_(std::move(trees)) {}

  double margin(const double* x) const {
    double f = base_;
    for (const auto& t : trees_) f += t.predict(x);
    return f;
  }
  double predict(const double* x) const override { return sigmoid(margin(x)); }
  ordered_json params() const override {
    ordered_json j;
    j["base_margin"] = base_;
    j["trees"] = trees_json(trees_);
    return j;
  }
  std::size_t complexity() const override { return node_count(trees_) + 1; }

 private:
  double base_;
  std::vector<Tree> trees_;
};

TreeParams tree_params(const json& hp) {
  TreeParams p;
  p.max_depth = hp.value("max_depth", -1);
  p.min_samples_leaf = hp.value("min_samples_leaf", 1);
  p.min_samples_split = hp.value("min_samples_split", 2);
  return p;
}

double base_margin(const std::vector<int>& y) {
  double pos = 0;
  for (int v : y) pos += v;
  double p = std::clamp(pos / static_cast<double>(y.size()), 1e-6, 1 - 1e-6);
  return std::log(p / (1 - p));
}

int resolve_max_features(const json& v, std::size_t dims) {
  if (v.is_string()) {
    auto s = v.get<std::string>();
    if (s == "sqrt") return std::max(1, static_cast<int>(std::sqrt(static_cast<double>(dims))));
    if (s == "log2") return std::max(1, static_cast<int>(std::log2(static_cast<double>(dims))));
    if (s == "all") return 0;
  }
  if (v.is_number_integer()) return std::clamp(v.get<int>(), 0, static_cast<int>(dims));
  throw Error(ErrorCode::InvalidHyperparameter, "max_features must be sqrt, log2, all or an integer");
}

}  // namespace

std::unique_ptr<Classifier> fit_decision_tree(const FitInput& in) {
  const auto n = in.y.size();
  std::vector<double> g(n), h(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) g[i] = in.y[i];
  TreeBuilder builder(in.x);
  auto leaf = [&](std::span<const int> s) { return mean_probability(s, g, h); };
  std::vector<Tree> trees{builder.build(g, h, tree_params(in.hp), leaf)};
  return std::make_unique<TreeAverage>(std::move(trees));
}

std::unique_ptr<Classifier> fit_random_forest(const FitInput& in) {
  const auto n = in.y.size();
  TreeParams p = tree_params(in.hp);
  p.max_features = resolve_max_features(in.hp.at("max_features"), static_cast<std::size_t>(in.x.cols()));
  const int n_trees = in.hp.at("n_trees").get<int>();
  const bool bootstrap = in.hp.at("bootstrap").get<bool>();
  TreeBuilder builder(in.x);
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(n_trees));
  std::vector<double> g(n), h(n);
  for (int t = 0; t < n_trees; ++t) {
    Rng rng(mix_seed(in.seed, static_cast<std::uint64_t>(t)));
    if (bootstrap) {
      std::fill(h.begin(), h.end(), 0.0);
      for (std::size_t k = 0; k < n; ++k) h[rng.below(n)] += 1.0;
    } else {
      std::fill(h.begin(), h.end(), 1.0);
    }
    for (std::size_t i = 0; i < n; ++i) g[i] = h[i] * in.y[i];
    auto leaf = [&](std::span<const int> s) { return mean_probability(s, g, h); };
    trees.push_back(builder.build(g, h, p, leaf, &rng));
  }
  return std::make_unique<TreeAverage>(std::move(trees));
}

std::unique_ptr<Classifier> fit_gbm(const FitInput& in) {
  const auto n = in.y.size();
  const int rounds = in.hp.at("n_estimators").get<int>();
  const double lr = in.hp.at("learning_rate").get<double>();
  TreeParams p = tree_params(in.hp);
  const double base = base_margin(in.y);
  TreeBuilder builder(in.x);
  std::vector<double> f(n, base), r(n), ones(n, 1.0), prob(n);
  std::vector<Tree> trees;
  for (int t = 0; t < rounds; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      prob[i] = sigmoid(f[i]);
      r[i] = in.y[i] - prob[i];
    }
    // Least-squares split on residuals, one Newton step per leaf.
    auto leaf = [&](std::span<const int> s) {
      double num = 0, den = 0;
      for (int i : s) {
        num += r[static_cast<std::size_t>(i)];
        den += prob[static_cast<std::size_t>(i)] * (1 - prob[static_cast<std::size_t>(i)]);
      }
      return den > 1e-12 ? lr * num / den : 0.0;
    };
    Tree tree = builder.build(r, ones, p, leaf);
    for (std::size_t i = 0; i < n; ++i) f[i] += tree.predict(in.x.row(static_cast<Eigen::Index>(i)).data());
    trees.push_back(std::move(tree));
  }
  return std::make_unique<BoostedTrees>(base, std::move(trees));
}

std::unique_ptr<Classifier> fit_xgb(const FitInput& in) {
  const auto n = in.y.size();
  const int rounds = in.hp.at("n_estimators").get<int>();
  const double eta = in.hp.at("learning_rate").get<double>();
  TreeParams p = tree_params(in.hp);
  p.lambda = in.hp.at("lambda").get<double>();
  p.gamma = in.hp.at("gamma").get<double>();
  p.min_child_weight = in.hp.at("min_child_weight").get<double>();
  const double base = base_margin(in.y);
  TreeBuilder builder(in.x);
  std::vector<double> f(n, base), g(n), h(n);
  std::vector<Tree> trees;
  for (int t = 0; t < rounds; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      double pr = sigmoid(f[i]);
      g[i] = pr - in.y[i];
      h[i] = std::max(pr * (1 - pr), 1e-16);
    }
    auto leaf = [&](std::span<const int> s) {
      double gs = 0, hs = 0;
      for (int i : s) {
        gs += g[static_cast<std::size_t>(i)];
        hs += h[static_cast<std::size_t>(i)];
      }
      return -eta * gs / (hs + p.lambda);
    };
    Tree tree = builder.build(g, h, p, leaf);
    for (std::size_t i = 0; i < n; ++i) f[i] += tree.predict(in.x.row(static_cast<Eigen::Index>(i)).data());
    trees.push_back(std::move(tree));
  }
  return std::make_unique<BoostedTrees>(base, std::move(trees));
}

std::unique_ptr<Classifier> load_tree_model(ModelKind kind, const json& params) {
  auto trees = trees_from_json(params.at("trees"));
  if (kind == ModelKind::DT || kind == ModelKind::RF) {
    if (trees.empty()) throw Error(ErrorCode::Serialization, "forest without trees");
    return std::make_unique<TreeAverage>(std::move(trees));
  }
  return std::make_unique<BoostedTrees>(params.at("base_margin").get<double>(), std::move(trees));
}

}  // namespace qs::detail
