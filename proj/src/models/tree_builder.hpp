#pragma once

#include <functional>
#include <span>
#include <vector>

#include "json.hpp"
#include "qs/models.hpp"
#include "qs/random.hpp"

namespace qs::detail {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder, root first

  double predict(const double* x) const;  // x[feature] <= threshold goes left
  nlohmann::ordered_json to_json() const;
  static Tree from_json(const nlohmann::json& j);
};

struct TreeParams {
  int max_depth = -1;  // -1: unlimited
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  double min_child_weight = 0.0;
  double lambda = 0.0;
  double gamma = 0.0;     // minimum gain to split
  int max_features = 0;   // 0: all features
};

// Exact greedy splits scored by G_L^2/(H_L+l) + G_R^2/(H_R+l) - G^2/(H+l).
// With g = w*y and h = w the score is the weighted Gini decrease (up to a
// factor 2); with loss gradients and hessians it is the boosting gain.
class TreeBuilder {
 public:
  explicit TreeBuilder(const Matrix& x);

  using LeafFn = std::function<double(std::span<const int> samples)>;

  // Samples with h <= 0 are left out. `rng` draws feature subsets when
  // params.max_features > 0.
  Tree build(std::span<const double> g, std::span<const double> h, const TreeParams& params,
             const LeafFn& leaf, Rng* rng = nullptr) const;

 private:
  const Matrix& x_;
  std::vector<std::vector<int>> sorted_;  // per feature, sample indices by value
};

}  // namespace qs::detail
