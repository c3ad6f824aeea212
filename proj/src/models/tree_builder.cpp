#include "models/tree_builder.hpp"

#include <algorithm>
#include <numeric>

#include "qs/error.hpp"

namespace qs::detail {
namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t left_count = 0;
};

class Growth {
 public:
  Growth(const Matrix& x, std::span<const double> g, std::span<const double> h, const TreeParams& p,
         const TreeBuilder::LeafFn& leaf, Rng* rng, std::vector<std::vector<int>> order)
      : x_(x), g_(g), h_(h), p_(p), leaf_(leaf), rng_(rng), order_(std::move(order)),
        goes_left_(static_cast<std::size_t>(x.rows()), 0), features_(static_cast<std::size_t>(x.cols())) {
    std::iota(features_.begin(), features_.end(), 0);
  }

  Tree run() {
    Tree t;
    if (!order_.empty() && !order_[0].empty()) grow(t, 0, order_[0].size(), 0);
    return t;
  }

 private:
  double score(double gs, double hs) const { return gs * gs / (hs + p_.lambda); }

  int grow(Tree& t, std::size_t b, std::size_t e, int depth) {
    int id = static_cast<int>(t.nodes.size());
    t.nodes.emplace_back();
    const auto n = e - b;
    Split best;
    bool may_split = (p_.max_depth < 0 || depth < p_.max_depth) &&
                     n >= static_cast<std::size_t>(std::max(p_.min_samples_split, 2 * p_.min_samples_leaf));
    if (may_split) best = find_split(b, e);
    if (best.feature < 0) {
      t.nodes[id].value = leaf_(std::span<const int>(order_[0].data() + b, n));
      return id;
    }
    partition(b, e, best);
    t.nodes[id].feature = best.feature;
    t.nodes[id].threshold = best.threshold;
    int l = grow(t, b, b + best.left_count, depth + 1);
    int r = grow(t, b + best.left_count, e, depth + 1);
    t.nodes[id].left = l;
    t.nodes[id].right = r;
    return id;
  }

  Split find_split(std::size_t b, std::size_t e) {
    double G = 0, H = 0;
    for (std::size_t k = b; k < e; ++k) {
      int i = order_[0][k];
      G += g_[i];
      H += h_[i];
    }
    const double parent = score(G, H);
    const std::size_t n = e - b;
    const auto msl = static_cast<std::size_t>(std::max(1, p_.min_samples_leaf));

    std::size_t m = features_.size();
    if (p_.max_features > 0 && static_cast<std::size_t>(p_.max_features) < m && rng_) {
      // Partial Fisher-Yates over a fresh identity permutation keeps the draw
      // independent of earlier nodes' orderings.
      std::iota(features_.begin(), features_.end(), 0);
      m = static_cast<std::size_t>(p_.max_features);
      for (std::size_t k = 0; k < m; ++k) {
        std::size_t j = k + static_cast<std::size_t>(rng_->below(features_.size() - k));
        std::swap(features_[k], features_[j]);
      }
    }

    Split best;
    for (std::size_t fi = 0; fi < m; ++fi) {
      const int f = features_[fi];
      const auto& ord = order_[static_cast<std::size_t>(f)];
      double gl = 0, hl = 0;
      for (std::size_t k = b; k + 1 < e; ++k) {
        int i = ord[k];
        gl += g_[i];
        hl += h_[i];
        const std::size_t nl = k - b + 1;
        double xi = x_(i, f);
        double xn = x_(ord[k + 1], f);
        if (xi == xn) continue;
        if (nl < msl || n - nl < msl) continue;
        double hr = H - hl;
        if (hl < p_.min_child_weight || hr < p_.min_child_weight) continue;
        double gain = score(gl, hl) + score(G - gl, hr) - parent;
        if (gain > best.gain + 1e-12 * std::max(1.0, std::abs(parent))) {
          double thr = 0.5 * (xi + xn);
          if (!(thr < xn)) thr = xi;
          best = Split{f, thr, gain, nl};
        }
      }
    }
    if (best.feature >= 0 && best.gain <= p_.gamma) best.feature = -1;
    return best;
  }

  void partition(std::size_t b, std::size_t e, const Split& s) {
    for (std::size_t k = b; k < e; ++k) {
      int i = order_[0][k];
      goes_left_[i] = x_(i, s.feature) <= s.threshold;
    }
    scratch_.resize(e - b);
    for (auto& ord : order_) {
      std::size_t l = b, r = 0;
      for (std::size_t k = b; k < e; ++k) {
        int i = ord[k];
        if (goes_left_[i]) ord[l++] = i;
        else scratch_[r++] = i;
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r), ord.begin() + static_cast<std::ptrdiff_t>(l));
    }
  }

  const Matrix& x_;
  std::span<const double> g_, h_;
  const TreeParams& p_;
  const TreeBuilder::LeafFn& leaf_;
  Rng* rng_;
  std::vector<std::vector<int>> order_;
  std::vector<char> goes_left_;
  std::vector<int> features_;
  std::vector<int> scratch_;
};

}  // namespace

double Tree::predict(const double* x) const {
  int id = 0;
  while (nodes[id].feature >= 0) {
    id = x[nodes[id].feature] <= nodes[id].threshold ? nodes[id].left : nodes[id].right;
  }
  return nodes[id].value;
}

nlohmann::ordered_json Tree::to_json() const {
  std::vector<int> feature, left, right;
  std::vector<double> threshold, value;
  for (const auto& n : nodes) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
  }
  nlohmann::ordered_json j;
  j["feature"] = feature;
  j["threshold"] = threshold;
  j["left"] = left;
  j["right"] = right;
  j["value"] = value;
  return j;
}

Tree Tree::from_json(const nlohmann::json& j) {
  auto feature = j.at("feature").get<std::vector<int>>();
  auto threshold = j.at("threshold").get<std::vector<double>>();
  auto left = j.at("left").get<std::vector<int>>();
  auto right = j.at("right").get<std::vector<int>>();
  auto value = j.at("value").get<std::vector<double>>();
  const auto n = feature.size();
  if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || n == 0) {
    throw Error(ErrorCode::Serialization, "tree arrays disagree in length");
  }
  Tree t;
  t.nodes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.nodes[i] = TreeNode{feature[i], threshold[i], left[i], right[i], value[i]};
    if (feature[i] >= 0 && (left[i] <= static_cast<int>(i) || right[i] <= static_cast<int>(i) ||
                            left[i] >= static_cast<int>(n) || right[i] >= static_cast<int>(n))) {
      throw Error(ErrorCode::Serialization, "tree child index out of order");
    }
  }
  return t;
}

TreeBuilder::TreeBuilder(const Matrix& x) : x_(x), sorted_(static_cast<std::size_t>(x.cols())) {
  const auto n = static_cast<int>(x.rows());
  for (std::size_t f = 0; f < sorted_.size(); ++f) {
    auto& ord = sorted_[f];
    ord.resize(static_cast<std::size_t>(n));
    std::iota(ord.begin(), ord.end(), 0);
    const auto col = static_cast<Eigen::Index>(f);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return x(a, col) < x(b, col); });
  }
}

Tree TreeBuilder::build(std::span<const double> g, std::span<const double> h, const TreeParams& params,
                        const LeafFn& leaf, Rng* rng) const {
  std::vector<std::vector<int>> order(sorted_.size());
  for (std::size_t f = 0; f < sorted_.size(); ++f) {
    order[f].reserve(sorted_[f].size());
    for (int i : sorted_[f]) {
      if (h[static_cast<std::size_t>(i)] > 0.0) order[f].push_back(i);
    }
  }
  Growth growth(x_, g, h, params, leaf, rng, std::move(order));
  Tree t = growth.run();
  if (t.nodes.empty()) {
    t.nodes.emplace_back();
    t.nodes[0].value = leaf(std::span<const int>());
  }
  return t;
}

}  // namespace qs::detail
