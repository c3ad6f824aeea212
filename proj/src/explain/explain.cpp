#include "qs/explain.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include <Eigen/Dense>

#include "qs/error.hpp"
#include "qs/random.hpp"

namespace qs {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;
using Mask = std::uint64_t;

constexpr std::size_t kMaxRowsPerBatch = 1 << 16;

// Mean model output over the background with inputs in `mask` taken from x.
std::vector<double> coalition_values(const BatchPredictor& f, std::span<const double> x, const Matrix& bg,
                                     std::span<const Mask> masks) {
  const auto b = static_cast<std::size_t>(bg.rows());
  const auto d = x.size();
  std::vector<double> out(masks.size(), 0.0);
  const std::size_t per_batch = std::max<std::size_t>(1, kMaxRowsPerBatch / b);
  for (std::size_t start = 0; start < masks.size(); start += per_batch) {
    const std::size_t end = std::min(masks.size(), start + per_batch);
    Matrix z(static_cast<Eigen::Index>((end - start) * b), static_cast<Eigen::Index>(d));
    for (std::size_t c = start; c < end; ++c) {
      for (std::size_t r = 0; r < b; ++r) {
        const auto row = static_cast<Eigen::Index>((c - start) * b + r);
        for (std::size_t j = 0; j < d; ++j) {
          z(row, static_cast<Eigen::Index>(j)) =
              (masks[c] >> j) & 1 ? x[j] : bg(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        }
      }
    }
    auto pred = f(z);
    for (std::size_t c = start; c < end; ++c) {
      double s = 0;
      for (std::size_t r = 0; r < b; ++r) s += pred[(c - start) * b + r];
      out[c] = s / static_cast<double>(b);
    }
  }
  return out;
}

double predict_one(const BatchPredictor& f, std::span<const double> x) {
  Matrix m(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = x[j];
  return f(m).at(0);
}

void check_inputs(std::span<const double> x, const Matrix& bg) {
  if (bg.rows() == 0) throw Error(ErrorCode::EmptyBackground, "background set is empty");
  if (static_cast<std::size_t>(bg.cols()) != x.size()) {
    throw Error(ErrorCode::LengthMismatch, "background width differs from the explained input");
  }
  if (x.size() > 63) throw Error(ErrorCode::TooManyFeatures, "at most 63 model inputs are supported");
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return r;
}

// Every mask of `size` bits among the low `m` bits, increasing.
template <class Fn>
void for_each_mask_of_size(std::size_t m, std::size_t size, Fn&& fn) {
  if (size == 0) {
    fn(Mask{0});
    return;
  }
  Mask v = (Mask{1} << size) - 1;
  const Mask limit = Mask{1} << m;
  while (v < limit) {
    fn(v);
    Mask t = v | (v - 1);
    v = (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
  }
}

}  // namespace

BatchPredictor predictor_for(const TrainedModel& model) {
  return [&model](const Matrix& x) { return model.predict_proba_batch(x); };
}

double ShapExplanation::residual() const {
  return model_output - base_value - std::accumulate(attributions.begin(), attributions.end(), 0.0);
}

double shapley_kernel_weight(std::size_t players, std::size_t size) {
  if (size == 0 || size >= players) return 0.0;
  return static_cast<double>(players - 1) /
         (binomial(players, size) * static_cast<double>(size) * static_cast<double>(players - size));
}

ShapExplanation kernel_shap(const BatchPredictor& f, std::span<const double> x, const Matrix& background,
                            const KernelOptions& options) {
  check_inputs(x, background);
  const std::size_t m = x.size();
  ShapExplanation out;
  out.attributions.assign(m, 0.0);
  out.model_output = predict_one(f, x);
  const Mask empty = 0;
  out.base_value = coalition_values(f, x, background, std::span(&empty, 1))[0];
  const double delta = out.model_output - out.base_value;
  if (m == 0) return out;
  if (m == 1) {
    out.attributions[0] = delta;
    return out;
  }
  if (options.budget < m + 2) {
    throw Error(ErrorCode::BudgetTooSmall, "coalition budget " + std::to_string(options.budget) + " below " +
                                               std::to_string(m + 2));
  }

  std::map<Mask, double> weights;
  const Mask full = m == 64 ? ~Mask{0} : (Mask{1} << m) - 1;
  if (m < 63 && (Mask{1} << m) - 2 <= options.budget) {
    for (Mask s = 1; s < full; ++s) weights[s] = shapley_kernel_weight(m, static_cast<std::size_t>(std::popcount(s)));
  } else {
    const std::size_t sizes = (m - 1 + 1) / 2;   // ceil((m-1)/2)
    const std::size_t paired = (m - 1) / 2;
    std::vector<double> size_weight(sizes + 1, 0.0);
    for (std::size_t s = 1; s <= sizes; ++s) {
      size_weight[s] = static_cast<double>(m - 1) / static_cast<double>(s * (m - s));
      if (s <= paired) size_weight[s] *= 2;
    }
    const double total = std::accumulate(size_weight.begin(), size_weight.end(), 0.0);
    for (auto& w : size_weight) w /= total;

    double remaining = static_cast<double>(options.budget);
    std::size_t next = 1;
    for (; next <= sizes; ++next) {
      const bool is_paired = next <= paired;
      const double count = binomial(m, next) * (is_paired ? 2 : 1);
      double left = 0;
      for (std::size_t s = next; s <= sizes; ++s) left += size_weight[s];
      if (remaining * size_weight[next] / left + 1e-8 < count) break;
      double w = size_weight[next] / binomial(m, next) / (is_paired ? 2.0 : 1.0);
      for_each_mask_of_size(m, next, [&](Mask s) {
        weights[s] += w;
        if (is_paired) weights[full & ~s] += w;
      });
      remaining -= count;
    }

    if (next <= sizes && remaining >= 1) {
      double left = 0;
      for (std::size_t s = next; s <= sizes; ++s) left += size_weight[s];
      Rng rng(options.seed);
      std::map<Mask, double> drawn;
      std::size_t used = 0;
      const auto slots = static_cast<std::size_t>(remaining);
      for (std::size_t tries = 0; used < slots && tries < 8 * options.budget; ++tries) {
        double u = rng.uniform() * left;
        std::size_t size = next;
        for (; size < sizes && u >= size_weight[size]; ++size) u -= size_weight[size];
        std::vector<std::size_t> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        rng.shuffle(idx);
        Mask s = 0;
        for (std::size_t k = 0; k < size; ++k) s |= Mask{1} << idx[k];
        const bool is_paired = size <= paired;
        if (!drawn.count(s)) used += is_paired ? 2 : 1;
        drawn[s] += 1;
        if (is_paired) drawn[full & ~s] += 1;
      }
      double drawn_total = 0;
      for (const auto& [s, c] : drawn) drawn_total += c;
      for (const auto& [s, c] : drawn) weights[s] += left * c / drawn_total;
    }
  }

  std::vector<Mask> masks;
  masks.reserve(weights.size());
  for (const auto& [s, w] : weights) masks.push_back(s);
  auto values = coalition_values(f, x, background, masks);

  // Efficiency eliminates the last input: phi_last = delta - sum(rest).
  const auto k = static_cast<Eigen::Index>(m - 1);
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(k);
  double wsum = 0;
  for (const auto& [s, w] : weights) wsum += w;
  Eigen::VectorXd row(k);
  for (std::size_t c = 0; c < masks.size(); ++c) {
    const Mask s = masks[c];
    const double w = weights[s] / wsum;
    const double z_last = static_cast<double>((s >> (m - 1)) & 1);
    for (Eigen::Index i = 0; i < k; ++i) row[i] = static_cast<double>((s >> i) & 1) - z_last;
    const double target = values[c] - out.base_value - z_last * delta;
    ata.noalias() += w * row * row.transpose();
    atb += w * target * row;
  }
  ata.diagonal().array() += options.damping;
  Eigen::VectorXd phi = ata.ldlt().solve(atb);
  double rest = 0;
  for (Eigen::Index i = 0; i < k; ++i) {
    out.attributions[static_cast<std::size_t>(i)] = phi[i];
    rest += phi[i];
  }
  out.attributions[m - 1] = delta - rest;
  return out;
}

ShapExplanation exact_shapley(const BatchPredictor& f, std::span<const double> x, const Matrix& background,
                              const ExactOptions& options) {
  check_inputs(x, background);
  const std::size_t d = x.size();
  std::vector<std::vector<std::size_t>> groups = options.groups;
  if (groups.empty()) {
    for (std::size_t j = 0; j < d; ++j) groups.push_back({j});
  }
  if (groups.size() > kMaxExactPlayers) {
    throw Error(ErrorCode::TooManyFeatures, std::to_string(groups.size()) + " players exceed the exact limit of " +
                                                std::to_string(kMaxExactPlayers));
  }
  std::vector<Mask> member_bits(groups.size(), 0);
  Mask used = 0;
  for (std::size_t p = 0; p < groups.size(); ++p) {
    if (groups[p].empty()) throw Error(ErrorCode::InvalidConfig, "empty player group");
    for (auto j : groups[p]) {
      if (j >= d) throw Error(ErrorCode::InvalidConfig, "group member out of range");
      Mask bit = Mask{1} << j;
      if (used & bit) throw Error(ErrorCode::InvalidConfig, "input appears in two groups");
      used |= bit;
      member_bits[p] |= bit;
    }
  }
  const Mask all_inputs = (Mask{1} << d) - 1;
  const Mask fixed = all_inputs & ~used;

  const std::size_t players = groups.size();
  const std::size_t coalitions = std::size_t{1} << players;
  std::vector<Mask> input_masks(coalitions);
  for (std::size_t s = 0; s < coalitions; ++s) {
    Mask m = fixed;
    for (std::size_t p = 0; p < players; ++p) {
      if ((s >> p) & 1) m |= member_bits[p];
    }
    input_masks[s] = m;
  }
  auto v = coalition_values(f, x, background, input_masks);

  // w(s) = s! (P - s - 1)! / P!
  std::vector<double> w(players, 0.0);
  for (std::size_t s = 0; s < players; ++s) {
    w[s] = 1.0 / (static_cast<double>(players) * binomial(players - 1, s));
  }
  std::vector<double> group_phi(players, 0.0);
  for (std::size_t p = 0; p < players; ++p) {
    const std::size_t bit = std::size_t{1} << p;
    double acc = 0;
    for (std::size_t s = 0; s < coalitions; ++s) {
      if (s & bit) continue;
      acc += w[static_cast<std::size_t>(std::popcount(s))] * (v[s | bit] - v[s]);
    }
    group_phi[p] = acc;
  }

  ShapExplanation out;
  out.base_value = v[0];
  out.model_output = predict_one(f, x);
  out.attributions.assign(d, 0.0);

  bool needs_split = std::any_of(groups.begin(), groups.end(), [](const auto& g) { return g.size() > 1; });
  ShapExplanation kernel;
  if (needs_split) kernel = kernel_shap(f, x, background, KernelOptions{options.split_budget, options.seed});
  for (std::size_t p = 0; p < players; ++p) {
    const auto& g = groups[p];
    if (g.size() == 1) {
      out.attributions[g[0]] = group_phi[p];
      continue;
    }
    double ksum = 0;
    for (auto j : g) ksum += kernel.attributions[j];
    const double share = (group_phi[p] - ksum) / static_cast<double>(g.size());
    for (auto j : g) out.attributions[j] = kernel.attributions[j] + share;
  }
  return out;
}

Matrix select_background(const Dataset& data, std::size_t size, std::uint64_t seed) {
  const std::size_t n = data.size();
  if (size >= n) return data.x;
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[data.y[i] ? 1 : 0].push_back(i);
  const auto pos_share = static_cast<std::size_t>(
      std::llround(static_cast<double>(size) * static_cast<double>(by_class[1].size()) / static_cast<double>(n)));
  std::array<std::size_t, 2> take = {size - std::min(size, pos_share), std::min(size, pos_share)};
  for (int c = 0; c < 2; ++c) {
    if (take[c] == 0 && !by_class[c].empty() && size >= 2) {
      take[c] = 1;
      take[1 - c] -= 1;
    }
  }
  for (int c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    rng.shuffle(idx);
    const auto t = std::min(take[c], idx.size());
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(t));
  }
  std::sort(chosen.begin(), chosen.end());
  return data.subset(chosen).x;
}

std::string feature_unit(std::string_view name) {
  if (name == "days_inactive" || name == "inactive_days") return "days";
  if (name == "stat_min" || name == "stat_mean" || name == "stat_median" || name == "stat_sd" || name == "stat_max")
    return "hours";
  if (name.ends_with("_count")) return "events";
  if (name == "attemptnr" || name == "previous_attempts") return "attempts";
  return "";
}

std::string format_threshold(double value, std::string_view unit) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  std::string s = buf;
  if (!unit.empty()) {
    s += ' ';
    s += unit;
  }
  return s;
}

DependenceCurve partial_dependence_thresholds(const BatchPredictor& f, const Matrix& samples, std::size_t feature,
                                              std::size_t grid_size, std::string feature_name) {
  if (samples.rows() == 0) throw Error(ErrorCode::EmptyInput, "partial dependence needs samples");
  if (feature >= static_cast<std::size_t>(samples.cols())) {
    throw Error(ErrorCode::LengthMismatch, "feature index out of range");
  }
  grid_size = std::max<std::size_t>(grid_size, 2);
  const auto col = static_cast<Eigen::Index>(feature);
  DependenceCurve c;
  c.feature = feature_name.empty() ? "x" + std::to_string(feature) : std::move(feature_name);
  c.feature_index = feature;
  c.unit = feature_unit(c.feature);

  auto mean_of = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  c.baseline = mean_of(f(samples));

  double lo = samples.col(col).minCoeff(), hi = samples.col(col).maxCoeff();
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  Matrix work = samples;
  for (std::size_t k = 0; k < grid_size; ++k) {
    double v = k + 1 == grid_size ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid_size - 1);
    c.grid.push_back(v);
    work.col(col).setConstant(v);
    c.values.push_back(mean_of(f(work)));
  }
  for (std::size_t k = 0; k + 1 < grid_size; ++k) {
    double a = c.values[k] - c.baseline, b = c.values[k + 1] - c.baseline;
    if ((a < 0 && b >= 0) || (a > 0 && b <= 0)) {
      double t = a / (a - b);
      double at = c.grid[k] + t * (c.grid[k + 1] - c.grid[k]);
      c.thresholds.push_back(at);
      c.threshold_labels.push_back(format_threshold(at, c.unit));
    }
  }
  return c;
}

std::vector<FeatureImportance> shap_summary(std::span<const ShapExplanation> explanations, const Matrix& values,
                                            std::span<const std::string> names, std::size_t top_k) {
  std::vector<FeatureImportance> out;
  if (explanations.empty()) return out;
  const std::size_t d = explanations.front().attributions.size();
  if (static_cast<std::size_t>(values.rows()) != explanations.size() || static_cast<std::size_t>(values.cols()) != d) {
    throw Error(ErrorCode::LengthMismatch, "feature values do not align with explanations");
  }
  for (std::size_t j = 0; j < d; ++j) {
    FeatureImportance fi;
    fi.index = j;
    fi.feature = j < names.size() ? names[j] : "x" + std::to_string(j);
    for (std::size_t i = 0; i < explanations.size(); ++i) {
      double phi = explanations[i].attributions.at(j);
      fi.mean_abs += std::abs(phi);
      fi.points.emplace_back(values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), phi);
    }
    fi.mean_abs /= static_cast<double>(explanations.size());
    out.push_back(std::move(fi));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.mean_abs > b.mean_abs; });
  if (top_k > 0 && out.size() > top_k) out.resize(top_k);
  return out;
}

ordered_json to_json(const ShapExplanation& e, std::span<const std::string> names) {
  ordered_json j;
  j["base_value"] = e.base_value;
  j["model_output"] = e.model_output;
  j["phi"] = e.attributions;
  if (!names.empty()) j["features"] = std::vector<std::string>(names.begin(), names.end());
  return j;
}

ShapExplanation shap_explanation_from_json(const json& j) {
  ShapExplanation e;
  e.base_value = j.at("base_value").get<double>();
  e.model_output = j.at("model_output").get<double>();
  e.attributions = j.at("phi").get<std::vector<double>>();
  return e;
}

ordered_json to_json(const DependenceCurve& c) {
  ordered_json j;
  j["feature"] = c.feature;
  j["unit"] = c.unit;
  j["grid"] = c.grid;
  j["values"] = c.values;
  j["baseline"] = c.baseline;
  j["thresholds"] = c.thresholds;
  j["threshold_labels"] = c.threshold_labels;
  return j;
}

ordered_json to_json(std::span<const FeatureImportance> summary) {
  ordered_json arr = ordered_json::array();
  for (const auto& fi : summary) {
    ordered_json pts = ordered_json::array();
    for (const auto& [v, phi] : fi.points) pts.push_back({v, phi});
    arr.push_back({{"feature", fi.feature}, {"mean_abs_phi", fi.mean_abs}, {"points", pts}});
  }
  return arr;
}

}  // namespace qs
