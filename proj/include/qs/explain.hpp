#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qs/models.hpp"

namespace qs {

// Batch model output (probability of Engaged), one value per row.
using BatchPredictor = std::function<std::vector<double>(const Matrix&)>;

BatchPredictor predictor_for(const TrainedModel& model);

struct ShapExplanation {
  double base_value = 0.0;            // value of the empty coalition
  std::vector<double> attributions;   // one per model input, in input order
  double model_output = 0.0;          // f(x)

  double residual() const;            // f(x) - base - sum(attributions)
};

// Players are groups of input indices; inputs outside every group stay at x
// and receive 0. Absent players take their background values, averaged over
// the background rows. TooManyFeatures above 12 players; EmptyBackground.
//
// A group with several members is split with kernel attributions plus an
// equal share of the group remainder, so members still sum to the group value.
struct ExactOptions {
  std::vector<std::vector<std::size_t>> groups;  // empty: every input is a player
  std::size_t split_budget = 2048;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMaxExactPlayers = 12;

ShapExplanation exact_shapley(const BatchPredictor& f, std::span<const double> x, const Matrix& background,
                              const ExactOptions& options = {});

// Kernel attributions over all inputs with efficiency as a hard constraint.
// Enumerates every coalition when 2^M - 2 <= budget, otherwise enumerates
// whole coalition sizes by kernel weight and samples the rest (paired).
// BudgetTooSmall when budget < M + 2.
struct KernelOptions {
  std::size_t budget = 2048;
  std::uint64_t seed = 0;
  double damping = 1e-10;
};

ShapExplanation kernel_shap(const BatchPredictor& f, std::span<const double> x, const Matrix& background,
                            const KernelOptions& options = {});

// Shapley kernel weight of one coalition of size s among M players.
double shapley_kernel_weight(std::size_t players, std::size_t size);

// Up to `size` rows drawn per class in proportion to class frequency.
Matrix select_background(const Dataset& data, std::size_t size, std::uint64_t seed);

struct DependenceCurve {
  std::string feature;
  std::size_t feature_index = 0;
  std::vector<double> grid;    // strictly increasing
  std::vector<double> values;  // mean prediction with the feature set to grid[k]
  double baseline = 0.0;       // mean prediction over the samples
  std::vector<double> thresholds;
  std::vector<std::string> threshold_labels;  // e.g. "0.29 days"
  std::string unit;
};

// Uniform grid over the observed range (widened by 0.5 each side when
// degenerate). Crossings of the baseline are interpolated linearly.
DependenceCurve partial_dependence_thresholds(const BatchPredictor& f, const Matrix& samples,
                                              std::size_t feature, std::size_t grid_size,
                                              std::string feature_name = {});

// Unit of a model feature for threshold labels ("days", "hours", ...).
std::string feature_unit(std::string_view feature_name);
std::string format_threshold(double value, std::string_view unit);

struct FeatureImportance {
  std::string feature;
  std::size_t index = 0;
  double mean_abs = 0.0;
  std::vector<std::pair<double, double>> points;  // (feature value, attribution)
};

// Ranked by mean |phi|, ties in input order; top_k = 0 keeps all.
std::vector<FeatureImportance> shap_summary(std::span<const ShapExplanation> explanations, const Matrix& values,
                                            std::span<const std::string> names, std::size_t top_k = 0);

nlohmann::ordered_json to_json(const ShapExplanation& e, std::span<const std::string> names);
ShapExplanation shap_explanation_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const DependenceCurve& c);
nlohmann::ordered_json to_json(std::span<const FeatureImportance> summary);

}  // namespace qs
