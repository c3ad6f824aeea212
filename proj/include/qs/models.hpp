#pragma once

// Classifier zoo behind one TrainedModel handle.
//
// model.qsm is a UTF-8 JSON document:
//
//   {"format": "qsm", "version": 1,
//    "spec": {"kind": "nn", "hyperparams": {...}, "seed": 7},
//    "feature_count": 16,
//    "feature_names": [...],            // optional
//    "normalization": null | {"mean": [...], "scale": [...]},
//    "meta": {"folds": 4, "fold_auc": [...]},
//    "params": {...}}                   // per kind, see the model sources
//
// Doubles are written in shortest round-trip form, so a saved model
// reproduces its predictions bit for bit after loading.

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "qs/features.hpp"

namespace qs {

enum class ModelKind { LR, DT, RF, GBM, XGB, NN, KNN, NB, LinearSVM };

inline constexpr std::array<ModelKind, 9> kAllModelKinds = {
    ModelKind::RF, ModelKind::DT, ModelKind::XGB, ModelKind::GBM, ModelKind::LR,
    ModelKind::NB, ModelKind::KNN, ModelKind::LinearSVM, ModelKind::NN};

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> model_kind_from_string(std::string_view name);  // case-insensitive

struct ModelSpec {
  ModelKind kind = ModelKind::NN;
  nlohmann::json hyperparams = nlohmann::json::object();
  std::uint64_t seed = 0;
};

// Fills defaults for missing keys; InvalidHyperparameter for unknown keys or
// out-of-range values.
nlohmann::json resolve_hyperparams(ModelKind kind, const nlohmann::json& hyperparams);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Dataset {
  Matrix x;             // one row per sample
  std::vector<int> y;   // 1 = Engaged
  std::vector<std::string> feature_names;

  std::size_t size() const { return y.size(); }
  std::size_t dims() const { return static_cast<std::size_t>(x.cols()); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

Dataset make_dataset(std::span<const LabeledSample> samples);
Dataset make_dataset(Matrix x, std::vector<int> y);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for constant columns

  static Standardizer fit(const Matrix& x);
  void apply(std::span<const double> in, std::span<double> out) const;
  Matrix apply(const Matrix& x) const;
};

struct TrainingMeta {
  std::size_t folds = 0;
  std::vector<double> fold_auc;
  std::size_t epochs = 0;  // iterative models only
};

namespace detail {
class Classifier;
}

class TrainedModel {
 public:
  TrainedModel();
  ~TrainedModel();
  TrainedModel(const TrainedModel&);
  TrainedModel& operator=(const TrainedModel&);
  TrainedModel(TrainedModel&&) noexcept;
  TrainedModel& operator=(TrainedModel&&) noexcept;

  bool fitted() const { return impl_ != nullptr; }
  const ModelSpec& spec() const { return spec_; }
  std::size_t feature_count() const { return feature_count_; }
  const std::optional<Standardizer>& normalization() const { return norm_; }
  TrainingMeta& meta() { return meta_; }
  const TrainingMeta& meta() const { return meta_; }

  // Probability of Engaged. UnfittedModel when not trained or loaded;
  // LengthMismatch on a wrong-sized input.
  double predict_proba(std::span<const double> x) const;
  double predict_proba(const FeatureVector& x) const { return predict_proba(x.span()); }
  std::vector<double> predict_proba_batch(const Matrix& x) const;

  // Rough parameter count; orders grid candidates of equal score.
  std::size_t complexity() const;

  nlohmann::ordered_json to_json() const;
  static TrainedModel from_json(const nlohmann::json& j);
  std::string serialize() const;
  static TrainedModel deserialize(std::string_view text);

 private:
  friend TrainedModel train_model(const ModelSpec&, const Dataset&);

  ModelSpec spec_;
  std::size_t feature_count_ = 0;
  std::vector<std::string> feature_names_;
  std::optional<Standardizer> norm_;
  TrainingMeta meta_;
  std::shared_ptr<const detail::Classifier> impl_;
};

inline constexpr double kDecisionThreshold = 0.5;

// SingleClassTrainingSet, NonFiniteFeature, EmptyInput, InvalidHyperparameter.
TrainedModel train_model(const ModelSpec& spec, const Dataset& train);

// Fold index per sample; each class is shuffled and dealt round-robin.
std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed);

struct GridRow {
  nlohmann::json hyperparams;
  std::vector<double> fold_auc;
  double mean_auc = 0;
  std::size_t complexity = 0;  // of the model fitted on the first fold
};

struct GridSearchResult {
  ModelSpec best;
  std::size_t best_index = 0;
  std::vector<GridRow> table;
};

// Maximizes mean validation AUC; ties go to the smaller model, then grid order.
GridSearchResult grid_search_cv(ModelKind kind, std::span<const nlohmann::json> grid,
                                const Dataset& train, int folds = 4, std::uint64_t seed = 0);

std::vector<nlohmann::json> default_grid(ModelKind kind);

nlohmann::ordered_json to_json(const GridSearchResult& r);

}  // namespace qs
