#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "qs/models.hpp"

namespace qs::detail {

using nlohmann::json;
using nlohmann::ordered_json;

// Fitted parameters of one kind. Inputs arrive already standardized for the
// kinds that use it.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual double predict(const double* x) const = 0;
  virtual std::vector<double> predict_batch(const Matrix& x) const;
  virtual ordered_json params() const = 0;
  virtual std::size_t complexity() const = 0;
};

struct FitInput {
  const Matrix& x;
  const std::vector<int>& y;
  const json& hp;  // resolved
  std::uint64_t seed;
  TrainingMeta& meta;
};

bool uses_standardization(ModelKind kind);

std::unique_ptr<Classifier> fit_logistic(const FitInput& in);
std::unique_ptr<Classifier> fit_linear_svm(const FitInput& in);
std::unique_ptr<Classifier> load_linear(const json& params, bool hinge);

std::unique_ptr<Classifier> fit_decision_tree(const FitInput& in);
std::unique_ptr<Classifier> fit_random_forest(const FitInput& in);
std::unique_ptr<Classifier> fit_gbm(const FitInput& in);
std::unique_ptr<Classifier> fit_xgb(const FitInput& in);
std::unique_ptr<Classifier> load_tree_model(ModelKind kind, const json& params);

std::unique_ptr<Classifier> fit_neural_net(const FitInput& in);
std::unique_ptr<Classifier> load_neural_net(const json& params);

std::unique_ptr<Classifier> fit_knn(const FitInput& in);
std::unique_ptr<Classifier> load_knn(const json& params);

std::unique_ptr<Classifier> fit_naive_bayes(const FitInput& in);
std::unique_ptr<Classifier> load_naive_bayes(const json& params);

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> json_to_doubles(const json& j);

}  // namespace qs::detail
