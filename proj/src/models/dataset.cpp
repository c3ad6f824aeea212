#include <cmath>

#include "models/classifier.hpp"
#include "qs/error.hpp"

namespace qs {

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(rows[k]));
    out.y.push_back(y[rows[k]]);
  }
  out.feature_names = feature_names;
  return out;
}

Dataset make_dataset(std::span<const LabeledSample> samples) {
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(kFeatureCount));
  d.y.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = samples[i].features.values[j];
    }
    d.y.push_back(samples[i].label == Label::Engaged ? 1 : 0);
  }
  for (auto n : kFeatureNames) d.feature_names.emplace_back(n);
  return d;
}

Dataset make_dataset(Matrix x, std::vector<int> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in count");
  }
  Dataset d;
  d.x = std::move(x);
  d.y = std::move(y);
  return d;
}

Standardizer Standardizer::fit(const Matrix& x) {
  Standardizer s;
  const auto n = static_cast<double>(x.rows());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    double m = x.col(j).sum() / n;
    double var = (x.col(j).array() - m).square().sum() / n;
    double sd = std::sqrt(var);
    s.mean.push_back(m);
    s.scale.push_back(sd > 0 ? sd : 1.0);
  }
  return s;
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t j = 0; j < mean.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
}

Matrix Standardizer::apply(const Matrix& x) const {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      out(i, j) = (x(i, j) - mean[static_cast<std::size_t>(j)]) / scale[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

namespace detail {

std::vector<double> Classifier::predict_batch(const Matrix& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = predict(x.row(i).data());
  return out;
}

bool uses_standardization(ModelKind kind) {
  return kind == ModelKind::LR || kind == ModelKind::NN || kind == ModelKind::KNN ||
         kind == ModelKind::LinearSVM;
}

std::vector<double> json_to_doubles(const json& j) {
  if (!j.is_array()) throw Error(ErrorCode::Serialization, "expected a number array");
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(ErrorCode::Serialization, "expected a number array");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail
}  // namespace qs
