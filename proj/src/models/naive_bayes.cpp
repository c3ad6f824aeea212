#include <algorithm>
#include <cmath>
#include <numbers>

#include "models/classifier.hpp"
#include "qs/error.hpp"

namespace qs::detail {
namespace {

struct ClassGaussian {
  double log_prior = 0;
  std::vector<double> mean, var;
};

// Per-class independent Gaussians; variances carry an additive floor of
// var_smoothing times the largest feature variance.
class GaussianNb final : public Classifier {
 public:
  explicit GaussianNb(std::array<ClassGaussian, 2> cls) : cls_(std::move(cls)) {}

  double log_joint(const ClassGaussian& c, const double* x) const {
    double s = c.log_prior;
    for (std::size_t j = 0; j < c.mean.size(); ++j) {
      double d = x[j] - c.mean[j];
      s -= 0.5 * std::log(2 * std::numbers::pi * c.var[j]) + d * d / (2 * c.var[j]);
    }
    return s;
  }
  double predict(const double* x) const override {
    return sigmoid(log_joint(cls_[1], x) - log_joint(cls_[0], x));
  }
  ordered_json params() const override {
    ordered_json arr = ordered_json::array();
    for (const auto& c : cls_) arr.push_back({{"log_prior", c.log_prior}, {"mean", c.mean}, {"var", c.var}});
    ordered_json j;
    j["classes"] = arr;
    return j;
  }
  std::size_t complexity() const override { return 2 * (2 * cls_[0].mean.size() + 1); }

 private:
  std::array<ClassGaussian, 2> cls_;
};

}  // namespace

std::unique_ptr<Classifier> fit_naive_bayes(const FitInput& in) {
  const auto d = static_cast<std::size_t>(in.x.cols());
  const auto n = in.y.size();
  const double smoothing = in.hp.at("var_smoothing").get<double>();

  double max_var = 0;
  for (std::size_t j = 0; j < d; ++j) {
    auto col = in.x.col(static_cast<Eigen::Index>(j));
    double m = col.mean();
    max_var = std::max(max_var, (col.array() - m).square().mean());
  }
  const double floor = std::max(smoothing * max_var, 1e-12);

  std::array<ClassGaussian, 2> cls;
  for (int c = 0; c < 2; ++c) {
    auto& g = cls[static_cast<std::size_t>(c)];
    g.mean.assign(d, 0.0);
    g.var.assign(d, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (in.y[i] != c) continue;
      ++count;
      for (std::size_t j = 0; j < d; ++j) g.mean[j] += in.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    for (auto& m : g.mean) m /= static_cast<double>(count);
    for (std::size_t i = 0; i < n; ++i) {
      if (in.y[i] != c) continue;
      for (std::size_t j = 0; j < d; ++j) {
        double diff = in.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - g.mean[j];
        g.var[j] += diff * diff;
      }
    }
    for (auto& v : g.var) v = v / static_cast<double>(count) + floor;
    g.log_prior = std::log(static_cast<double>(count) / static_cast<double>(n));
  }
  return std::make_unique<GaussianNb>(std::move(cls));
}

std::unique_ptr<Classifier> load_naive_bayes(const json& params) {
  const auto& arr = params.at("classes");
  if (arr.size() != 2) throw Error(ErrorCode::Serialization, "naive Bayes needs two classes");
  std::array<ClassGaussian, 2> cls;
  for (std::size_t c = 0; c < 2; ++c) {
    cls[c].log_prior = arr[c].at("log_prior").get<double>();
    cls[c].mean = json_to_doubles(arr[c].at("mean"));
    cls[c].var = json_to_doubles(arr[c].at("var"));
    if (cls[c].mean.size() != cls[c].var.size() || cls[c].mean.size() != cls[0].mean.size()) {
      throw Error(ErrorCode::Serialization, "naive Bayes parameter lengths differ");
    }
  }
  return std::make_unique<GaussianNb>(std::move(cls));
}

}  // namespace qs::detail
