#include <cmath>

#include "models/classifier.hpp"
#include "qs/error.hpp"

namespace qs::detail {
namespace {

// p = sigmoid(w.x + b) for both kinds; the SVM margin is squashed the same way.
class LinearModel final : public Classifier {
 public:
  LinearModel(Eigen::VectorXd w, double b, bool hinge) : w_(std::move(w)), b_(b), hinge_(hinge) {}

  double predict(const double* x) const override {
    Eigen::Map<const Eigen::VectorXd> v(x, w_.size());
    return sigmoid(w_.dot(v) + b_);
  }
  std::vector<double> predict_batch(const Matrix& x) const override {
    Eigen::VectorXd z = (x * w_).array() + b_;
    std::vector<double> out(static_cast<std::size_t>(z.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z[i]);
    return out;
  }
  ordered_json params() const override {
    ordered_json j;
    j["loss"] = hinge_ ? "hinge" : "logistic";
    j["weights"] = std::vector<double>(w_.data(), w_.data() + w_.size());
    j["bias"] = b_;
    return j;
  }
  std::size_t complexity() const override { return static_cast<std::size_t>(w_.size()) + 1; }

 private:
  Eigen::VectorXd w_;
  double b_;
  bool hinge_;
};

}  // namespace

std::unique_ptr<Classifier> fit_logistic(const FitInput& in) {
  const auto n = static_cast<double>(in.y.size());
  const double lr = in.hp.at("learning_rate").get<double>();
  const double l2 = in.hp.at("l2").get<double>();
  const int iters = in.hp.at("max_iter").get<int>();
  const double tol = in.hp.at("tol").get<double>();
  Eigen::VectorXd y(static_cast<Eigen::Index>(in.y.size()));
  for (std::size_t i = 0; i < in.y.size(); ++i) y[static_cast<Eigen::Index>(i)] = in.y[i];

  Eigen::VectorXd w = Eigen::VectorXd::Zero(in.x.cols());
  double b = 0.0;
  std::size_t epoch = 0;
  for (; epoch < static_cast<std::size_t>(iters); ++epoch) {
    Eigen::VectorXd z = (in.x * w).array() + b;
    Eigen::VectorXd r = z.unaryExpr([](double v) { return sigmoid(v); }) - y;
    Eigen::VectorXd gw = in.x.transpose() * r / n + l2 * w;
    double gb = r.sum() / n;
    w -= lr * gw;
    b -= lr * gb;
    if (std::max(gw.cwiseAbs().maxCoeff(), std::abs(gb)) < tol) break;
  }
  in.meta.epochs = epoch;
  return std::make_unique<LinearModel>(std::move(w), b, false);
}

std::unique_ptr<Classifier> fit_linear_svm(const FitInput& in) {
  const auto n = static_cast<double>(in.y.size());
  const double lr = in.hp.at("learning_rate").get<double>();
  const double l2 = in.hp.at("l2").get<double>();
  const int iters = in.hp.at("max_iter").get<int>();
  Eigen::VectorXd y(static_cast<Eigen::Index>(in.y.size()));
  for (std::size_t i = 0; i < in.y.size(); ++i) y[static_cast<Eigen::Index>(i)] = in.y[i] ? 1.0 : -1.0;

  Eigen::VectorXd w = Eigen::VectorXd::Zero(in.x.cols());
  double b = 0.0;
  for (int t = 0; t < iters; ++t) {
    Eigen::VectorXd z = (in.x * w).array() + b;
    Eigen::VectorXd margin = y.cwiseProduct(z);
    // Subgradient of mean hinge loss: -y_i x_i over margin violators.
    Eigen::VectorXd coef = (margin.array() < 1.0).select(-y, 0.0);
    Eigen::VectorXd gw = in.x.transpose() * coef / n + l2 * w;
    double gb = coef.sum() / n;
    double step = lr / std::sqrt(1.0 + t);
    w -= step * gw;
    b -= step * gb;
  }
  in.meta.epochs = static_cast<std::size_t>(iters);
  return std::make_unique<LinearModel>(std::move(w), b, true);
}

std::unique_ptr<Classifier> load_linear(const json& params, bool hinge) {
  auto w = json_to_doubles(params.at("weights"));
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  return std::make_unique<LinearModel>(std::move(v), params.at("bias").get<double>(), hinge);
}

}  // namespace qs::detail
