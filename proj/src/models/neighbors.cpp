#include <algorithm>
#include <utility>

#include "models/classifier.hpp"
#include "qs/error.hpp"

namespace qs::detail {
namespace {

// Euclidean distance on standardized inputs; probability = share of Engaged
// among the k nearest, equal distances ordered by training index.
class Knn final : public Classifier {
 public:
  Knn(Matrix x, std::vector<int> y, int k) : x_(std::move(x)), y_(std::move(y)), k_(k) {}

  double predict(const double* q) const override {
    std::vector<std::pair<double, std::size_t>> dist(y_.size());
    Eigen::Map<const Eigen::RowVectorXd> v(q, x_.cols());
    for (std::size_t i = 0; i < y_.size(); ++i) {
      dist[i] = {(x_.row(static_cast<Eigen::Index>(i)) - v).squaredNorm(), i};
    }
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(k_), dist.size());
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    std::size_t pos = 0;
    for (std::size_t j = 0; j < k; ++j) pos += static_cast<std::size_t>(y_[dist[j].second]);
    return static_cast<double>(pos) / static_cast<double>(k);
  }

  ordered_json params() const override {
    ordered_json j;
    j["k"] = k_;
    std::vector<double> flat(x_.data(), x_.data() + x_.size());
    j["rows"] = x_.rows();
    j["cols"] = x_.cols();
    j["points"] = flat;
    j["labels"] = y_;
    return j;
  }
  std::size_t complexity() const override { return static_cast<std::size_t>(x_.size()); }

 private:
  Matrix x_;
  std::vector<int> y_;
  int k_;
};

}  // namespace

std::unique_ptr<Classifier> fit_knn(const FitInput& in) {
  return std::make_unique<Knn>(in.x, in.y, in.hp.at("k").get<int>());
}

std::unique_ptr<Classifier> load_knn(const json& params) {
  const auto rows = params.at("rows").get<Eigen::Index>();
  const auto cols = params.at("cols").get<Eigen::Index>();
  auto flat = json_to_doubles(params.at("points"));
  auto labels = params.at("labels").get<std::vector<int>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols || static_cast<Eigen::Index>(labels.size()) != rows ||
      rows == 0) {
    throw Error(ErrorCode::Serialization, "knn point table has the wrong shape");
  }
  Matrix x = Eigen::Map<Matrix>(flat.data(), rows, cols);
  return std::make_unique<Knn>(std::move(x), std::move(labels), params.at("k").get<int>());
}

}  // namespace qs::detail
