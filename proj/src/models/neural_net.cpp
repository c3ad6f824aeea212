#include <algorithm>
#include <cmath>
#include <numeric>

#include "models/classifier.hpp"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/random.hpp"

namespace qs::detail {
namespace {

using MatF = Eigen::MatrixXf;
using VecF = Eigen::RowVectorXf;

struct Layer {
  MatF w;  // fan_in x fan_out
  VecF b;
};

// ReLU hidden layers, single sigmoid output unit.
class NeuralNet final : public Classifier {
 public:
  explicit NeuralNet(std::vector<Layer> layers) : layers_(std::move(layers)) {}

  static MatF forward(const std::vector<Layer>& layers, const MatF& x) {
    MatF a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      MatF z = (a * layers[l].w).rowwise() + layers[l].b;
      if (l + 1 < layers.size()) z = z.cwiseMax(0.0f);
      a = std::move(z);
    }
    return a;  // output margins, B x 1
  }

  double predict(const double* x) const override {
    const auto d = layers_.front().w.rows();
    MatF in(1, d);
    for (Eigen::Index j = 0; j < d; ++j) in(0, j) = static_cast<float>(x[j]);
    return sigmoid(forward(layers_, in)(0, 0));
  }

  std::vector<double> predict_batch(const Matrix& x) const override {
    MatF in = x.cast<float>();
    MatF z = forward(layers_, in);
    std::vector<double> out(static_cast<std::size_t>(z.rows()));
    for (Eigen::Index i = 0; i < z.rows(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(z(i, 0));
    return out;
  }

  ordered_json params() const override {
    ordered_json layers = ordered_json::array();
    for (const auto& L : layers_) {
      std::vector<double> w;
      w.reserve(static_cast<std::size_t>(L.w.size()));
      for (Eigen::Index r = 0; r < L.w.rows(); ++r) {
        for (Eigen::Index c = 0; c < L.w.cols(); ++c) w.push_back(L.w(r, c));
      }
      std::vector<double> b(L.b.data(), L.b.data() + L.b.size());
      layers.push_back({{"rows", L.w.rows()}, {"cols", L.w.cols()}, {"weights", w}, {"bias", b}});
    }
    ordered_json j;
    j["precision"] = "float32";
    j["hidden_activation"] = "relu";
    j["output_activation"] = "sigmoid";
    j["layers"] = layers;
    return j;
  }

  std::size_t complexity() const override {
    std::size_t n = 0;
    for (const auto& L : layers_) n += static_cast<std::size_t>(L.w.size() + L.b.size());
    return n;
  }

 private:
  std::vector<Layer> layers_;
};

std::vector<Layer> init_layers(std::size_t inputs, const std::vector<int>& hidden, Rng& rng) {
  std::vector<Layer> layers;
  auto fan_in = static_cast<Eigen::Index>(inputs);
  std::vector<int> widths = hidden;
  widths.push_back(1);
  for (int width : widths) {
    Layer L;
    L.w.resize(fan_in, width);
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < fan_in; ++r) {
      for (Eigen::Index c = 0; c < width; ++c) L.w(r, c) = static_cast<float>(rng.normal(0.0, sd));
    }
    L.b = VecF::Zero(width);
    layers.push_back(std::move(L));
    fan_in = width;
  }
  return layers;
}

// Stratified holdout; empty when either class would contribute fewer than
// `min_per_class` samples.
std::vector<std::size_t> holdout_indices(const std::vector<int>& y, double fraction, Rng& rng,
                                         std::size_t min_per_class) {
  std::vector<std::size_t> out;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == cls) idx.push_back(i);
    }
    auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(idx.size())));
    if (take < min_per_class || take >= idx.size()) return {};
    rng.shuffle(idx);
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::unique_ptr<Classifier> fit_neural_net(const FitInput& in) {
  const auto hidden = in.hp.at("hidden").get<std::vector<int>>();
  const float lr = in.hp.at("learning_rate").get<float>();
  const float momentum = in.hp.at("momentum").get<float>();
  const float alpha = in.hp.at("alpha").get<float>();
  const auto batch = static_cast<std::size_t>(in.hp.at("batch_size").get<int>());
  const auto max_epochs = static_cast<std::size_t>(in.hp.at("max_epochs").get<int>());
  const auto patience = static_cast<std::size_t>(in.hp.at("patience").get<int>());

  Rng rng(in.seed);
  auto layers = init_layers(static_cast<std::size_t>(in.x.cols()), hidden, rng);

  std::vector<std::size_t> val;
  if (in.hp.at("early_stopping").get<bool>()) {
    val = holdout_indices(in.y, in.hp.at("validation_fraction").get<double>(), rng, 5);
  }
  std::vector<std::size_t> train;
  {
    std::vector<char> is_val(in.y.size(), 0);
    for (auto i : val) is_val[i] = 1;
    for (std::size_t i = 0; i < in.y.size(); ++i) {
      if (!is_val[i]) train.push_back(i);
    }
  }

  const auto d = in.x.cols();
  MatF xf = in.x.cast<float>();
  MatF xval(static_cast<Eigen::Index>(val.size()), d);
  std::vector<int> yval(val.size());
  for (std::size_t k = 0; k < val.size(); ++k) {
    xval.row(static_cast<Eigen::Index>(k)) = xf.row(static_cast<Eigen::Index>(val[k]));
    yval[k] = in.y[val[k]];
  }

  std::vector<Layer> velocity;
  for (const auto& L : layers) velocity.push_back({MatF::Zero(L.w.rows(), L.w.cols()), VecF::Zero(L.b.size())});

  std::vector<Layer> best = layers;
  double best_auc = -1.0;
  std::size_t since_best = 0, epoch = 0;
  std::vector<MatF> acts(layers.size() + 1);
  std::vector<MatF> pre(layers.size());

  for (; epoch < max_epochs; ++epoch) {
    rng.shuffle(train);
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t end = std::min(train.size(), start + batch);
      const auto bsz = static_cast<Eigen::Index>(end - start);
      MatF& a0 = acts[0];
      a0.resize(bsz, d);
      Eigen::VectorXf yb(bsz);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        auto i = train[start + static_cast<std::size_t>(k)];
        a0.row(k) = xf.row(static_cast<Eigen::Index>(i));
        yb[k] = static_cast<float>(in.y[i]);
      }
      for (std::size_t l = 0; l < layers.size(); ++l) {
        pre[l] = (acts[l] * layers[l].w).rowwise() + layers[l].b;
        acts[l + 1] = l + 1 < layers.size() ? MatF(pre[l].cwiseMax(0.0f)) : pre[l];
      }
      // Cross-entropy gradient at the output margin: (p - y) / B.
      MatF delta(bsz, 1);
      for (Eigen::Index k = 0; k < bsz; ++k) {
        delta(k, 0) = (static_cast<float>(sigmoid(pre.back()(k, 0))) - yb[k]) / static_cast<float>(bsz);
      }
      for (std::size_t l = layers.size(); l-- > 0;) {
        MatF gw = acts[l].transpose() * delta;
        VecF gb = delta.colwise().sum();
        if (l > 0) {
          MatF back = delta * layers[l].w.transpose();
          delta = back.cwiseProduct((pre[l - 1].array() > 0.0f).cast<float>().matrix());
        }
        gw += alpha * layers[l].w;
        velocity[l].w = momentum * velocity[l].w - lr * gw;
        velocity[l].b = momentum * velocity[l].b - lr * gb;
        layers[l].w += velocity[l].w;
        layers[l].b += velocity[l].b;
      }
    }

    if (val.empty()) continue;
    MatF z = NeuralNet::forward(layers, xval);
    std::vector<double> scores(val.size());
    for (std::size_t k = 0; k < val.size(); ++k) scores[k] = z(static_cast<Eigen::Index>(k), 0);
    double auc = auc_score(yval, scores);
    if (auc > best_auc) {
      best_auc = auc;
      best = layers;
      since_best = 0;
    } else if (++since_best >= patience) {
      ++epoch;
      break;
    }
  }
  in.meta.epochs = epoch;
  return std::make_unique<NeuralNet>(val.empty() ? std::move(layers) : std::move(best));
}

std::unique_ptr<Classifier> load_neural_net(const json& params) {
  std::vector<Layer> layers;
  for (const auto& jl : params.at("layers")) {
    const auto rows = jl.at("rows").get<Eigen::Index>();
    const auto cols = jl.at("cols").get<Eigen::Index>();
    auto w = json_to_doubles(jl.at("weights"));
    auto b = json_to_doubles(jl.at("bias"));
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != cols) {
      throw Error(ErrorCode::Serialization, "layer shape does not match its data");
    }
    Layer L;
    L.w.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) L.w(r, c) = static_cast<float>(w[static_cast<std::size_t>(r * cols + c)]);
    }
    L.b.resize(cols);
    for (Eigen::Index c = 0; c < cols; ++c) L.b[c] = static_cast<float>(b[static_cast<std::size_t>(c)]);
    if (!layers.empty() && layers.back().w.cols() != rows) {
      throw Error(ErrorCode::Serialization, "consecutive layers disagree in width");
    }
    layers.push_back(std::move(L));
  }
  if (layers.empty() || layers.back().w.cols() != 1) {
    throw Error(ErrorCode::Serialization, "network must end in one output unit");
  }
  return std::make_unique<NeuralNet>(std::move(layers));
}

}  // namespace qs::detail
