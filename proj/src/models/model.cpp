#include <algorithm>
#include <cctype>
#include <cmath>

#include "models/classifier.hpp"
#include "qs/error.hpp"

namespace qs {
namespace {

using detail::json;
using detail::ordered_json;

constexpr int kFormatVersion = 1;

json defaults_for(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR:
      return {{"learning_rate", 0.5}, {"l2", 1e-4}, {"max_iter", 2000}, {"tol", 1e-6}};
    case ModelKind::LinearSVM:
      return {{"learning_rate", 0.5}, {"l2", 1e-3}, {"max_iter", 1000}};
    case ModelKind::DT:
      return {{"max_depth", 8}, {"min_samples_leaf", 1}, {"min_samples_split", 2}};
    case ModelKind::RF:
      return {{"n_trees", 200},         {"max_depth", -1},       {"min_samples_leaf", 1},
              {"min_samples_split", 2}, {"max_features", "sqrt"}, {"bootstrap", true}};
    case ModelKind::GBM:
      return {{"n_estimators", 100},   {"learning_rate", 0.1},   {"max_depth", 3},
              {"min_samples_leaf", 1}, {"min_samples_split", 2}};
    case ModelKind::XGB:
      return {{"n_estimators", 1000}, {"learning_rate", 0.05},   {"max_depth", 4},
              {"lambda", 1.0},        {"gamma", 0.0},            {"min_child_weight", 1.0},
              {"min_samples_leaf", 1}, {"min_samples_split", 2}};
    case ModelKind::NN:
      return {{"hidden", {100, 100}}, {"learning_rate", 0.01}, {"momentum", 0.9},
              {"alpha", 1e-4},        {"batch_size", 64},      {"max_epochs", 200},
              {"patience", 20},       {"early_stopping", true}, {"validation_fraction", 0.1}};
    case ModelKind::KNN:
      return {{"k", 15}};
    case ModelKind::NB:
      return {{"var_smoothing", 1e-9}};
  }
  return json::object();
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::InvalidHyperparameter, key + ": " + why);
}

void check_range(const std::string& key, const json& v) {
  auto num = [&] { return v.get<double>(); };
  if (key == "learning_rate" && !(num() > 0)) bad(key, "must be positive");
  if ((key == "l2" || key == "alpha" || key == "lambda" || key == "gamma" || key == "min_child_weight" ||
       key == "var_smoothing" || key == "tol") &&
      !(num() >= 0))
    bad(key, "must be non-negative");
  if (key == "momentum" && !(num() >= 0 && num() < 1)) bad(key, "must lie in [0, 1)");
  if (key == "validation_fraction" && !(num() > 0 && num() < 1)) bad(key, "must lie in (0, 1)");
  if ((key == "n_trees" || key == "k" || key == "batch_size" || key == "max_iter" || key == "max_epochs" ||
       key == "patience" || key == "min_samples_leaf") &&
      v.get<long long>() < 1)
    bad(key, "must be at least 1");
  if (key == "min_samples_split" && v.get<long long>() < 2) bad(key, "must be at least 2");
  if (key == "n_estimators" && v.get<long long>() < 0) bad(key, "must be non-negative");
  if (key == "max_depth" && v.get<long long>() < -1) bad(key, "must be -1 (unlimited) or non-negative");
  if (key == "hidden") {
    if (v.empty()) bad(key, "needs at least one layer");
    for (const auto& w : v) {
      if (!w.is_number_integer() || w.get<long long>() < 1) bad(key, "widths must be positive integers");
    }
  }
  if (key == "max_features") {
    if (v.is_string()) {
      auto s = v.get<std::string>();
      if (s != "sqrt" && s != "log2" && s != "all") bad(key, "unknown rule '" + s + "'");
    } else if (v.get<long long>() < 0) {
      bad(key, "must be non-negative");
    }
  }
}

bool same_type(const json& def, const json& v) {
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_integer()) return v.is_number_integer();
  if (def.is_number()) return v.is_number();
  if (def.is_array()) return v.is_array();
  return false;
}

std::unique_ptr<detail::Classifier> fit_kind(ModelKind kind, const detail::FitInput& in) {
  switch (kind) {
    case ModelKind::LR: return detail::fit_logistic(in);
    case ModelKind::LinearSVM: return detail::fit_linear_svm(in);
    case ModelKind::DT: return detail::fit_decision_tree(in);
    case ModelKind::RF: return detail::fit_random_forest(in);
    case ModelKind::GBM: return detail::fit_gbm(in);
    case ModelKind::XGB: return detail::fit_xgb(in);
    case ModelKind::NN: return detail::fit_neural_net(in);
    case ModelKind::KNN: return detail::fit_knn(in);
    case ModelKind::NB: return detail::fit_naive_bayes(in);
  }
  throw Error(ErrorCode::InvalidHyperparameter, "unknown model kind");
}

std::unique_ptr<detail::Classifier> load_kind(ModelKind kind, const json& params) {
  switch (kind) {
    case ModelKind::LR: return detail::load_linear(params, false);
    case ModelKind::LinearSVM: return detail::load_linear(params, true);
    case ModelKind::DT:
    case ModelKind::RF:
    case ModelKind::GBM:
    case ModelKind::XGB: return detail::load_tree_model(kind, params);
    case ModelKind::NN: return detail::load_neural_net(params);
    case ModelKind::KNN: return detail::load_knn(params);
    case ModelKind::NB: return detail::load_naive_bayes(params);
  }
  throw Error(ErrorCode::Serialization, "unknown model kind");
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::LR: return "lr";
    case ModelKind::DT: return "dt";
    case ModelKind::RF: return "rf";
    case ModelKind::GBM: return "gbm";
    case ModelKind::XGB: return "xgb";
    case ModelKind::NN: return "nn";
    case ModelKind::KNN: return "knn";
    case ModelKind::NB: return "nb";
    case ModelKind::LinearSVM: return "svm";
  }
  return "?";
}

std::optional<ModelKind> model_kind_from_string(std::string_view name) {
  std::string s;
  for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto k : kAllModelKinds) {
    if (s == to_string(k)) return k;
  }
  if (s == "svc" || s == "linearsvm" || s == "linear_svm") return ModelKind::LinearSVM;
  if (s == "xgblike" || s == "xgboost") return ModelKind::XGB;
  return std::nullopt;
}

json resolve_hyperparams(ModelKind kind, const json& hyperparams) {
  json out = defaults_for(kind);
  if (hyperparams.is_null()) return out;
  if (!hyperparams.is_object()) {
    throw Error(ErrorCode::InvalidHyperparameter, "hyperparameters must be a JSON object");
  }
  for (const auto& [key, v] : hyperparams.items()) {
    if (!out.contains(key)) bad(key, "not a " + std::string(to_string(kind)) + " hyperparameter");
    const json& def = out[key];
    bool ok = same_type(def, v) || (key == "max_features" && (v.is_string() || v.is_number_integer())) ||
              (def.is_string() && v.is_string());
    if (!ok) bad(key, "has the wrong type");
    check_range(key, v);
    out[key] = v;
  }
  return out;
}

TrainedModel::TrainedModel() = default;
TrainedModel::~TrainedModel() = default;
TrainedModel::TrainedModel(const TrainedModel&) = default;
TrainedModel& TrainedModel::operator=(const TrainedModel&) = default;
TrainedModel::TrainedModel(TrainedModel&&) noexcept = default;
TrainedModel& TrainedModel::operator=(TrainedModel&&) noexcept = default;

double TrainedModel::predict_proba(std::span<const double> x) const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "model has not been trained or loaded");
  if (x.size() != feature_count_) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(feature_count_) + " features, got " +
                                               std::to_string(x.size()));
  }
  double p;
  if (norm_) {
    std::vector<double> z(x.size());
    norm_->apply(x, z);
    p = impl_->predict(z.data());
  } else {
    p = impl_->predict(x.data());
  }
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> TrainedModel::predict_proba_batch(const Matrix& x) const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "model has not been trained or loaded");
  if (static_cast<std::size_t>(x.cols()) != feature_count_) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(feature_count_) + " feature columns");
  }
  auto out = norm_ ? impl_->predict_batch(norm_->apply(x)) : impl_->predict_batch(x);
  for (auto& p : out) p = std::clamp(p, 0.0, 1.0);
  return out;
}

std::size_t TrainedModel::complexity() const { return impl_ ? impl_->complexity() : 0; }

ordered_json TrainedModel::to_json() const {
  if (!impl_) throw Error(ErrorCode::UnfittedModel, "cannot serialize an unfitted model");
  ordered_json j;
  j["format"] = "qsm";
  j["version"] = kFormatVersion;
  ordered_json spec;
  spec["kind"] = to_string(spec_.kind);
  spec["hyperparams"] = spec_.hyperparams;
  spec["seed"] = spec_.seed;
  j["spec"] = spec;
  j["feature_count"] = feature_count_;
  j["feature_names"] = feature_names_;
  if (norm_) {
    j["normalization"] = {{"mean", norm_->mean}, {"scale", norm_->scale}};
  } else {
    j["normalization"] = nullptr;
  }
  j["meta"] = {{"folds", meta_.folds}, {"fold_auc", meta_.fold_auc}, {"epochs", meta_.epochs}};
  j["params"] = impl_->params();
  return j;
}

TrainedModel TrainedModel::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "qsm") throw Error(ErrorCode::Serialization, "not a qsm document");
    if (j.at("version").get<int>() != kFormatVersion) {
      throw Error(ErrorCode::Serialization, "unsupported qsm version " + j.at("version").dump());
    }
    TrainedModel m;
    const auto& spec = j.at("spec");
    auto kind = model_kind_from_string(spec.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::Serialization, "unknown model kind " + spec.at("kind").dump());
    m.spec_.kind = *kind;
    m.spec_.hyperparams = resolve_hyperparams(*kind, spec.at("hyperparams"));
    m.spec_.seed = spec.at("seed").get<std::uint64_t>();
    m.feature_count_ = j.at("feature_count").get<std::size_t>();
    m.feature_names_ = j.value("feature_names", std::vector<std::string>{});
    if (!j.at("normalization").is_null()) {
      Standardizer s;
      s.mean = detail::json_to_doubles(j["normalization"].at("mean"));
      s.scale = detail::json_to_doubles(j["normalization"].at("scale"));
      if (s.mean.size() != m.feature_count_ || s.scale.size() != m.feature_count_) {
        throw Error(ErrorCode::Serialization, "normalization length differs from feature_count");
      }
      m.norm_ = std::move(s);
    }
    if (const auto it = j.find("meta"); it != j.end()) {
      m.meta_.folds = it->value("folds", std::size_t{0});
      m.meta_.fold_auc = it->value("fold_auc", std::vector<double>{});
      m.meta_.epochs = it->value("epochs", std::size_t{0});
    }
    m.impl_ = load_kind(*kind, j.at("params"));
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("malformed model: ") + e.what());
  }
}

std::string TrainedModel::serialize() const { return to_json().dump() + "\n"; }

TrainedModel TrainedModel::deserialize(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("model is not JSON: ") + e.what());
  }
  return from_json(j);
}

TrainedModel train_model(const ModelSpec& spec, const Dataset& train) {
  if (train.size() == 0) throw Error(ErrorCode::EmptyInput, "empty training set");
  if (static_cast<std::size_t>(train.x.rows()) != train.size()) {
    throw Error(ErrorCode::LengthMismatch, "feature rows and labels differ in count");
  }
  if (!train.x.allFinite()) throw Error(ErrorCode::NonFiniteFeature, "training features contain NaN or inf");
  std::size_t pos = 0;
  for (int v : train.y) pos += v ? 1 : 0;
  if (pos == 0 || pos == train.size()) {
    throw Error(ErrorCode::SingleClassTrainingSet, "training labels contain a single class");
  }

  TrainedModel m;
  m.spec_ = spec;
  m.spec_.hyperparams = resolve_hyperparams(spec.kind, spec.hyperparams);
  m.feature_count_ = train.dims();
  m.feature_names_ = train.feature_names;
  std::vector<int> y(train.y.begin(), train.y.end());
  for (auto& v : y) v = v ? 1 : 0;

  if (detail::uses_standardization(spec.kind)) {
    m.norm_ = Standardizer::fit(train.x);
    Matrix z = m.norm_->apply(train.x);
    detail::FitInput in{z, y, m.spec_.hyperparams, spec.seed, m.meta_};
    m.impl_ = fit_kind(spec.kind, in);
  } else {
    detail::FitInput in{train.x, y, m.spec_.hyperparams, spec.seed, m.meta_};
    m.impl_ = fit_kind(spec.kind, in);
  }
  return m;
}

}  // namespace qs
