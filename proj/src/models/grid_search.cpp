#include <numeric>

#include "models/classifier.hpp"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/random.hpp"

namespace qs {

std::vector<int> stratified_folds(std::span<const int> labels, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(ErrorCode::InvalidHyperparameter, "need at least two folds");
  std::vector<int> out(labels.size(), 0);
  Rng rng(seed);
  std::size_t dealt = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if ((labels[i] ? 1 : 0) == cls) idx.push_back(i);
    }
    rng.shuffle(idx);
    for (auto i : idx) out[i] = static_cast<int>(dealt++ % static_cast<std::size_t>(folds));
  }
  return out;
}

GridSearchResult grid_search_cv(ModelKind kind, std::span<const nlohmann::json> grid, const Dataset& train,
                                int folds, std::uint64_t seed) {
  if (grid.empty()) throw Error(ErrorCode::EmptyGrid, "grid has no configurations");
  for (const auto& hp : grid) resolve_hyperparams(kind, hp);

  auto fold_of = stratified_folds(train.y, folds, seed);
  std::vector<std::vector<std::size_t>> fit_rows(static_cast<std::size_t>(folds)), val_rows(fit_rows.size());
  for (std::size_t i = 0; i < fold_of.size(); ++i) {
    for (int f = 0; f < folds; ++f) (fold_of[i] == f ? val_rows : fit_rows)[static_cast<std::size_t>(f)].push_back(i);
  }
  std::vector<Dataset> fit_sets, val_sets;
  for (int f = 0; f < folds; ++f) {
    fit_sets.push_back(train.subset(fit_rows[static_cast<std::size_t>(f)]));
    val_sets.push_back(train.subset(val_rows[static_cast<std::size_t>(f)]));
  }

  GridSearchResult result;
  for (const auto& hp : grid) {
    GridRow row;
    row.hyperparams = hp;
    for (int f = 0; f < folds; ++f) {
      ModelSpec spec{kind, hp, seed};
      auto model = train_model(spec, fit_sets[static_cast<std::size_t>(f)]);
      const auto& val = val_sets[static_cast<std::size_t>(f)];
      auto scores = model.predict_proba_batch(val.x);
      row.fold_auc.push_back(auc_score(val.y, scores));
      if (f == 0) row.complexity = model.complexity();
    }
    row.mean_auc = std::accumulate(row.fold_auc.begin(), row.fold_auc.end(), 0.0) /
                   static_cast<double>(row.fold_auc.size());
    result.table.push_back(std::move(row));
  }

  for (std::size_t i = 1; i < result.table.size(); ++i) {
    const auto& c = result.table[i];
    const auto& b = result.table[result.best_index];
    if (c.mean_auc > b.mean_auc || (c.mean_auc == b.mean_auc && c.complexity < b.complexity)) {
      result.best_index = i;
    }
  }
  result.best = ModelSpec{kind, result.table[result.best_index].hyperparams, seed};
  return result;
}

std::vector<nlohmann::json> default_grid(ModelKind kind) {
  using nlohmann::json;
  switch (kind) {
    case ModelKind::LR: return {json{{"l2", 1e-4}}, json{{"l2", 1e-2}}};
    case ModelKind::LinearSVM: return {json{{"l2", 1e-4}}, json{{"l2", 1e-2}}};
    case ModelKind::DT: return {json{{"max_depth", 4}}, json{{"max_depth", 8}}, json{{"max_depth", 12}}};
    case ModelKind::RF: return {json{{"n_trees", 100}}, json{{"n_trees", 200}}};
    case ModelKind::GBM: return {json{{"n_estimators", 50}}, json{{"n_estimators", 100}}};
    case ModelKind::XGB: return {json{{"n_estimators", 500}}, json{{"n_estimators", 1000}}};
    case ModelKind::NN: return {json{{"hidden", {100, 100}}}, json{{"hidden", {50}}}};
    case ModelKind::KNN: return {json{{"k", 5}}, json{{"k", 15}}, json{{"k", 31}}};
    case ModelKind::NB: return {json{{"var_smoothing", 1e-9}}};
  }
  return {};
}

nlohmann::ordered_json to_json(const GridSearchResult& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.best.kind);
  j["best_index"] = r.best_index;
  j["best_hyperparams"] = r.best.hyperparams;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.table) {
    rows.push_back({{"hyperparams", row.hyperparams},
                    {"fold_auc", row.fold_auc},
                    {"mean_auc", row.mean_auc},
                    {"complexity", row.complexity}});
  }
  j["table"] = rows;
  return j;
}

}  // namespace qs
