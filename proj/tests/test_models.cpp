#include <cmath>

#include "doctest.h"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/models.hpp"
#include "qs/random.hpp"

using namespace qs;
using nlohmann::json;

namespace {

Dataset blobs(std::size_t n, double sep, std::uint64_t seed, std::size_t dims = 2) {
  Rng rng(seed);
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dims));
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    for (std::size_t d = 0; d < dims; ++d) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = rng.normal(y[i] ? sep : -sep, 1.0);
    }
  }
  return make_dataset(std::move(x), std::move(y));
}

double accuracy(const TrainedModel& m, const Dataset& d) {
  auto p = m.predict_proba_batch(d.x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) ok += (p[i] >= kDecisionThreshold) == (d.y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

ModelSpec spec_of(ModelKind kind, json hp = json::object(), std::uint64_t seed = 1) {
  return ModelSpec{kind, std::move(hp), seed};
}

// Small settings so every kind trains in well under a second.
json quick(ModelKind kind) {
  switch (kind) {
    case ModelKind::RF: return {{"n_trees", 20}};
    case ModelKind::GBM: return {{"n_estimators", 20}};
    case ModelKind::XGB: return {{"n_estimators", 40}};
    case ModelKind::NN: return {{"hidden", {16}}, {"max_epochs", 60}};
    default: return json::object();
  }
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("kind names") {
    for (auto k : kAllModelKinds) CHECK(model_kind_from_string(to_string(k)) == k);
    CHECK(model_kind_from_string("SVC") == ModelKind::LinearSVM);
    CHECK(model_kind_from_string("NN") == ModelKind::NN);
    CHECK_FALSE(model_kind_from_string("transformer").has_value());
  }

  TEST_CASE("hyperparameter validation") {
    CHECK(resolve_hyperparams(ModelKind::KNN, json::object())["k"] == 15);
    CHECK(resolve_hyperparams(ModelKind::NN, {{"hidden", {50}}})["hidden"] == json::array({50}));
    CHECK_THROWS_AS(resolve_hyperparams(ModelKind::KNN, {{"depth", 3}}), Error);
    CHECK_THROWS_AS(resolve_hyperparams(ModelKind::LR, {{"learning_rate", -1.0}}), Error);
    CHECK_THROWS_AS(resolve_hyperparams(ModelKind::NN, {{"hidden", json::array()}}), Error);
    CHECK_THROWS_AS(resolve_hyperparams(ModelKind::RF, {{"max_features", "most"}}), Error);
  }

  TEST_CASE("every kind learns separable blobs and round-trips") {
    auto train = blobs(300, 1.5, 3);
    auto test = blobs(200, 1.5, 4);
    for (auto kind : kAllModelKinds) {
      CAPTURE(to_string(kind));
      auto m = train_model(spec_of(kind, quick(kind)), train);
      CHECK(m.fitted());
      CHECK(accuracy(m, test) > 0.9);
      auto p = m.predict_proba_batch(test.x);
      for (double v : p) CHECK((v >= 0.0 && v <= 1.0));

      auto back = TrainedModel::deserialize(m.serialize());
      CHECK(back.predict_proba_batch(test.x) == p);
      CHECK(back.serialize() == m.serialize());
      for (Eigen::Index r = 0; r < 5; ++r) {
        std::vector<double> row(test.x.row(r).begin(), test.x.row(r).end());
        CHECK(m.predict_proba(row) == p[static_cast<std::size_t>(r)]);
      }
    }
  }

  TEST_CASE("training is deterministic for a seed") {
    auto train = blobs(200, 1.0, 8);
    for (auto kind : {ModelKind::NN, ModelKind::RF, ModelKind::XGB}) {
      auto a = train_model(spec_of(kind, quick(kind), 5), train);
      auto b = train_model(spec_of(kind, quick(kind), 5), train);
      CHECK(a.serialize() == b.serialize());
    }
  }

  TEST_CASE("logistic regression separates a separable toy set") {
    Matrix x(8, 2);
    x << 0, 0, 0, 1, 1, 0, 1, 1, 3, 3, 3, 4, 4, 3, 4, 4;
    auto d = make_dataset(x, {0, 0, 0, 0, 1, 1, 1, 1});
    auto m = train_model(spec_of(ModelKind::LR), d);
    CHECK(accuracy(m, d) == 1.0);
  }

  TEST_CASE("neural net fits xor") {
    Matrix x(40, 2);
    std::vector<int> y(40);
    Rng rng(9);
    for (int i = 0; i < 40; ++i) {
      const int a = i % 2, b = (i / 2) % 2;
      x(i, 0) = a + rng.normal(0, 0.05);
      x(i, 1) = b + rng.normal(0, 0.05);
      y[static_cast<std::size_t>(i)] = a ^ b;
    }
    auto d = make_dataset(x, y);
    auto m = train_model(
        spec_of(ModelKind::NN, {{"hidden", {100, 100}}, {"max_epochs", 2000}, {"early_stopping", false}}, 2), d);
    CHECK(accuracy(m, d) == 1.0);
    CHECK(m.meta().epochs <= 2000);
  }

  TEST_CASE("gaussian naive bayes matches the analytic posterior") {
    // Equal variances and priors: the boundary is the midpoint of the means.
    auto d = blobs(2000, 1.0, 12, 1);
    auto m = train_model(spec_of(ModelKind::NB), d);
    std::vector<double> left = {-0.3}, right = {0.3};
    CHECK(m.predict_proba(left) < 0.5);
    CHECK(m.predict_proba(right) > 0.5);
    // Posterior odds at x: exp(2 * sep * x) for unit variance, sep = 1.
    std::vector<double> at = {0.5};
    const double expected = 1.0 / (1.0 + std::exp(-2.0 * 0.5));
    CHECK(m.predict_proba(at) == doctest::Approx(expected).epsilon(0.05));
  }

  TEST_CASE("knn with k=1 reproduces its training labels") {
    auto d = blobs(50, 0.3, 13);
    auto m = train_model(spec_of(ModelKind::KNN, {{"k", 1}}), d);
    auto p = m.predict_proba_batch(d.x);
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(p[i] == static_cast<double>(d.y[i]));
  }

  TEST_CASE("zero linear weights give one half") {
    auto d = blobs(60, 1.0, 14);
    auto m = train_model(spec_of(ModelKind::LR), d);
    auto j = json::parse(m.serialize());
    for (auto& w : j["params"]["weights"]) w = 0.0;
    j["params"]["bias"] = 0.0;
    auto zero = TrainedModel::from_json(j);
    for (double p : zero.predict_proba_batch(d.x)) CHECK(p == 0.5);
  }

  TEST_CASE("boosting without trees predicts the base rate") {
    Matrix x(10, 1);
    for (int i = 0; i < 10; ++i) x(i, 0) = i;
    auto d = make_dataset(x, {1, 1, 1, 0, 1, 0, 1, 1, 0, 1});
    for (auto kind : {ModelKind::GBM, ModelKind::XGB}) {
      auto m = train_model(spec_of(kind, {{"n_estimators", 0}}), d);
      for (double p : m.predict_proba_batch(d.x)) CHECK(p == doctest::Approx(0.7));
    }
  }

  TEST_CASE("training errors") {
    Matrix x(4, 1);
    x << 0, 1, 2, 3;
    CHECK_THROWS_AS(train_model(spec_of(ModelKind::LR), make_dataset(x, {1, 1, 1, 1})), Error);
    Matrix bad = x;
    bad(2, 0) = std::nan("");
    CHECK_THROWS_AS(train_model(spec_of(ModelKind::LR), make_dataset(bad, {0, 1, 0, 1})), Error);
    TrainedModel empty;
    std::vector<double> row = {1.0};
    CHECK_THROWS_AS(empty.predict_proba(row), Error);
    auto m = train_model(spec_of(ModelKind::LR), make_dataset(x, {0, 0, 1, 1}));
    std::vector<double> wrong = {1.0, 2.0};
    CHECK_THROWS_AS(m.predict_proba(wrong), Error);
  }

  TEST_CASE("stratified folds keep class balance") {
    std::vector<int> y(103);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = i < 40 ? 1 : 0;
    auto f = stratified_folds(y, 4, 3);
    std::array<int, 4> pos{}, all{};
    for (std::size_t i = 0; i < y.size(); ++i) {
      REQUIRE((f[i] >= 0 && f[i] < 4));
      ++all[static_cast<std::size_t>(f[i])];
      pos[static_cast<std::size_t>(f[i])] += y[i];
    }
    for (int k = 0; k < 4; ++k) {
      CHECK(pos[k] == 10);
      CHECK(std::abs(all[k] - 26) <= 1);
    }
    CHECK(stratified_folds(y, 4, 3) == f);
  }

  TEST_CASE("singleton grid returns its config") {
    auto d = blobs(120, 1.0, 15);
    std::vector<json> grid = {{{"k", 7}}};
    auto r = grid_search_cv(ModelKind::KNN, grid, d, 4, 1);
    CHECK(r.best.hyperparams["k"] == 7);
    CHECK(r.best_index == 0);
    REQUIRE(r.table.size() == 1);
    CHECK(r.table[0].fold_auc.size() == 4);
    std::vector<json> none;
    CHECK_THROWS_AS(grid_search_cv(ModelKind::KNN, none, d), Error);
  }

  TEST_CASE("grid search picks the deeper tree for a three-way interaction") {
    // Label = parity of three binary inputs; depth 1 cannot do better than chance.
    Rng rng(16);
    Matrix x(400, 3);
    std::vector<int> y(400);
    for (int i = 0; i < 400; ++i) {
      int parity = 0;
      for (int c = 0; c < 3; ++c) {
        const int b = static_cast<int>(rng.below(2));
        x(i, c) = b;
        parity ^= b;
      }
      y[static_cast<std::size_t>(i)] = parity;
    }
    auto d = make_dataset(x, y);
    std::vector<json> grid = {{{"max_depth", 1}}, {{"max_depth", 3}}};
    auto r = grid_search_cv(ModelKind::DT, grid, d, 4, 0);
    CHECK(r.best.hyperparams["max_depth"] == 3);
    CHECK(r.table[1].mean_auc > r.table[0].mean_auc);
    CHECK(r.table[1].mean_auc == doctest::Approx(1.0));
  }

  TEST_CASE("default grids are valid") {
    for (auto k : kAllModelKinds) {
      auto g = default_grid(k);
      CHECK_FALSE(g.empty());
      for (const auto& hp : g) CHECK_NOTHROW(resolve_hyperparams(k, hp));
    }
  }

  TEST_CASE("standardizer") {
    Matrix x(3, 2);
    x << 1, 5, 2, 5, 3, 5;
    auto s = Standardizer::fit(x);
    CHECK(s.mean[0] == doctest::Approx(2.0));
    CHECK(s.scale[1] == 1.0);
    auto z = s.apply(x);
    CHECK(z(0, 0) == doctest::Approx(-std::sqrt(1.5)));
    CHECK(z(1, 1) == 0.0);
  }
}
