#include "doctest.h"
#include "qs/error.hpp"
#include "qs/random.hpp"
#include "qs/risk.hpp"
#include "risk_fixtures.hpp"

using namespace qs;

namespace {

ShapExplanation with_sums(double counts, double inactive, double stats) {
  ShapExplanation e;
  e.attributions.assign(kFeatureCount, 0.0);
  e.attributions[0] = counts;
  e.attributions[index_of(Feature::DaysInactive)] = inactive;
  e.attributions[index_of(Feature::StatMean)] = stats;
  e.model_output = counts + inactive + stats;
  return e;
}

}  // namespace

TEST_SUITE("risk") {
  TEST_CASE("flags from the three sums") {
    auto f = behavior_flags(with_sums(-0.3, -0.5, 0.1));
    CHECK(f.erratic);
    CHECK(f.delayed);
    CHECK_FALSE(f.irregular);
    CHECK(f.count_shap_sum == doctest::Approx(-0.3));

    auto pos = behavior_flags(with_sums(0.1, 0.2, 0.3));
    CHECK_FALSE((pos.erratic || pos.delayed || pos.irregular));

    auto zero = behavior_flags(with_sums(0.0, 0.0, 0.0));
    CHECK_FALSE((zero.erratic || zero.delayed || zero.irregular));
  }

  TEST_CASE("count and stat sums cover the right inputs") {
    ShapExplanation e;
    e.attributions.assign(kFeatureCount, 0.0);
    for (std::size_t i = 0; i < kPeriodCountFeatures; ++i) e.attributions[i] = i == 5 ? -0.6 : 0.1;
    e.attributions[index_of(Feature::StatSd)] = -0.2;
    e.attributions[index_of(Feature::StatMedian)] = 5.0;  // not part of the stat sum
    e.attributions[index_of(Feature::PreviousPerf)] = -9.0;
    auto f = behavior_flags(e);
    CHECK(f.count_shap_sum == doctest::Approx(-0.1));
    CHECK(f.erratic);
    CHECK(f.irregular);
    CHECK(f.previous_perf_shap == -9.0);
  }

  TEST_CASE("missing or non-finite attributions") {
    ShapExplanation short_e;
    short_e.attributions.assign(15, 0.0);
    CHECK_THROWS_AS(behavior_flags(short_e), Error);
    auto nan_e = with_sums(0, 0, 0);
    nan_e.attributions[3] = std::nan("");
    CHECK_THROWS_AS(behavior_flags(nan_e), Error);
  }

  TEST_CASE("truth table") {
    for (int mask = 0; mask < 8; ++mask) {
      BehaviorFlags f;
      f.erratic = mask & 1;
      f.delayed = mask & 2;
      f.irregular = mask & 4;
      RiskLevel expected = f.erratic && f.delayed  ? RiskLevel::High
                           : f.erratic || f.delayed ? RiskLevel::Medium
                           : f.irregular            ? RiskLevel::Low
                                                    : RiskLevel::Engaged;
      CAPTURE(mask);
      CHECK(risk_level(f) == expected);
    }
  }

  TEST_CASE("worked behavior fixtures") {
    for (const auto& fx : test::behavior_fixtures()) {
      CAPTURE(fx.name);
      CHECK(risk_level(behavior_flags(fx.explanation)) == fx.expected);
    }
  }

  TEST_CASE("level depends only on the signs of the sums") {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
      ShapExplanation e;
      e.attributions.resize(kFeatureCount);
      for (auto& v : e.attributions) v = rng.normal();
      const auto base = behavior_flags(e);
      // Rescale each sum by a positive factor and perturb inputs outside the sums.
      ShapExplanation g = e;
      const double a = rng.uniform(0.1, 5), b = rng.uniform(0.1, 5), c = rng.uniform(0.1, 5);
      for (std::size_t i = 0; i < kPeriodCountFeatures; ++i) g.attributions[i] *= a;
      g.attributions[index_of(Feature::DaysInactive)] *= b;
      g.attributions[index_of(Feature::StatMean)] *= c;
      g.attributions[index_of(Feature::StatSd)] *= c;
      g.attributions[index_of(Feature::StatSkew)] = rng.normal(0, 10);
      g.attributions[index_of(Feature::PreviousPerf)] = rng.normal(0, 10);
      CHECK(risk_level(behavior_flags(g)) == risk_level(base));
    }
  }

  TEST_CASE("names") {
    for (auto l : kRiskLevels) CHECK(risk_level_from_string(to_string(l)) == l);
    CHECK(risk_level_from_string("HIGH") == RiskLevel::High);
    CHECK_FALSE(risk_level_from_string("critical").has_value());
  }

  TEST_CASE("cohort summary") {
    auto empty = cohort_risk_summary({}, {});
    CHECK(empty.total == 0);
    for (const auto& row : empty.rows) CHECK(row.samples == 0);

    std::vector<RiskAssessment> as;
    std::vector<double> preds;
    auto fx = test::behavior_fixtures();
    // 3 High, 2 Medium, 0 Low, 1 Engaged.
    for (int i : {0, 0, 0, 1, 1, 3}) {
      as.push_back(assess_risk(fx[static_cast<std::size_t>(i)].explanation, "a", "s", 0));
      preds.push_back(i == 3 ? 0.9 : 0.2);
    }
    preds[0] = 0.6;
    auto s = cohort_risk_summary(as, preds);
    CHECK(s.total == 6);
    CHECK(s.rows[0].level == RiskLevel::High);
    CHECK(s.rows[0].samples == 3);
    CHECK(s.rows[0].predicted_disengaged == 2);
    CHECK(s.rows[1].samples == 2);
    CHECK(s.rows[2].samples == 0);
    CHECK(s.rows[3].samples == 1);
    CHECK(s.rows[3].predicted_disengaged == 0);
    auto j = to_json(s);
    CHECK(j.dump().find("predicted_disengaged") != std::string::npos);
    std::vector<double> wrong = {0.1};
    CHECK_THROWS_AS(cohort_risk_summary(as, wrong), Error);
  }

  TEST_CASE("assessment json round-trip") {
    auto a = assess_risk(test::behavior_fixtures()[1].explanation, "att", "stu", 3);
    auto back = risk_assessment_from_json(nlohmann::json::parse(to_json(a).dump()));
    CHECK(back.attempt_id == "att");
    CHECK(back.student_id == "stu");
    CHECK(back.date_rel == 3);
    CHECK(back.level == RiskLevel::Medium);
    CHECK(back.flags == a.flags);
    CHECK(back.model_prediction == a.model_prediction);
  }
}
