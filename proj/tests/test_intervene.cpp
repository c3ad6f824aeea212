#include <set>

#include "doctest.h"
#include "qs/error.hpp"
#include "qs/intervene.hpp"
#include "qs/random.hpp"
#include "risk_fixtures.hpp"

using namespace qs;
using Ids = std::vector<std::string>;

namespace {

RiskAssessment assessment(bool erratic, bool delayed, bool irregular, std::string attempt = "a1", int day = 2) {
  auto f = flags_from_sums(erratic ? -0.2 : 0.1, delayed ? -0.3 : 0.2, irregular ? -0.1 : 0.05);
  RiskAssessment a;
  a.attempt_id = std::move(attempt);
  a.student_id = "s1";
  a.date_rel = day;
  a.flags = f;
  a.level = risk_level(f);
  a.model_prediction = 0.3;
  return a;
}

std::set<std::string> as_set(const Ids& v) { return {v.begin(), v.end()}; }

}  // namespace

TEST_SUITE("intervene") {
  TEST_CASE("standard catalog shape") {
    auto c = Catalog::standard();
    CHECK(c.strategies().size() == 12);
    for (auto b : {Behavior::Erratic, Behavior::Delayed, Behavior::Irregular, Behavior::Engaged}) {
      CHECK(c.for_behavior(b).size() == 3);
    }
    std::set<std::string> ids;
    for (const auto& s : c.strategies()) {
      CHECK_FALSE(s.name.empty());
      CHECK_FALSE(s.description.empty());
      CHECK_FALSE(s.citation_key.empty());
      ids.insert(s.id);
    }
    CHECK(ids.size() == 12);
    REQUIRE(c.rows().size() == 4);
    for (auto l : kRiskLevels) {
      const auto* row = c.row(l);
      REQUIRE(row);
      CHECK(row->strategy_ids.size() == 3);
    }
    CHECK(c.row(RiskLevel::High)->timing == Timing::Immediate);
  }

  TEST_CASE("catalog json round-trip") {
    auto c = Catalog::standard();
    auto back = Catalog::from_json(nlohmann::json::parse(c.to_json().dump()));
    CHECK(back == c);
    CHECK_THROWS_AS(Catalog::from_json(nlohmann::json::parse(R"({"version":1})")), Error);
  }

  TEST_CASE("high plan is immediate") {
    auto p = recommend_interventions(assessment(true, true, false), Catalog::standard());
    CHECK(p.level == RiskLevel::High);
    CHECK(p.timing == Timing::Immediate);
    CHECK(as_set(p.strategies) ==
          std::set<std::string>{"structured-learning-plans", "motivational-messages", "increased-flexibility"});
    CHECK(p.plan_id == plan_id_for("a1", 2));
    CHECK(p.rationale.find("high risk") == 0);
    CHECK(p.rationale.find("-0.200") != std::string::npos);
  }

  TEST_CASE("medium leads with the matched behavior") {
    auto c = Catalog::standard();
    auto erratic = recommend_interventions(assessment(true, false, false), c);
    CHECK(erratic.level == RiskLevel::Medium);
    CHECK(erratic.timing == Timing::AfterQuizWindow);
    REQUIRE(erratic.strategies.size() == 3);
    CHECK(erratic.strategies.front() == "gamification-elements");
    auto delayed = recommend_interventions(assessment(false, true, false), c);
    CHECK(delayed.strategies.front() != "gamification-elements");
    CHECK(as_set(delayed.strategies) == as_set(erratic.strategies));
  }

  TEST_CASE("low and engaged plans") {
    auto c = Catalog::standard();
    auto low = recommend_interventions(assessment(false, false, true), c);
    CHECK(low.timing == Timing::AtCourseCheckpoint);
    CHECK(as_set(low.strategies) ==
          std::set<std::string>{"self-reflection-feedback", "individualized-time-slots", "adapted-quiz-structure"});
    auto eng = recommend_interventions(assessment(false, false, false), c);
    CHECK(as_set(eng.strategies) ==
          std::set<std::string>{"challenging-content", "peer-mentorship", "recognition-of-achievement"});
  }

  TEST_CASE("recommendation is a pure function of level and flags") {
    auto c = Catalog::standard();
    Rng rng(1);
    for (int i = 0; i < 64; ++i) {
      auto a = assessment(rng.bernoulli(0.5), rng.bernoulli(0.5), rng.bernoulli(0.5));
      CHECK(recommend_interventions(a, c) == recommend_interventions(a, c));
      if (a.level == RiskLevel::High) CHECK(recommend_interventions(a, c).timing == Timing::Immediate);
    }
  }

  TEST_CASE("missing catalog entries") {
    CHECK_THROWS_AS(recommend_interventions(assessment(true, true, false), Catalog{}), Error);
    auto std_c = Catalog::standard();
    std::vector<RiskPlanRow> rows(std_c.rows().begin(), std_c.rows().begin() + 1);
    Catalog partial(std_c.strategies(), rows);
    CHECK_NOTHROW(recommend_interventions(assessment(true, true, false), partial));
    try {
      recommend_interventions(assessment(false, false, false), partial);
      FAIL("expected CatalogMissing");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CatalogMissing);
    }
  }

  TEST_CASE("plan json round-trip") {
    auto p = recommend_interventions(assessment(false, true, true), Catalog::standard());
    CHECK(intervention_plan_from_json(nlohmann::json::parse(to_json(p).dump())) == p);
  }

  TEST_CASE("string conversions") {
    for (auto t : {Timing::Immediate, Timing::AfterQuizWindow, Timing::AtCourseCheckpoint})
      CHECK(timing_from_string(to_string(t)) == t);
    for (auto b : {Behavior::Erratic, Behavior::Delayed, Behavior::Irregular, Behavior::Engaged})
      CHECK(behavior_from_string(to_string(b)) == b);
    for (auto a : {DecisionAction::Approve, DecisionAction::Personalize, DecisionAction::Override})
      CHECK(decision_action_from_string(to_string(a)) == a);
    CHECK_FALSE(decision_action_from_string("reject").has_value());
  }

  TEST_CASE("negative trend accumulates inside the window") {
    std::vector<RiskAssessment> h;
    for (int d = 0; d < 10; ++d) h.push_back(assessment(true, false, false, "a1", d));
    h.push_back(assessment(true, true, true, "other", 9));
    auto t = shap_trend(h, "a1", 9);
    CHECK(t.samples == 7);
    CHECK(t.cumulative == doctest::Approx(7 * -0.2));
    CHECK(t.triggered);
    auto strict = shap_trend(h, "a1", 9, TrendConfig{7, 5.0});
    CHECK_FALSE(strict.triggered);
    CHECK(shap_trend(h, "none", 9).samples == 0);
    CHECK_FALSE(shap_trend(h, "none", 9).triggered);
  }

  TEST_CASE("schedule hooks") {
    const Timestamp monday = 4 * kSecondsPerDay;
    const Timestamp week = 7 * kSecondsPerDay;
    CHECK(schedule_time(Timing::Immediate, 12345) == 12345);
    CHECK(schedule_time(Timing::AfterQuizWindow, monday) == monday + week);
    CHECK(schedule_time(Timing::AfterQuizWindow, monday + 1) == monday + week);
    CHECK(schedule_time(Timing::AtCourseCheckpoint, monday - 1) == monday);
    CHECK(schedule_time(Timing::AtCourseCheckpoint, monday - week) == monday);
    ScheduleConfig cfg;
    cfg.checkpoint_days = 14;
    const Timestamp t = make_timestamp(2019, 3, 6, 12);
    const Timestamp next = schedule_time(Timing::AtCourseCheckpoint, t, cfg);
    CHECK(next > t);
    CHECK(next - t <= 14 * kSecondsPerDay);
    CHECK((next - cfg.anchor) % (14 * kSecondsPerDay) == 0);
  }

  TEST_CASE("decision workflow") {
    auto c = Catalog::standard();
    std::vector<InterventionPlan> plans = {recommend_interventions(assessment(true, true, false, "a1"), c),
                                           recommend_interventions(assessment(false, false, true, "a2"), c)};
    PlanStore store(plans);
    const auto& id1 = plans[0].plan_id;
    const auto& id2 = plans[1].plan_id;
    CHECK(store.find(id1)->status == PlanStatus::Pending);
    CHECK(store.find(id1)->active_strategies == plans[0].strategies);

    auto& s1 = store.record_decision({id1, DecisionAction::Approve, {}, "prof", 100, false, ""});
    CHECK(s1.status == PlanStatus::Approved);
    CHECK(s1.audit.size() == 1);

    try {
      store.record_decision({id1, DecisionAction::Approve, {}, "prof", 101, false, ""});
      FAIL("expected InvalidTransition");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidTransition);
    }

    auto& s1b = store.record_decision({id1, DecisionAction::Override, {"peer-mentorship"}, "prof", 102, true, "swap"});
    CHECK(s1b.status == PlanStatus::Overridden);
    CHECK(s1b.active_strategies == Ids{"peer-mentorship"});
    CHECK(s1b.previous_strategies == std::vector<Ids>{plans[0].strategies});
    CHECK(s1b.audit.size() == 2);

    CHECK_THROWS_AS(store.record_decision({id2, DecisionAction::Personalize, {}, "prof", 103, false, ""}), Error);
    store.record_decision({id2, DecisionAction::Personalize, {"adapted-quiz-structure"}, "prof", 104, false, ""});
    CHECK(store.find(id2)->status == PlanStatus::Personalized);

    try {
      store.record_decision({"plan-nope", DecisionAction::Approve, {}, "prof", 105, false, ""});
      FAIL("expected UnknownPlan");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnknownPlan);
    }
    CHECK(store.log().size() == 3);

    // Replaying the persisted log rebuilds every state exactly.
    auto replayed = PlanStore::replay(plans, PlanStore::parse_log(store.log_jsonl()));
    CHECK(replayed.states() == store.states());
    auto j = to_json(*store.find(id1));
    CHECK(j["status"] == "overridden");
    CHECK(j["audit"].size() == 2);
  }

  TEST_CASE("decision json round-trip") {
    InstructorDecision d{"plan-x-d1", DecisionAction::Personalize, {"a", "b"}, "prof", 1538384400, true, "note"};
    CHECK(instructor_decision_from_json(nlohmann::json::parse(to_json(d).dump())) == d);
    CHECK_THROWS_AS(PlanStore::parse_log("{broken\n"), Error);
  }

  TEST_CASE("worked fixtures get their tier's strategies") {
    auto c = Catalog::standard();
    for (const auto& fx : test::behavior_fixtures()) {
      auto a = assess_risk(fx.explanation, "a", "s", 0);
      auto p = recommend_interventions(a, c);
      CHECK(as_set(p.strategies) == as_set(c.row(fx.expected)->strategy_ids));
    }
  }
}
