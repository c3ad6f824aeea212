#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qs/risk.hpp"
#include "qs/time.hpp"

namespace qs {

enum class Behavior { Erratic, Delayed, Irregular, Engaged };
std::string_view to_string(Behavior b);
std::optional<Behavior> behavior_from_string(std::string_view name);

enum class Timing { Immediate, AfterQuizWindow, AtCourseCheckpoint };
std::string_view to_string(Timing t);
std::optional<Timing> timing_from_string(std::string_view name);

struct InterventionStrategy {
  std::string id;
  std::string name;
  Behavior target = Behavior::Engaged;
  std::string description;
  std::string citation_key;

  friend bool operator==(const InterventionStrategy&, const InterventionStrategy&) = default;
};

struct RiskPlanRow {
  RiskLevel level = RiskLevel::Engaged;
  std::vector<std::string> strategy_ids;  // catalog order
  Timing timing = Timing::AtCourseCheckpoint;

  friend bool operator==(const RiskPlanRow&, const RiskPlanRow&) = default;
};

class Catalog {
 public:
  Catalog() = default;
  Catalog(std::vector<InterventionStrategy> strategies, std::vector<RiskPlanRow> rows);

  // Twelve strategies, three per behavior, and one row per risk level.
  static Catalog standard();

  bool empty() const { return strategies_.empty(); }
  const std::vector<InterventionStrategy>& strategies() const { return strategies_; }
  const std::vector<RiskPlanRow>& rows() const { return rows_; }
  const InterventionStrategy* find(std::string_view id) const;
  const RiskPlanRow* row(RiskLevel level) const;
  std::vector<const InterventionStrategy*> for_behavior(Behavior b) const;

  nlohmann::ordered_json to_json() const;
  static Catalog from_json(const nlohmann::json& j);

  friend bool operator==(const Catalog&, const Catalog&) = default;

 private:
  std::vector<InterventionStrategy> strategies_;
  std::vector<RiskPlanRow> rows_;
};

// Negative SHAP accumulation for one attempt over a trailing window of days.
struct TrendConfig {
  int window_days = 7;
  double threshold = 0.0;  // triggered when the cumulative sum < -threshold
};

struct TrendSignal {
  double cumulative = 0.0;
  std::size_t samples = 0;
  bool triggered = false;
};

// Sums count, days_inactive and stat sums of the negative-valued parts over
// `history` entries of the same attempt with dateRel in (day - window, day].
TrendSignal shap_trend(std::span<const RiskAssessment> history, std::string_view attempt_id, int day,
                       const TrendConfig& config = {});

// Calendar hooks for the two deferred timings: the next multiple of
// `period_days` after `anchor` strictly after the reference time.
struct ScheduleConfig {
  Timestamp anchor = 4 * kSecondsPerDay;  // Monday 1970-01-05 00:00 UTC
  int quiz_window_days = 7;
  int checkpoint_days = 7;
};

Timestamp schedule_time(Timing timing, Timestamp reference, const ScheduleConfig& config = {});

struct InterventionPlan {
  std::string plan_id;
  std::string attempt_id;
  std::string student_id;
  int date_rel = 0;
  RiskLevel level = RiskLevel::Engaged;
  std::vector<std::string> strategies;  // strategy ids
  Timing timing = Timing::AtCourseCheckpoint;
  std::string rationale;
  BehaviorFlags flags;

  friend bool operator==(const InterventionPlan&, const InterventionPlan&) = default;
};

std::string plan_id_for(std::string_view attempt_id, int date_rel);

// Strategy set and timing from the level's catalog row; strategies aimed at
// a flagged behavior come first. CatalogMissing when the catalog lacks the
// row or one of its strategies.
InterventionPlan recommend_interventions(const RiskAssessment& assessment, const Catalog& catalog);

nlohmann::ordered_json to_json(const InterventionPlan& p);
InterventionPlan intervention_plan_from_json(const nlohmann::json& j);

enum class PlanStatus { Pending, Approved, Personalized, Overridden };
std::string_view to_string(PlanStatus s);

enum class DecisionAction { Approve, Personalize, Override };
std::string_view to_string(DecisionAction a);
std::optional<DecisionAction> decision_action_from_string(std::string_view name);

struct InstructorDecision {
  std::string plan_id;
  DecisionAction action = DecisionAction::Approve;
  std::vector<std::string> strategies;  // edited or replacement list
  std::string actor;
  Timestamp timestamp = 0;
  bool supersede = false;  // allows deciding on a finalized plan
  std::string note;

  friend bool operator==(const InstructorDecision&, const InstructorDecision&) = default;
};

nlohmann::ordered_json to_json(const InstructorDecision& d);
InstructorDecision instructor_decision_from_json(const nlohmann::json& j);

struct PlanState {
  InterventionPlan plan;  // as recommended
  PlanStatus status = PlanStatus::Pending;
  std::vector<std::string> active_strategies;
  std::vector<std::vector<std::string>> previous_strategies;  // oldest first
  std::vector<InstructorDecision> audit;

  friend bool operator==(const PlanState&, const PlanState&) = default;
};

nlohmann::ordered_json to_json(const PlanState& s);

// Event-sourced plan states; decisions only ever append.
class PlanStore {
 public:
  PlanStore() = default;
  explicit PlanStore(std::span<const InterventionPlan> plans);

  // UnknownPlan; InvalidTransition on a finalized plan without supersede;
  // InvalidConfig for an empty strategy list on Personalize/Override.
  const PlanState& record_decision(const InstructorDecision& decision);

  const PlanState* find(std::string_view plan_id) const;
  const std::vector<InstructorDecision>& log() const { return log_; }
  const std::map<std::string, PlanState, std::less<>>& states() const { return states_; }

  static PlanStore replay(std::span<const InterventionPlan> plans, std::span<const InstructorDecision> log);

  std::string log_jsonl() const;
  static std::vector<InstructorDecision> parse_log(std::string_view jsonl);

 private:
  std::map<std::string, PlanState, std::less<>> states_;
  std::vector<InstructorDecision> log_;
};

}  // namespace qs
