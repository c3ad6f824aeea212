#include "qs/intervene.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "qs/error.hpp"

namespace qs {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string signed_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.3f", v);
  return buf;
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::Serialization, what);
}

}  // namespace

std::string_view to_string(Behavior b) {
  switch (b) {
    case Behavior::Erratic: return "erratic";
    case Behavior::Delayed: return "delayed";
    case Behavior::Irregular: return "irregular";
    case Behavior::Engaged: return "engaged";
  }
  return "?";
}

std::optional<Behavior> behavior_from_string(std::string_view name) {
  auto s = lower(name);
  for (auto b : {Behavior::Erratic, Behavior::Delayed, Behavior::Irregular, Behavior::Engaged}) {
    if (s == to_string(b)) return b;
  }
  return std::nullopt;
}

std::string_view to_string(Timing t) {
  switch (t) {
    case Timing::Immediate: return "immediate";
    case Timing::AfterQuizWindow: return "after_quiz_window";
    case Timing::AtCourseCheckpoint: return "at_course_checkpoint";
  }
  return "?";
}

std::optional<Timing> timing_from_string(std::string_view name) {
  auto s = lower(name);
  for (auto t : {Timing::Immediate, Timing::AfterQuizWindow, Timing::AtCourseCheckpoint}) {
    if (s == to_string(t)) return t;
  }
  return std::nullopt;
}

Catalog::Catalog(std::vector<InterventionStrategy> strategies, std::vector<RiskPlanRow> rows)
    : strategies_(std::move(strategies)), rows_(std::move(rows)) {}

Catalog Catalog::standard() {
  std::vector<InterventionStrategy> s = {
      {"structured-learning-plans", "Structured Learning Plans", Behavior::Erratic,
       "Fixed weekly study slots and a planning template with regular check-ins.", "structured_learning_plans"},
      {"gamification-elements", "Gamification Elements", Behavior::Erratic,
       "Points or badges for quiz activity spread over several days of the week.", "gamification_elements"},
      {"increased-flexibility", "Increased Flexibility", Behavior::Erratic,
       "Alternative time slots and suggested submission windows instead of one fixed date.",
       "increased_flexibility"},
      {"motivational-messages", "Motivational Messages", Behavior::Delayed,
       "A personal note sent after a run of inactive days, stressing the value of the quiz.",
       "motivational_messages"},
      {"deadline-reminders", "Deadline Reminders", Behavior::Delayed,
       "Alerts at set intervals and ahead of exam preparation periods.", "deadline_reminders"},
      {"progressive-deadlines", "Progressive Deadlines", Behavior::Delayed,
       "Intermediate targets such as one quiz per week before each course checkpoint.", "progressive_deadlines"},
      {"self-reflection-feedback", "Self-Reflection Feedback", Behavior::Irregular,
       "A timeline view of the student's own quiz interactions.", "self_reflection_feedback"},
      {"individualized-time-slots", "Individualized Time Slots", Behavior::Irregular,
       "Study-time suggestions taken from the hours the student is usually active.",
       "individualized_time_slots"},
      {"adapted-quiz-structure", "Adapted Quiz Structure", Behavior::Irregular,
       "Shorter quizzes offered more often.", "adaptive_quiz_structure"},
      {"challenging-content", "Challenging Content", Behavior::Engaged,
       "Optional advanced tasks and bonus quizzes.", "challenging_content"},
      {"peer-mentorship", "Peer Mentorship", Behavior::Engaged,
       "Invitations to mentor classmates with lower quiz activity.", "peer_mentorship"},
      {"recognition-of-achievement", "Recognition of Achievement", Behavior::Engaged,
       "Badges, certificates or public acknowledgment of steady participation.", "reward_systems"},
  };
  std::vector<RiskPlanRow> rows = {
      {RiskLevel::High, {"structured-learning-plans", "motivational-messages", "increased-flexibility"},
       Timing::Immediate},
      {RiskLevel::Medium, {"gamification-elements", "deadline-reminders", "progressive-deadlines"},
       Timing::AfterQuizWindow},
      {RiskLevel::Low, {"self-reflection-feedback", "individualized-time-slots", "adapted-quiz-structure"},
       Timing::AtCourseCheckpoint},
      {RiskLevel::Engaged, {"challenging-content", "peer-mentorship", "recognition-of-achievement"},
       Timing::AtCourseCheckpoint},
  };
  return Catalog(std::move(s), std::move(rows));
}

const InterventionStrategy* Catalog::find(std::string_view id) const {
  for (const auto& s : strategies_) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const RiskPlanRow* Catalog::row(RiskLevel level) const {
  for (const auto& r : rows_) {
    if (r.level == level) return &r;
  }
  return nullptr;
}

std::vector<const InterventionStrategy*> Catalog::for_behavior(Behavior b) const {
  std::vector<const InterventionStrategy*> out;
  for (const auto& s : strategies_) {
    if (s.target == b) out.push_back(&s);
  }
  return out;
}

ordered_json Catalog::to_json() const {
  ordered_json strategies = ordered_json::array();
  for (const auto& s : strategies_) {
    strategies.push_back({{"id", s.id},
                          {"name", s.name},
                          {"target_behavior", to_string(s.target)},
                          {"description", s.description},
                          {"citation_key", s.citation_key}});
  }
  ordered_json rows = ordered_json::array();
  for (const auto& r : rows_) {
    rows.push_back({{"risk_level", to_string(r.level)}, {"strategies", r.strategy_ids}, {"timing", to_string(r.timing)}});
  }
  ordered_json j;
  j["version"] = 1;
  j["strategies"] = strategies;
  j["risk_plans"] = rows;
  return j;
}

Catalog Catalog::from_json(const json& j) {
  try {
    std::vector<InterventionStrategy> strategies;
    for (const auto& s : j.at("strategies")) {
      auto target = behavior_from_string(s.at("target_behavior").get<std::string>());
      require(target.has_value(), "unknown behavior in catalog");
      strategies.push_back({s.at("id").get<std::string>(), s.at("name").get<std::string>(), *target,
                            s.value("description", ""), s.value("citation_key", "")});
    }
    std::vector<RiskPlanRow> rows;
    for (const auto& r : j.at("risk_plans")) {
      auto level = risk_level_from_string(r.at("risk_level").get<std::string>());
      auto timing = timing_from_string(r.at("timing").get<std::string>());
      require(level && timing, "unknown risk level or timing in catalog");
      rows.push_back({*level, r.at("strategies").get<std::vector<std::string>>(), *timing});
    }
    return Catalog(std::move(strategies), std::move(rows));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("malformed catalog: ") + e.what());
  }
}

TrendSignal shap_trend(std::span<const RiskAssessment> history, std::string_view attempt_id, int day,
                       const TrendConfig& config) {
  TrendSignal t;
  for (const auto& a : history) {
    if (a.attempt_id != attempt_id || a.date_rel > day || a.date_rel <= day - config.window_days) continue;
    ++t.samples;
    t.cumulative += std::min(0.0, a.flags.count_shap_sum) + std::min(0.0, a.flags.inactive_shap) +
                    std::min(0.0, a.flags.stat_shap_sum);
  }
  t.triggered = t.samples > 0 && t.cumulative < -config.threshold;
  return t;
}

Timestamp schedule_time(Timing timing, Timestamp reference, const ScheduleConfig& config) {
  if (timing == Timing::Immediate) return reference;
  const int days = timing == Timing::AfterQuizWindow ? config.quiz_window_days : config.checkpoint_days;
  const Timestamp period = std::max<Timestamp>(1, days) * kSecondsPerDay;
  Timestamp offset = reference - config.anchor;
  Timestamp k = offset >= 0 ? offset / period + 1 : -((-offset) / period) + ((-offset) % period == 0 ? 1 : 0);
  return config.anchor + k * period;
}

std::string plan_id_for(std::string_view attempt_id, int date_rel) {
  return "plan-" + std::string(attempt_id) + "-d" + std::to_string(date_rel);
}

InterventionPlan recommend_interventions(const RiskAssessment& a, const Catalog& catalog) {
  if (catalog.empty()) throw Error(ErrorCode::CatalogMissing, "no intervention catalog loaded");
  const RiskPlanRow* row = catalog.row(a.level);
  if (!row || row->strategy_ids.empty()) {
    throw Error(ErrorCode::CatalogMissing, "catalog has no plan for risk level " + std::string(to_string(a.level)));
  }
  std::vector<const InterventionStrategy*> listed;
  for (const auto& id : row->strategy_ids) {
    const auto* s = catalog.find(id);
    if (!s) throw Error(ErrorCode::CatalogMissing, "catalog lacks strategy '" + id + "'");
    listed.push_back(s);
  }
  auto matched = [&](const InterventionStrategy* s) {
    switch (s->target) {
      case Behavior::Erratic: return a.flags.erratic;
      case Behavior::Delayed: return a.flags.delayed;
      case Behavior::Irregular: return a.flags.irregular;
      case Behavior::Engaged: return !a.flags.erratic && !a.flags.delayed && !a.flags.irregular;
    }
    return false;
  };
  std::stable_partition(listed.begin(), listed.end(), matched);

  InterventionPlan p;
  p.plan_id = plan_id_for(a.attempt_id, a.date_rel);
  p.attempt_id = a.attempt_id;
  p.student_id = a.student_id;
  p.date_rel = a.date_rel;
  p.level = a.level;
  p.timing = row->timing;
  p.flags = a.flags;
  for (const auto* s : listed) p.strategies.push_back(s->id);

  std::vector<std::string> flagged;
  if (a.flags.erratic) flagged.emplace_back("erratic");
  if (a.flags.delayed) flagged.emplace_back("delayed");
  if (a.flags.irregular) flagged.emplace_back("irregular");
  std::ostringstream r;
  r << to_string(a.level) << " risk; ";
  if (flagged.empty()) {
    r << "no behavior flag";
  } else {
    r << "flags:";
    for (const auto& f : flagged) r << ' ' << f;
  }
  r << "; count SHAP sum " << signed_value(a.flags.count_shap_sum) << ", days_inactive SHAP "
    << signed_value(a.flags.inactive_shap) << ", stat_mean+stat_sd SHAP " << signed_value(a.flags.stat_shap_sum);
  p.rationale = r.str();
  return p;
}

ordered_json to_json(const InterventionPlan& p) {
  ordered_json j;
  j["planID"] = p.plan_id;
  j["attemptID"] = p.attempt_id;
  j["studentID"] = p.student_id;
  j["dateRel"] = p.date_rel;
  j["riskLevel"] = to_string(p.level);
  j["strategies"] = p.strategies;
  j["timing"] = to_string(p.timing);
  j["rationale"] = p.rationale;
  j["flags"] = to_json(p.flags);
  return j;
}

InterventionPlan intervention_plan_from_json(const json& j) {
  InterventionPlan p;
  p.plan_id = j.at("planID").get<std::string>();
  p.attempt_id = j.at("attemptID").get<std::string>();
  p.student_id = j.value("studentID", "");
  p.date_rel = j.at("dateRel").get<int>();
  auto level = risk_level_from_string(j.at("riskLevel").get<std::string>());
  auto timing = timing_from_string(j.at("timing").get<std::string>());
  require(level && timing, "unknown risk level or timing in plan");
  p.level = *level;
  p.timing = *timing;
  p.strategies = j.at("strategies").get<std::vector<std::string>>();
  p.rationale = j.value("rationale", "");
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    p.flags = flags_from_sums(f.at("count_shap_sum").get<double>(), f.at("inactive_shap").get<double>(),
                              f.at("stat_shap_sum").get<double>());
    p.flags.previous_perf_shap = f.value("previous_perf_shap", 0.0);
  }
  return p;
}

std::string_view to_string(PlanStatus s) {
  switch (s) {
    case PlanStatus::Pending: return "pending";
    case PlanStatus::Approved: return "approved";
    case PlanStatus::Personalized: return "personalized";
    case PlanStatus::Overridden: return "overridden";
  }
  return "?";
}

std::string_view to_string(DecisionAction a) {
  switch (a) {
    case DecisionAction::Approve: return "approve";
    case DecisionAction::Personalize: return "personalize";
    case DecisionAction::Override: return "override";
  }
  return "?";
}

std::optional<DecisionAction> decision_action_from_string(std::string_view name) {
  auto s = lower(name);
  for (auto a : {DecisionAction::Approve, DecisionAction::Personalize, DecisionAction::Override}) {
    if (s == to_string(a)) return a;
  }
  return std::nullopt;
}

ordered_json to_json(const InstructorDecision& d) {
  ordered_json j;
  j["planID"] = d.plan_id;
  j["action"] = to_string(d.action);
  j["strategies"] = d.strategies;
  j["actor"] = d.actor;
  j["timestamp"] = d.timestamp;
  j["supersede"] = d.supersede;
  j["note"] = d.note;
  return j;
}

InstructorDecision instructor_decision_from_json(const json& j) {
  InstructorDecision d;
  d.plan_id = j.at("planID").get<std::string>();
  auto action = decision_action_from_string(j.at("action").get<std::string>());
  if (!action) throw Error(ErrorCode::InvalidConfig, "unknown decision action " + j.at("action").dump());
  d.action = *action;
  d.strategies = j.value("strategies", std::vector<std::string>{});
  d.actor = j.value("actor", "");
  d.timestamp = j.value("timestamp", Timestamp{0});
  d.supersede = j.value("supersede", false);
  d.note = j.value("note", "");
  return d;
}

ordered_json to_json(const PlanState& s) {
  ordered_json j = to_json(s.plan);
  j["status"] = to_string(s.status);
  j["activeStrategies"] = s.active_strategies;
  j["previousStrategies"] = s.previous_strategies;
  ordered_json audit = ordered_json::array();
  for (const auto& d : s.audit) audit.push_back(to_json(d));
  j["audit"] = audit;
  return j;
}

PlanStore::PlanStore(std::span<const InterventionPlan> plans) {
  for (const auto& p : plans) {
    PlanState s;
    s.plan = p;
    s.active_strategies = p.strategies;
    states_.insert_or_assign(p.plan_id, std::move(s));
  }
}

const PlanState& PlanStore::record_decision(const InstructorDecision& d) {
  auto it = states_.find(d.plan_id);
  if (it == states_.end()) throw Error(ErrorCode::UnknownPlan, "no plan '" + d.plan_id + "'");
  auto& s = it->second;
  if (s.status != PlanStatus::Pending && !d.supersede) {
    throw Error(ErrorCode::InvalidTransition, "plan '" + d.plan_id + "' is already " +
                                                  std::string(to_string(s.status)) + "; set supersede to re-decide");
  }
  if (d.action != DecisionAction::Approve && d.strategies.empty()) {
    throw Error(ErrorCode::InvalidConfig, std::string(to_string(d.action)) + " needs a strategy list");
  }
  switch (d.action) {
    case DecisionAction::Approve:
      s.status = PlanStatus::Approved;
      break;
    case DecisionAction::Personalize:
    case DecisionAction::Override:
      s.previous_strategies.push_back(s.active_strategies);
      s.active_strategies = d.strategies;
      s.status = d.action == DecisionAction::Personalize ? PlanStatus::Personalized : PlanStatus::Overridden;
      break;
  }
  s.audit.push_back(d);
  log_.push_back(d);
  return s;
}

const PlanState* PlanStore::find(std::string_view plan_id) const {
  auto it = states_.find(plan_id);
  return it == states_.end() ? nullptr : &it->second;
}

PlanStore PlanStore::replay(std::span<const InterventionPlan> plans, std::span<const InstructorDecision> log) {
  PlanStore store(plans);
  for (const auto& d : log) store.record_decision(d);
  return store;
}

std::string PlanStore::log_jsonl() const {
  std::string out;
  for (const auto& d : log_) out += to_json(d).dump() + "\n";
  return out;
}

std::vector<InstructorDecision> PlanStore::parse_log(std::string_view jsonl) {
  std::vector<InstructorDecision> out;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    auto line = jsonl.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(instructor_decision_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Serialization, std::string("bad decision log line: ") + e.what());
    }
  }
  return out;
}

}  // namespace qs
