#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "qs/explain.hpp"

namespace qs {

// erratic <=> count sum < 0, delayed <=> days_inactive phi < 0,
// irregular <=> phi(stat_mean) + phi(stat_sd) < 0. A sum of exactly 0 leaves
// the flag off.
struct BehaviorFlags {
  bool erratic = false;
  bool delayed = false;
  bool irregular = false;
  double count_shap_sum = 0.0;
  double inactive_shap = 0.0;
  double stat_shap_sum = 0.0;
  double previous_perf_shap = 0.0;  // diagnostics only

  friend bool operator==(const BehaviorFlags&, const BehaviorFlags&) = default;
};

// MissingAttribution unless the explanation has all 16 finite attributions.
BehaviorFlags behavior_flags(const ShapExplanation& explanation);
BehaviorFlags flags_from_sums(double count_sum, double inactive, double stat_sum);

// Ordered by severity.
enum class RiskLevel { High, Medium, Low, Engaged };
inline constexpr std::array<RiskLevel, 4> kRiskLevels = {RiskLevel::High, RiskLevel::Medium, RiskLevel::Low,
                                                         RiskLevel::Engaged};

// High: erratic and delayed; Medium: exactly one of them; Low: irregular
// only; Engaged: no flag.
RiskLevel risk_level(const BehaviorFlags& flags);

std::string_view to_string(RiskLevel level);
std::optional<RiskLevel> risk_level_from_string(std::string_view name);

struct RiskAssessment {
  std::string attempt_id;
  std::string student_id;
  int date_rel = 0;
  BehaviorFlags flags;
  RiskLevel level = RiskLevel::Engaged;
  double model_prediction = 0.0;  // probability of Engaged
};

RiskAssessment assess_risk(const ShapExplanation& explanation, std::string attempt_id, std::string student_id,
                           int date_rel);

struct RiskSummaryRow {
  RiskLevel level = RiskLevel::Engaged;
  std::size_t samples = 0;
  std::size_t predicted_disengaged = 0;
};

struct RiskSummary {
  std::array<RiskSummaryRow, 4> rows{};  // kRiskLevels order
  std::size_t total = 0;
};

// `predictions` are Engaged probabilities aligned with `assessments`;
// below the decision threshold counts as predicted disengaged.
RiskSummary cohort_risk_summary(std::span<const RiskAssessment> assessments, std::span<const double> predictions);

nlohmann::ordered_json to_json(const BehaviorFlags& f);
nlohmann::ordered_json to_json(const RiskAssessment& a);
RiskAssessment risk_assessment_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RiskSummary& s);

}  // namespace qs
