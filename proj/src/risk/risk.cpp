#include "qs/risk.hpp"

#include <cctype>
#include <cmath>

#include "qs/error.hpp"
#include "qs/features.hpp"
#include "qs/models.hpp"

namespace qs {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

}  // namespace

BehaviorFlags flags_from_sums(double count_sum, double inactive, double stat_sum) {
  BehaviorFlags f;
  f.count_shap_sum = count_sum;
  f.inactive_shap = inactive;
  f.stat_shap_sum = stat_sum;
  f.erratic = count_sum < 0.0;
  f.delayed = inactive < 0.0;
  f.irregular = stat_sum < 0.0;
  return f;
}

BehaviorFlags behavior_flags(const ShapExplanation& e) {
  if (e.attributions.size() != kFeatureCount) {
    throw Error(ErrorCode::MissingAttribution, "expected " + std::to_string(kFeatureCount) + " attributions, got " +
                                                   std::to_string(e.attributions.size()));
  }
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (!std::isfinite(e.attributions[i])) {
      throw Error(ErrorCode::MissingAttribution, "attribution for " + std::string(kFeatureNames[i]) + " is not finite");
    }
  }
  const auto phi = [&](Feature f) { return e.attributions[index_of(f)]; };
  double counts = 0;
  for (std::size_t i = 0; i < kPeriodCountFeatures; ++i) counts += e.attributions[i];
  auto f = flags_from_sums(counts, phi(Feature::DaysInactive), phi(Feature::StatMean) + phi(Feature::StatSd));
  f.previous_perf_shap = phi(Feature::PreviousPerf);
  return f;
}

RiskLevel risk_level(const BehaviorFlags& f) {
  if (f.erratic && f.delayed) return RiskLevel::High;
  if (f.erratic != f.delayed) return RiskLevel::Medium;
  if (f.irregular) return RiskLevel::Low;
  return RiskLevel::Engaged;
}

std::string_view to_string(RiskLevel level) {
  switch (level) {
    case RiskLevel::High: return "high";
    case RiskLevel::Medium: return "medium";
    case RiskLevel::Low: return "low";
    case RiskLevel::Engaged: return "engaged";
  }
  return "?";
}

std::optional<RiskLevel> risk_level_from_string(std::string_view name) {
  std::string s;
  for (char c : name) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto l : kRiskLevels) {
    if (s == to_string(l)) return l;
  }
  return std::nullopt;
}

RiskAssessment assess_risk(const ShapExplanation& explanation, std::string attempt_id, std::string student_id,
                           int date_rel) {
  RiskAssessment a;
  a.attempt_id = std::move(attempt_id);
  a.student_id = std::move(student_id);
  a.date_rel = date_rel;
  a.flags = behavior_flags(explanation);
  a.level = risk_level(a.flags);
  a.model_prediction = explanation.model_output;
  return a;
}

RiskSummary cohort_risk_summary(std::span<const RiskAssessment> assessments, std::span<const double> predictions) {
  if (assessments.size() != predictions.size()) {
    throw Error(ErrorCode::LengthMismatch, "assessments and predictions differ in count");
  }
  RiskSummary s;
  for (std::size_t i = 0; i < kRiskLevels.size(); ++i) s.rows[i].level = kRiskLevels[i];
  for (std::size_t i = 0; i < assessments.size(); ++i) {
    auto& row = s.rows[static_cast<std::size_t>(assessments[i].level)];
    ++row.samples;
    if (predictions[i] < kDecisionThreshold) ++row.predicted_disengaged;
  }
  s.total = assessments.size();
  return s;
}

ordered_json to_json(const BehaviorFlags& f) {
  ordered_json j;
  j["erratic"] = f.erratic;
  j["delayed"] = f.delayed;
  j["irregular"] = f.irregular;
  j["count_shap_sum"] = f.count_shap_sum;
  j["inactive_shap"] = f.inactive_shap;
  j["stat_shap_sum"] = f.stat_shap_sum;
  j["previous_perf_shap"] = f.previous_perf_shap;
  return j;
}

ordered_json to_json(const RiskAssessment& a) {
  ordered_json j;
  j["attemptID"] = a.attempt_id;
  j["studentID"] = a.student_id;
  j["dateRel"] = a.date_rel;
  j["level"] = to_string(a.level);
  j["prediction"] = a.model_prediction;
  j["flags"] = to_json(a.flags);
  return j;
}

RiskAssessment risk_assessment_from_json(const json& j) {
  RiskAssessment a;
  a.attempt_id = j.at("attemptID").get<std::string>();
  a.student_id = j.value("studentID", "");
  a.date_rel = j.at("dateRel").get<int>();
  auto level = risk_level_from_string(j.at("level").get<std::string>());
  if (!level) throw Error(ErrorCode::Serialization, "unknown risk level " + j.at("level").dump());
  a.level = *level;
  a.model_prediction = j.at("prediction").get<double>();
  const auto& f = j.at("flags");
  a.flags = flags_from_sums(f.at("count_shap_sum").get<double>(), f.at("inactive_shap").get<double>(),
                            f.at("stat_shap_sum").get<double>());
  a.flags.previous_perf_shap = f.value("previous_perf_shap", 0.0);
  return a;
}

ordered_json to_json(const RiskSummary& s) {
  ordered_json j;
  ordered_json samples, predicted;
  for (const auto& row : s.rows) {
    samples[std::string(to_string(row.level))] = row.samples;
    predicted[std::string(to_string(row.level))] = row.predicted_disengaged;
  }
  j["samples"] = samples;
  j["predicted_disengaged"] = predicted;
  j["total"] = s.total;
  return j;
}

}  // namespace qs
