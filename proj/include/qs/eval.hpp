#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qs/features.hpp"
#include "qs/ingest.hpp"
#include "qs/preprocess.hpp"

namespace qs {

// Engaged is the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

// A metric whose denominator is zero is reported as 0 and its name is listed
// in `undefined`.
struct MetricsReport {
  double ppv = 0, npv = 0, tpr = 0, tnr = 0, fpr = 0, fnr = 0;
  double f1_engaged = 0, f1_disengaged = 0, ba = 0;
  std::optional<double> auc;
  std::vector<std::string> undefined;
};

MetricsReport metrics_from_counts(const ConfusionCounts& counts);

// Derived metrics from already-published rates. PPV/NPV are optional; F1 is
// only filled when the matching predictive value is given.
MetricsReport metrics_from_rates(double tpr, double tnr, std::optional<double> ppv = {},
                                 std::optional<double> npv = {});

struct Classification {
  ConfusionCounts counts;
  MetricsReport metrics;
};

// Labels and predictions are 0 (Disengaged) or 1 (Engaged).
Classification classification_metrics(std::span<const int> labels, std::span<const int> predictions);

struct RocPoint {
  double threshold = 0, fpr = 0, tpr = 0;
};

struct RocCurve {
  double auc = 0.5;            // rank (Mann-Whitney) estimate
  double auc_trapezoid = 0.5;  // area under `points`
  std::vector<RocPoint> points;
};

// Points run from (0,0) at threshold +inf to (1,1), one per distinct score.
RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores);

// Rank AUC alone; SingleClassInput when a class is absent.
double auc_score(std::span<const int> labels, std::span<const double> scores);

nlohmann::ordered_json to_json(const ConfusionCounts& c);
nlohmann::ordered_json to_json(const MetricsReport& m);
std::string roc_csv(const RocCurve& roc);

struct WeekBin {
  int iso_year = 0;
  int iso_week = 0;
  std::size_t count = 0;
};

struct GradeBin {
  double rate_lo = 0, rate_hi = 0;  // half-open except the last bin
  std::size_t students = 0;
  double mean_grade = 0;
  double mean_rate = 0;
};

struct StudentEngagement {
  std::string student_id;
  std::size_t attempts = 0;
  std::size_t submitted = 0;
  double submission_rate = 0;
  std::optional<double> grade;
};

struct CohortReport {
  std::map<std::string, std::vector<WeekBin>> weekly_activity;  // semester tag -> weeks
  std::map<std::string, std::size_t> event_counts;              // event tag -> count
  std::vector<StudentEngagement> students;
  bool grades_available = false;
  std::vector<GradeBin> grade_bins;
};

// Grades are keyed by studentID on the 1..6 scale. Events outside any
// semester land under the tag "unassigned".
CohortReport cohort_reports(std::span<const AttemptEventStream> streams,
                            std::span<const LogEvent> events, const SemesterCalendar& calendar,
                            const std::map<std::string, double>& grades, std::size_t rate_bins = 5,
                            TimeZone tz = {});

nlohmann::ordered_json to_json(const CohortReport& r);

// grades.csv: studentID,grade
std::map<std::string, double> parse_grades_csv(std::string_view text);

}  // namespace qs
