#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qs/ingest.hpp"
#include "qs/preprocess.hpp"
#include "qs/time.hpp"

namespace qs {

enum class Feature : std::size_t {
  WorkdayMorningCount,
  WorkdayAfternoonCount,
  WorkdayEveningCount,
  WeekendMorningCount,
  WeekendAfternoonCount,
  WeekendEveningCount,
  DaysInactive,
  AttemptNr,
  PreviousAttempts,
  PreviousPerf,
  StatMin,
  StatMean,
  StatMedian,
  StatSd,
  StatSkew,
  StatKurtosis,
};

inline constexpr std::size_t kFeatureCount = 16;
inline constexpr std::size_t kPeriodCountFeatures = 6;

inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "workday_morning_count",   "workday_afternoon_count", "workday_evening_count",
    "weekend_morning_count",   "weekend_afternoon_count", "weekend_evening_count",
    "days_inactive",           "attemptnr",               "previous_attempts",
    "previous_perf",           "stat_min",                "stat_mean",
    "stat_median",             "stat_sd",                 "stat_skew",
    "stat_kurtosis",
};

constexpr std::size_t index_of(Feature f) { return static_cast<std::size_t>(f); }
std::optional<Feature> feature_from_name(std::string_view name);

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double& operator[](Feature f) { return values[index_of(f)]; }
  double operator[](Feature f) const { return values[index_of(f)]; }
  std::span<const double> span() const { return values; }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

// Moments of consecutive inter-event gaps, in hours (skew/kurtosis unitless).
struct TemporalStats {
  double min = 0, max = 0, mean = 0, median = 0, sd = 0, skew = 0, kurtosis = 0;
};

// Population moments; all zero without gaps; skew (Fisher g1) and excess
// kurtosis (g2) are zero when fewer than three gaps exist or sd is zero.
TemporalStats temporal_stats(std::span<const Timestamp> timestamps);

// Day periods: morning [05:00,12:00), afternoon [12:00,18:00), evening
// [18:00,05:00); weekend = Saturday and Sunday; evaluated in local time.
enum class DayPeriod { Morning, Afternoon, Evening };
DayPeriod day_period(int local_hour);
std::size_t period_slot(Timestamp ts, TimeZone tz);  // index into the six count features

std::array<int, kPeriodCountFeatures> period_counts(std::span<const TimedEvent> events, TimeZone tz);

struct AttemptContext {
  int attempt_no = 1;
};

// Earlier attempts of the same student (startTime strictly before this one).
struct StudentHistory {
  std::size_t previous_attempts = 0;
  std::vector<double> submitted_fractions;  // points / maxPoints
};

inline constexpr double kNoHistoryPerformance = 0.5;

struct AssembledFeatures {
  FeatureVector features;
  double stat_max = 0.0;
  bool no_history = false;
};

// `records` is the attempt's daily history; the record with dateRel == day
// must be present (MissingDayRecord otherwise).
AssembledFeatures assemble_feature_vector(std::span<const DailyActivityRecord> records, int day,
                                          const AttemptContext& context,
                                          const StudentHistory& history, TimeZone tz = {});

enum class Label { Disengaged = 0, Engaged = 1 };
Label label_sample(const DailyActivityRecord& record);
std::string_view to_string(Label label);

struct LabeledSample {
  std::string attempt_id;
  std::string student_id;
  std::string semester;
  int date_rel = 0;
  FeatureVector features;
  Label label = Label::Disengaged;
  double stat_max = 0.0;
  bool no_history = false;
};

nlohmann::ordered_json to_json(const LabeledSample& s);
LabeledSample labeled_sample_from_json(const nlohmann::json& j);

struct SampleOptions {
  int horizon_days = kDefaultHorizonDays;
  TimeZone tz;
  SemesterCalendar calendar;  // optional; bounds the cutoff and tags samples
};

struct SampleBuild {
  std::vector<DailyActivityRecord> records;
  std::vector<LabeledSample> samples;  // aligned with `records`
  std::vector<std::string> empty_streams;
};

// Daily records, features and labels for every attempt-day of every stream.
// Student history is drawn from the other streams of the same student.
SampleBuild build_labeled_samples(std::span<const AttemptEventStream> streams,
                                  const SampleOptions& options);

struct CorrelationMatrix {
  std::vector<std::string> names;  // 16 features + "did_submit"
  std::vector<std::vector<double>> values;
  std::vector<std::string> constant_columns;
};

CorrelationMatrix feature_correlation_matrix(std::span<const LabeledSample> samples);
nlohmann::ordered_json to_json(const CorrelationMatrix& m);

// Per-class mean and sd of each feature (the "grouped by submission status" table).
struct FeatureGroupStats {
  std::size_t count = 0;
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> sd{};
};

struct FeatureStatsReport {
  FeatureGroupStats disengaged;
  FeatureGroupStats engaged;
};

FeatureStatsReport feature_stats_by_label(std::span<const LabeledSample> samples);
nlohmann::ordered_json to_json(const FeatureStatsReport& r);

}  // namespace qs
