#include "qs/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "qs/error.hpp"

namespace qs {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kSecondsPerHour = 3600.0;

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::optional<Feature> feature_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (kFeatureNames[i] == name) return static_cast<Feature>(i);
  }
  if (name == "inactive_days") return Feature::DaysInactive;
  return std::nullopt;
}

TemporalStats temporal_stats(std::span<const Timestamp> timestamps) {
  TemporalStats st;
  if (timestamps.size() < 2) return st;
  std::vector<double> deltas;
  deltas.reserve(timestamps.size() - 1);
  bool all_equal = true;
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    Timestamp d = timestamps[i] - timestamps[i - 1];
    if (i > 1 && d != timestamps[1] - timestamps[0]) all_equal = false;
    deltas.push_back(static_cast<double>(d));
  }
  const double n = static_cast<double>(deltas.size());
  auto [mn, mx] = std::minmax_element(deltas.begin(), deltas.end());
  double mean = std::accumulate(deltas.begin(), deltas.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0;
  if (!all_equal) {
    for (double d : deltas) {
      double c = d - mean;
      double c2 = c * c;
      m2 += c2;
      m3 += c2 * c;
      m4 += c2 * c2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
  }
  st.min = *mn / kSecondsPerHour;
  st.max = *mx / kSecondsPerHour;
  st.mean = mean / kSecondsPerHour;
  st.median = median_of(deltas) / kSecondsPerHour;
  double sd = std::sqrt(m2);
  st.sd = sd / kSecondsPerHour;
  if (!all_equal && sd > 0.0 && deltas.size() >= 3) {
    st.skew = m3 / (m2 * sd);
    st.kurtosis = m4 / (m2 * m2) - 3.0;
  }
  return st;
}

DayPeriod day_period(int hour) {
  if (hour >= 5 && hour < 12) return DayPeriod::Morning;
  if (hour >= 12 && hour < 18) return DayPeriod::Afternoon;
  return DayPeriod::Evening;
}

std::size_t period_slot(Timestamp ts, TimeZone tz) {
  auto wd = local_weekday(ts, tz);
  bool weekend = wd == std::chrono::Saturday || wd == std::chrono::Sunday;
  return (weekend ? 3 : 0) + static_cast<std::size_t>(day_period(local_hour(ts, tz)));
}

std::array<int, kPeriodCountFeatures> period_counts(std::span<const TimedEvent> events,
                                                    TimeZone tz) {
  std::array<int, kPeriodCountFeatures> counts{};
  for (const auto& e : events) ++counts[period_slot(e.time, tz)];
  return counts;
}

AssembledFeatures assemble_feature_vector(std::span<const DailyActivityRecord> records, int day,
                                          const AttemptContext& context,
                                          const StudentHistory& history, TimeZone tz) {
  auto it = std::find_if(records.begin(), records.end(),
                         [day](const DailyActivityRecord& r) { return r.date_rel == day; });
  if (it == records.end()) {
    throw Error(ErrorCode::MissingDayRecord, "no daily record for day " + std::to_string(day));
  }
  const auto& rec = *it;
  AssembledFeatures out;
  auto& fv = out.features;

  auto counts = period_counts(rec.accumulated_activity, tz);
  for (std::size_t i = 0; i < kPeriodCountFeatures; ++i) fv.values[i] = counts[i];

  fv[Feature::DaysInactive] = rec.inactive_days;
  fv[Feature::AttemptNr] = context.attempt_no;
  fv[Feature::PreviousAttempts] = static_cast<double>(history.previous_attempts);
  if (history.submitted_fractions.empty()) {
    fv[Feature::PreviousPerf] = kNoHistoryPerformance;
    out.no_history = true;
  } else {
    fv[Feature::PreviousPerf] =
        std::accumulate(history.submitted_fractions.begin(), history.submitted_fractions.end(), 0.0) /
        static_cast<double>(history.submitted_fractions.size());
  }

  std::vector<Timestamp> times;
  times.reserve(rec.accumulated_activity.size());
  for (const auto& e : rec.accumulated_activity) times.push_back(e.time);
  auto st = temporal_stats(times);
  fv[Feature::StatMin] = st.min;
  fv[Feature::StatMean] = st.mean;
  fv[Feature::StatMedian] = st.median;
  fv[Feature::StatSd] = st.sd;
  fv[Feature::StatSkew] = st.skew;
  fv[Feature::StatKurtosis] = st.kurtosis;
  out.stat_max = st.max;
  return out;
}

Label label_sample(const DailyActivityRecord& record) {
  return record.did_submit ? Label::Engaged : Label::Disengaged;
}

std::string_view to_string(Label label) {
  return label == Label::Engaged ? "engaged" : "disengaged";
}

SampleBuild build_labeled_samples(std::span<const AttemptEventStream> streams,
                                  const SampleOptions& options) {
  SampleBuild out;

  // Per-student attempt order by start time.
  std::map<std::string, std::vector<std::size_t>> by_student;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    if (!streams[i].student_id.empty()) by_student[streams[i].student_id].push_back(i);
  }
  std::vector<StudentHistory> histories(streams.size());
  for (auto& [student, idx] : by_student) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return streams[a].attempt.start_time < streams[b].attempt.start_time;
    });
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& current = streams[idx[k]].attempt;
      auto& h = histories[idx[k]];
      for (std::size_t j = 0; j < k; ++j) {
        const auto& prev = streams[idx[j]].attempt;
        if (prev.start_time >= current.start_time) break;
        ++h.previous_attempts;
        if (prev.status == QuizStatus::Submitted && prev.points && prev.max_points > 0.0) {
          h.submitted_fractions.push_back(*prev.points / prev.max_points);
        }
      }
    }
  }

  for (std::size_t i = 0; i < streams.size(); ++i) {
    const auto& stream = streams[i];
    const Semester* sem = options.calendar.find(stream.attempt.start_time);
    std::optional<Timestamp> sem_end;
    if (sem) sem_end = sem->end;
    int cutoff = effective_cutoff(stream, options.horizon_days, sem_end, options.tz);
    auto records = build_daily_records(stream, cutoff, options.tz);
    if (records.empty()) {
      out.empty_streams.push_back(stream.attempt.attempt_id);
      continue;
    }
    AttemptContext ctx{stream.attempt.attempt_no};
    for (const auto& rec : records) {
      auto assembled = assemble_feature_vector(std::span(&rec, 1), rec.date_rel, ctx, histories[i],
                                               options.tz);
      LabeledSample s;
      s.attempt_id = stream.attempt.attempt_id;
      s.student_id = stream.student_id;
      s.semester = sem ? sem->tag : std::string();
      s.date_rel = rec.date_rel;
      s.features = assembled.features;
      s.label = label_sample(rec);
      s.stat_max = assembled.stat_max;
      s.no_history = assembled.no_history;
      out.samples.push_back(std::move(s));
    }
    for (auto& rec : records) out.records.push_back(std::move(rec));
  }
  return out;
}

ordered_json to_json(const LabeledSample& s) {
  ordered_json j;
  j["attemptID"] = s.attempt_id;
  j["studentID"] = s.student_id;
  j["semester"] = s.semester;
  j["dateRel"] = s.date_rel;
  for (std::size_t i = 0; i < kFeatureCount; ++i) j[std::string(kFeatureNames[i])] = s.features.values[i];
  j["did_submit"] = s.label == Label::Engaged;
  j["stat_max"] = s.stat_max;
  j["no_history"] = s.no_history;
  return j;
}

LabeledSample labeled_sample_from_json(const json& j) {
  LabeledSample s;
  s.attempt_id = j.at("attemptID").get<std::string>();
  s.student_id = j.value("studentID", "");
  s.semester = j.value("semester", "");
  s.date_rel = j.at("dateRel").get<int>();
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    s.features.values[i] = j.at(std::string(kFeatureNames[i])).get<double>();
  }
  s.label = j.at("did_submit").get<bool>() ? Label::Engaged : Label::Disengaged;
  s.stat_max = j.value("stat_max", 0.0);
  s.no_history = j.value("no_history", false);
  return s;
}

CorrelationMatrix feature_correlation_matrix(std::span<const LabeledSample> samples) {
  if (samples.size() < 2) {
    throw Error(ErrorCode::TooFewSamples, "correlation needs at least two samples");
  }
  constexpr std::size_t kCols = kFeatureCount + 1;
  const double n = static_cast<double>(samples.size());
  auto value = [&](const LabeledSample& s, std::size_t c) {
    return c < kFeatureCount ? s.features.values[c] : (s.label == Label::Engaged ? 1.0 : 0.0);
  };

  std::array<double, kCols> mean{};
  for (const auto& s : samples) {
    for (std::size_t c = 0; c < kCols; ++c) mean[c] += value(s, c);
  }
  for (auto& m : mean) m /= n;

  std::vector<std::vector<double>> cov(kCols, std::vector<double>(kCols, 0.0));
  for (const auto& s : samples) {
    std::array<double, kCols> d{};
    for (std::size_t c = 0; c < kCols; ++c) d[c] = value(s, c) - mean[c];
    for (std::size_t a = 0; a < kCols; ++a) {
      for (std::size_t b = a; b < kCols; ++b) cov[a][b] += d[a] * d[b];
    }
  }

  CorrelationMatrix m;
  for (auto name : kFeatureNames) m.names.emplace_back(name);
  m.names.emplace_back("did_submit");
  m.values.assign(kCols, std::vector<double>(kCols, 0.0));
  std::array<bool, kCols> constant{};
  for (std::size_t c = 0; c < kCols; ++c) {
    constant[c] = cov[c][c] <= 0.0;
    if (constant[c]) m.constant_columns.push_back(m.names[c]);
  }
  for (std::size_t a = 0; a < kCols; ++a) {
    m.values[a][a] = 1.0;
    for (std::size_t b = a + 1; b < kCols; ++b) {
      double r = 0.0;
      if (!constant[a] && !constant[b]) {
        r = std::clamp(cov[a][b] / std::sqrt(cov[a][a] * cov[b][b]), -1.0, 1.0);
      }
      m.values[a][b] = m.values[b][a] = r;
    }
  }
  return m;
}

ordered_json to_json(const CorrelationMatrix& m) {
  ordered_json j;
  j["names"] = m.names;
  j["values"] = m.values;
  j["constant_columns"] = m.constant_columns;
  return j;
}

FeatureStatsReport feature_stats_by_label(std::span<const LabeledSample> samples) {
  FeatureStatsReport r;
  auto accumulate = [&](Label label, FeatureGroupStats& g) {
    for (const auto& s : samples) {
      if (s.label != label) continue;
      ++g.count;
      for (std::size_t i = 0; i < kFeatureCount; ++i) g.mean[i] += s.features.values[i];
    }
    if (g.count == 0) return;
    for (auto& m : g.mean) m /= static_cast<double>(g.count);
    for (const auto& s : samples) {
      if (s.label != label) continue;
      for (std::size_t i = 0; i < kFeatureCount; ++i) {
        double d = s.features.values[i] - g.mean[i];
        g.sd[i] += d * d;
      }
    }
    for (auto& v : g.sd) v = g.count > 1 ? std::sqrt(v / static_cast<double>(g.count - 1)) : 0.0;
  };
  accumulate(Label::Disengaged, r.disengaged);
  accumulate(Label::Engaged, r.engaged);
  return r;
}

ordered_json to_json(const FeatureStatsReport& r) {
  auto group = [](const FeatureGroupStats& g) {
    ordered_json j;
    j["count"] = g.count;
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      j[std::string(kFeatureNames[i])] = {{"mean", g.mean[i]}, {"sd", g.sd[i]}};
    }
    return j;
  };
  ordered_json j;
  j["N"] = group(r.disengaged);
  j["Y"] = group(r.engaged);
  return j;
}

}  // namespace qs
