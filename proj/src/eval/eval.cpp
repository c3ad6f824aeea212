#include "qs/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "qs/csv.hpp"
#include "qs/error.hpp"

namespace qs {
namespace {

using nlohmann::ordered_json;

double ratio(std::size_t num, std::size_t den, const char* name, std::vector<std::string>& undefined) {
  if (den == 0) {
    undefined.emplace_back(name);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double a, double b, const char* name, std::vector<std::string>& undefined) {
  if (a + b <= 0.0) {
    undefined.emplace_back(name);
    return 0.0;
  }
  return 2.0 * a * b / (a + b);
}

struct ClassCounts {
  std::size_t pos = 0, neg = 0;
};

ClassCounts count_classes(std::span<const int> labels) {
  ClassCounts c;
  for (int l : labels) (l ? c.pos : c.neg)++;
  return c;
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(a) + " labels vs " + std::to_string(b) + " predictions");
  }
  if (a == 0) throw Error(ErrorCode::EmptyInput, "no samples");
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& c) {
  MetricsReport m;
  m.ppv = ratio(c.tp, c.tp + c.fp, "ppv", m.undefined);
  m.npv = ratio(c.tn, c.tn + c.fn, "npv", m.undefined);
  m.tpr = ratio(c.tp, c.positives(), "tpr", m.undefined);
  m.tnr = ratio(c.tn, c.negatives(), "tnr", m.undefined);
  m.fpr = ratio(c.fp, c.negatives(), "fpr", m.undefined);
  m.fnr = ratio(c.fn, c.positives(), "fnr", m.undefined);
  m.f1_engaged = harmonic(m.ppv, m.tpr, "f1_engaged", m.undefined);
  m.f1_disengaged = harmonic(m.npv, m.tnr, "f1_disengaged", m.undefined);
  m.ba = 0.5 * (m.tpr + m.tnr);
  return m;
}

MetricsReport metrics_from_rates(double tpr, double tnr, std::optional<double> ppv,
                                 std::optional<double> npv) {
  MetricsReport m;
  m.tpr = tpr;
  m.tnr = tnr;
  m.fpr = 1.0 - tnr;
  m.fnr = 1.0 - tpr;
  m.ba = 0.5 * (tpr + tnr);
  if (ppv) {
    m.ppv = *ppv;
    m.f1_engaged = harmonic(*ppv, tpr, "f1_engaged", m.undefined);
  } else {
    m.undefined.emplace_back("ppv");
    m.undefined.emplace_back("f1_engaged");
  }
  if (npv) {
    m.npv = *npv;
    m.f1_disengaged = harmonic(*npv, tnr, "f1_disengaged", m.undefined);
  } else {
    m.undefined.emplace_back("npv");
    m.undefined.emplace_back("f1_disengaged");
  }
  return m;
}

Classification classification_metrics(std::span<const int> labels, std::span<const int> predictions) {
  check_lengths(labels.size(), predictions.size());
  Classification out;
  auto& c = out.counts;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool actual = labels[i] != 0;
    bool predicted = predictions[i] != 0;
    if (actual && predicted) ++c.tp;
    else if (actual) ++c.fn;
    else if (predicted) ++c.fp;
    else ++c.tn;
  }
  out.metrics = metrics_from_counts(c);
  return out;
}

double auc_score(std::span<const int> labels, std::span<const double> scores) {
  check_lengths(labels.size(), scores.size());
  auto cls = count_classes(labels);
  if (cls.pos == 0 || cls.neg == 0) {
    throw Error(ErrorCode::SingleClassInput, "AUC needs both classes");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the positive rank sum, with tied groups at their average rank.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::size_t group_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      group_pos += labels[order[j]] ? 1 : 0;
      ++j;
    }
    // 1-based ranks i+1 .. j; 2 * average = i + 1 + j
    twice_rank_sum += group_pos * (i + 1 + j);
    i = j;
  }
  std::uint64_t p = cls.pos, n = cls.neg;
  std::uint64_t twice_u = twice_rank_sum - p * (p + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * p * n);
}

RocCurve roc_auc(std::span<const int> labels, std::span<const double> scores) {
  RocCurve roc;
  roc.auc = auc_score(labels, scores);
  auto cls = count_classes(labels);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(cls.pos), n = static_cast<double>(cls.neg);
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0, twice_area = 0;
  for (std::size_t i = 0; i < order.size();) {
    double threshold = scores[order[i]];
    std::uint64_t tp_prev = tp, fp_prev = fp;
    while (i < order.size() && scores[order[i]] == threshold) {
      (labels[order[i]] ? tp : fp)++;
      ++i;
    }
    twice_area += (fp - fp_prev) * (tp + tp_prev);
    roc.points.push_back({threshold, static_cast<double>(fp) / n, static_cast<double>(tp) / p});
  }
  roc.auc_trapezoid = static_cast<double>(twice_area) / (2.0 * p * n);
  return roc;
}

ordered_json to_json(const ConfusionCounts& c) {
  return ordered_json{{"TP", c.tp}, {"FP", c.fp}, {"TN", c.tn}, {"FN", c.fn}};
}

ordered_json to_json(const MetricsReport& m) {
  ordered_json j;
  j["PPV"] = m.ppv;
  j["NPV"] = m.npv;
  j["TPR"] = m.tpr;
  j["TNR"] = m.tnr;
  j["FPR"] = m.fpr;
  j["FNR"] = m.fnr;
  j["F1_engaged"] = m.f1_engaged;
  j["F1_disengaged"] = m.f1_disengaged;
  j["BA"] = m.ba;
  j["AUC"] = m.auc ? ordered_json(*m.auc) : ordered_json(nullptr);
  j["undefined"] = m.undefined;
  return j;
}

std::string roc_csv(const RocCurve& roc) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[64];
  auto put = [&](double v) {
    if (std::isinf(v)) {
      out += "inf";
      return;
    }
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
  };
  for (const auto& pt : roc.points) {
    put(pt.threshold);
    out += ',';
    put(pt.fpr);
    out += ',';
    put(pt.tpr);
    out += '\n';
  }
  return out;
}

CohortReport cohort_reports(std::span<const AttemptEventStream> streams,
                            std::span<const LogEvent> events, const SemesterCalendar& calendar,
                            const std::map<std::string, double>& grades, std::size_t rate_bins,
                            TimeZone tz) {
  CohortReport r;

  std::map<std::string, std::map<IsoWeek, std::size_t>> weeks;
  for (const auto& e : events) {
    if (e.component.kind != ComponentKind::Quiz) continue;
    const Semester* sem = calendar.find(e.timestamp);
    weeks[sem ? sem->tag : "unassigned"][iso_week(e.timestamp, tz)]++;
    r.event_counts[e.event]++;
  }
  for (auto& [tag, bins] : weeks) {
    auto& out = r.weekly_activity[tag];
    for (auto& [wk, count] : bins) out.push_back({wk.year, static_cast<int>(wk.week), count});
  }

  std::map<std::string, StudentEngagement> by_student;
  for (const auto& s : streams) {
    if (s.student_id.empty()) continue;
    auto& st = by_student[s.student_id];
    st.student_id = s.student_id;
    ++st.attempts;
    if (s.submitted) ++st.submitted;
  }
  for (auto& [id, st] : by_student) {
    st.submission_rate = st.attempts ? static_cast<double>(st.submitted) / static_cast<double>(st.attempts) : 0.0;
    if (auto g = grades.find(id); g != grades.end()) st.grade = g->second;
    r.students.push_back(st);
  }

  rate_bins = std::max<std::size_t>(rate_bins, 1);
  std::vector<GradeBin> bins(rate_bins);
  std::vector<double> grade_sum(rate_bins, 0.0), rate_sum(rate_bins, 0.0);
  for (std::size_t b = 0; b < rate_bins; ++b) {
    bins[b].rate_lo = static_cast<double>(b) / static_cast<double>(rate_bins);
    bins[b].rate_hi = static_cast<double>(b + 1) / static_cast<double>(rate_bins);
  }
  for (const auto& st : r.students) {
    if (!st.grade) continue;
    auto b = std::min(rate_bins - 1, static_cast<std::size_t>(st.submission_rate * static_cast<double>(rate_bins)));
    ++bins[b].students;
    grade_sum[b] += *st.grade;
    rate_sum[b] += st.submission_rate;
    r.grades_available = true;
  }
  if (r.grades_available) {
    for (std::size_t b = 0; b < rate_bins; ++b) {
      if (bins[b].students == 0) continue;
      bins[b].mean_grade = grade_sum[b] / static_cast<double>(bins[b].students);
      bins[b].mean_rate = rate_sum[b] / static_cast<double>(bins[b].students);
    }
    r.grade_bins = std::move(bins);
  }
  return r;
}

ordered_json to_json(const CohortReport& r) {
  ordered_json j;
  ordered_json weekly = ordered_json::object();
  for (const auto& [tag, bins] : r.weekly_activity) {
    ordered_json arr = ordered_json::array();
    for (const auto& b : bins) arr.push_back({{"year", b.iso_year}, {"week", b.iso_week}, {"count", b.count}});
    weekly[tag] = arr;
  }
  j["weekly_activity"] = weekly;
  j["event_counts"] = r.event_counts;
  j["grades_available"] = r.grades_available;
  ordered_json gb = ordered_json::array();
  for (const auto& b : r.grade_bins) {
    gb.push_back({{"rate_lo", b.rate_lo},
                  {"rate_hi", b.rate_hi},
                  {"students", b.students},
                  {"mean_rate", b.mean_rate},
                  {"mean_grade", b.mean_grade}});
  }
  j["grade_bins"] = gb;
  ordered_json students = ordered_json::array();
  for (const auto& s : r.students) {
    students.push_back({{"studentID", s.student_id},
                        {"attempts", s.attempts},
                        {"submitted", s.submitted},
                        {"submission_rate", s.submission_rate},
                        {"grade", s.grade ? ordered_json(*s.grade) : ordered_json(nullptr)}});
  }
  j["students"] = students;
  return j;
}

std::map<std::string, double> parse_grades_csv(std::string_view text) {
  std::map<std::string, double> out;
  auto rows = csv::parse(csv::strip_bom(text));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 2) continue;
    double v = 0;
    auto res = std::from_chars(row[1].data(), row[1].data() + row[1].size(), v);
    if (res.ec != std::errc()) {
      if (r == 0) continue;  // header
      throw Error(ErrorCode::InvalidConfig, "grades row " + std::to_string(r) + ": bad grade");
    }
    out[row[0]] = v;
  }
  return out;
}

}  // namespace qs
