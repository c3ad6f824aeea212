#include "qs/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/random.hpp"

namespace qs {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr double kMaxPoints = 10.0;

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be in [0,1]");
  }
}

void check_non_negative(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be a finite non-negative value");
  }
}

std::string format_id(const char* fmt, std::size_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

// Hours per period slot: morning, afternoon, evening (kept before 22:00 so
// sessions stay on one calendar day).
int slot_hour(std::size_t period, Rng& rng) {
  switch (period) {
    case 0: return 6 + static_cast<int>(rng.below(6));
    case 1: return 12 + static_cast<int>(rng.below(6));
    default: return 18 + static_cast<int>(rng.below(4));
  }
}

struct AttemptDraft {
  QuizAttempt attempt;
  std::vector<LogEvent> events;
  bool submitted = false;
  Timestamp submit_time = 0;
};

class StudentSimulator {
 public:
  StudentSimulator(const ArchetypeConfig& cfg, std::uint64_t seed, std::string student_id, std::string course_id,
                   const Semester& semester)
      : cfg_(cfg), rng_(seed), sid_(std::move(student_id)), course_(std::move(course_id)), sem_(semester) {
    std::vector<std::size_t> periods = {0, 1, 2};
    rng_.shuffle(periods);
    const std::size_t n = std::clamp<std::size_t>(cfg_.slot_count, 1, 3);
    periods_.assign(periods.begin(), periods.begin() + static_cast<std::ptrdiff_t>(n));
  }

  // Events of one attempt starting on local day `start_day` (epoch day number).
  AttemptDraft attempt(std::string attempt_id, std::string quiz_id, int attempt_no, std::int64_t start_day) {
    AttemptDraft d;
    auto& a = d.attempt;
    a.quiz_id = std::move(quiz_id);
    a.course_id = course_;
    a.attempt_id = std::move(attempt_id);
    a.attempt_no = attempt_no;
    a.max_points = kMaxPoints;

    const std::int64_t last_day = local_day_number(sem_.end - 1, TimeZone{});
    const bool wants_submit = rng_.bernoulli(cfg_.submit_probability);
    std::vector<std::int64_t> visit_days;
    std::int64_t day = start_day;
    if (rng_.bernoulli(cfg_.extra_visit_probability)) {
      const int visits = 1 + static_cast<int>(rng_.below(static_cast<std::uint64_t>(std::max(1, cfg_.extra_visits_max))));
      for (int v = 0; v < visits; ++v) {
        if (v > 0) day += next_gap();
        visit_days.push_back(day);
      }
      day += next_gap();
    }
    std::optional<std::int64_t> session_day;
    if (wants_submit && day <= last_day) session_day = day;
    if (visit_days.empty() && !session_day) visit_days.push_back(start_day);

    Timestamp last = 0;
    for (auto vd : visit_days) {
      if (vd > last_day) break;
      const int n = 1 + static_cast<int>(rng_.geometric(1.0 / std::max(1.0, cfg_.visit_events_mean)));
      last = emit_day(d, vd, n, last);
    }
    if (session_day) {
      const int n = std::max(3, static_cast<int>(std::lround(rng_.normal(cfg_.session_events_mean,
                                                                         0.3 * cfg_.session_events_mean))));
      last = emit_day(d, *session_day, n, last);
      last += gap_seconds();
      push(d, "submit", last);
      d.submitted = true;
      d.submit_time = last;
      if (rng_.bernoulli(0.3)) push(d, "review", last + 60 + static_cast<Timestamp>(rng_.below(540)));
    }

    a.start_time = d.events.front().timestamp;
    if (d.submitted) {
      a.status = QuizStatus::Submitted;
      a.end_time = d.submit_time;
      const double frac = std::clamp(rng_.normal(cfg_.score_mean, cfg_.score_sd), 0.0, 1.0);
      a.points = std::round(frac * kMaxPoints * 10.0) / 10.0;
    }
    return d;
  }

  std::vector<LogEvent> module_events(std::int64_t first_day, std::int64_t last_day, double per_week) {
    std::vector<LogEvent> out;
    for (std::int64_t week = first_day; week <= last_day; week += 7) {
      const auto n = rng_.geometric(1.0 / (1.0 + per_week));
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::int64_t day = std::min(last_day, week + static_cast<std::int64_t>(rng_.below(7)));
        const Timestamp ts = day * kSecondsPerDay + slot_hour(periods_[rng_.below(periods_.size())], rng_) * 3600 +
                             static_cast<Timestamp>(rng_.below(3600));
        LogEvent e;
        e.student_id = sid_;
        e.course_id = course_;
        e.object_id = course_ + "-m" + std::to_string(1 + rng_.below(8));
        e.component = Component{ComponentKind::Module, {}};
        e.event = "view";
        e.timestamp = ts;
        e.origin = origin();
        out.push_back(std::move(e));
      }
    }
    return out;
  }

  Rng& rng() { return rng_; }

 private:
  std::int64_t next_gap() { return 1 + static_cast<std::int64_t>(rng_.geometric(cfg_.day_gap_p)); }

  Timestamp gap_seconds() {
    return std::max<Timestamp>(1, static_cast<Timestamp>(std::lround(rng_.lognormal(cfg_.gap_log_mu, cfg_.gap_log_sigma))));
  }

  Origin origin() { return rng_.bernoulli(0.8) ? Origin{OriginKind::Web, {}} : Origin{OriginKind::Mobile, {}}; }

  void push(AttemptDraft& d, const char* tag, Timestamp ts) {
    LogEvent e;
    e.student_id = sid_;
    e.course_id = course_;
    e.object_id = d.attempt.attempt_id;
    e.component = Component{ComponentKind::Quiz, {}};
    e.event = tag;
    e.timestamp = ts;
    e.origin = origin();
    d.events.push_back(std::move(e));
  }

  // n events on one day; the first is a view. Returns the last timestamp.
  Timestamp emit_day(AttemptDraft& d, std::int64_t day, int n, Timestamp after) {
    const std::size_t period = periods_[rng_.below(periods_.size())];
    Timestamp ts = day * kSecondsPerDay + slot_hour(period, rng_) * 3600 + static_cast<Timestamp>(rng_.below(3600));
    ts = std::max(ts, after + 1);
    push(d, "view", ts);
    for (int i = 1; i < n; ++i) {
      ts += gap_seconds();
      push(d, rng_.bernoulli(0.6) ? "answer" : "view", ts);
    }
    return ts;
  }

  const ArchetypeConfig& cfg_;
  Rng rng_;
  std::string sid_;
  std::string course_;
  Semester sem_;
  std::vector<std::size_t> periods_;
};

// Attempt-days per preprocessing semantics: up to the submit day, or up to
// min(horizon, days until semester end) without a submission.
void append_truth(const AttemptDraft& d, const StudentTruth& st, Timestamp semester_end, int horizon,
                  std::vector<TruthRow>& out) {
  const Timestamp start = d.attempt.start_time;
  std::int64_t last = 0;
  if (d.submitted) {
    last = calendar_days_between(start, d.submit_time, TimeZone{});
  } else {
    last = std::clamp<std::int64_t>(calendar_days_between(start, semester_end, TimeZone{}), 0, std::max(0, horizon));
  }
  for (std::int64_t day = 0; day <= last; ++day) {
    TruthRow r;
    r.attempt_id = d.attempt.attempt_id;
    r.student_id = st.student_id;
    r.archetype = st.archetype;
    r.date_rel = static_cast<int>(day);
    r.label = d.submitted && day == last ? Label::Engaged : Label::Disengaged;
    out.push_back(std::move(r));
  }
}

}  // namespace

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::EngagedRegular: return "engaged_regular";
    case Archetype::Erratic: return "erratic";
    case Archetype::Delayed: return "delayed";
    case Archetype::Irregular: return "irregular";
    case Archetype::ErraticDelayed: return "erratic_delayed";
  }
  return "?";
}

std::optional<Archetype> archetype_from_string(std::string_view name) {
  const auto key = lower(name);
  for (auto a : kArchetypes) {
    if (key == lower(to_string(a))) return a;
  }
  return std::nullopt;
}

void ArchetypeConfig::validate() const {
  check_probability(attempt_probability, "attempt_probability");
  check_probability(retry_probability, "retry_probability");
  check_probability(submit_probability, "submit_probability");
  check_probability(extra_visit_probability, "extra_visit_probability");
  if (!(day_gap_p > 0.0 && day_gap_p <= 1.0)) throw Error(ErrorCode::InvalidConfig, "day_gap_p must be in (0,1]");
  check_non_negative(session_events_mean, "session_events_mean");
  check_non_negative(visit_events_mean, "visit_events_mean");
  check_non_negative(gap_log_sigma, "gap_log_sigma");
  check_non_negative(score_sd, "score_sd");
  check_probability(score_mean, "score_mean");
  if (!std::isfinite(gap_log_mu)) throw Error(ErrorCode::InvalidConfig, "gap_log_mu must be finite");
  if (release_delay_max < 0 || extra_visits_max < 1 || slot_count < 1) {
    throw Error(ErrorCode::InvalidConfig, "archetype day and slot counts out of range");
  }
  // Engaged-regular students submit in one sitting; the others must carry
  // the behavior that names them.
  switch (kind) {
    case Archetype::EngagedRegular:
      if (submit_probability < 0.5) throw Error(ErrorCode::InvalidConfig, "engaged_regular submit_probability < 0.5");
      break;
    case Archetype::Delayed:
    case Archetype::ErraticDelayed:
      if (day_gap_p > 0.5) throw Error(ErrorCode::InvalidConfig, "delayed archetypes need day_gap_p <= 0.5");
      break;
    case Archetype::Erratic:
    case Archetype::Irregular:
      break;
  }
}

ArchetypeConfig default_archetype(Archetype kind) {
  ArchetypeConfig c;
  c.kind = kind;
  switch (kind) {
    case Archetype::EngagedRegular:
      c.attempt_probability = 0.95;
      c.retry_probability = 0.2;
      c.submit_probability = 0.97;
      c.release_delay_max = 3;
      c.session_events_mean = 18;
      c.visit_events_mean = 4;
      c.gap_log_mu = 4.5;
      c.gap_log_sigma = 0.5;
      c.day_gap_p = 0.8;
      c.extra_visit_probability = 0.1;
      c.extra_visits_max = 1;
      c.slot_count = 3;
      c.score_mean = 0.85;
      c.score_sd = 0.1;
      break;
    case Archetype::Erratic:
      c.attempt_probability = 0.85;
      c.submit_probability = 0.45;
      c.release_delay_max = 6;
      c.session_events_mean = 10;
      c.visit_events_mean = 2;
      c.gap_log_mu = 4.5;
      c.gap_log_sigma = 1.0;
      c.day_gap_p = 0.5;
      c.extra_visit_probability = 0.9;
      c.extra_visits_max = 4;
      c.slot_count = 1;
      c.score_mean = 0.6;
      c.score_sd = 0.15;
      break;
    case Archetype::Delayed:
      c.attempt_probability = 0.85;
      c.submit_probability = 0.6;
      c.release_delay_max = 5;
      c.session_events_mean = 16;
      c.visit_events_mean = 2;
      c.gap_log_mu = 4.5;
      c.gap_log_sigma = 0.6;
      c.day_gap_p = 0.1;
      c.extra_visit_probability = 1.0;
      c.extra_visits_max = 1;
      c.slot_count = 3;
      c.score_mean = 0.7;
      c.score_sd = 0.12;
      break;
    case Archetype::Irregular:
      c.attempt_probability = 0.9;
      c.submit_probability = 0.7;
      c.release_delay_max = 4;
      c.session_events_mean = 14;
      c.visit_events_mean = 4;
      c.gap_log_mu = 5.5;
      c.gap_log_sigma = 1.6;
      c.day_gap_p = 0.6;
      c.extra_visit_probability = 0.9;
      c.extra_visits_max = 4;
      c.slot_count = 3;
      c.score_mean = 0.7;
      c.score_sd = 0.15;
      break;
    case Archetype::ErraticDelayed:
      c.attempt_probability = 0.8;
      c.submit_probability = 0.3;
      c.release_delay_max = 6;
      c.session_events_mean = 8;
      c.visit_events_mean = 1.5;
      c.gap_log_mu = 4.5;
      c.gap_log_sigma = 1.0;
      c.day_gap_p = 0.12;
      c.extra_visit_probability = 1.0;
      c.extra_visits_max = 2;
      c.slot_count = 1;
      c.score_mean = 0.5;
      c.score_sd = 0.15;
      break;
  }
  return c;
}

std::vector<std::size_t> allocate_counts(std::span<const double> proportions, std::size_t n) {
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidProportions, "proportion outside [0,1]");
    sum += p;
  }
  if (proportions.empty() || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidProportions, "proportions must sum to 1");
  }
  std::vector<std::size_t> counts(proportions.size());
  std::vector<double> remainder(proportions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < proportions.size(); ++i) {
    const double exact = proportions[i] * static_cast<double>(n);
    // Snap values within rounding noise of an integer (0.1 * 100 = 10.000000000000002).
    double whole = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0, exact - whole);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(proportions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % order.size()) {
    ++counts[order[k]];
    ++assigned;
  }
  while (assigned > n) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  return counts;
}

CohortSpec cohort_spec_from_json(const json& j) {
  CohortSpec s;
  try {
    if (j.contains("students")) s.student_count = j["students"].get<std::size_t>();
    if (j.contains("mix")) {
      const auto& m = j["mix"];
      if (m.is_array()) {
        if (m.size() != 5) throw Error(ErrorCode::InvalidProportions, "mix needs five proportions");
        for (std::size_t i = 0; i < 5; ++i) s.mix[i] = m[i].get<double>();
      } else {
        s.mix.fill(0.0);
        for (auto it = m.begin(); it != m.end(); ++it) {
          auto a = archetype_from_string(it.key());
          if (!a) throw Error(ErrorCode::InvalidProportions, "unknown archetype '" + it.key() + "'");
          s.mix[static_cast<std::size_t>(*a)] = it.value().get<double>();
        }
      }
    }
    if (j.contains("courses_per_semester")) s.courses_per_semester = j["courses_per_semester"].get<int>();
    if (j.contains("quizzes_per_course")) s.quizzes_per_course = j["quizzes_per_course"].get<int>();
    if (j.contains("quiz_interval_days")) s.quiz_interval_days = j["quiz_interval_days"].get<int>();
    if (j.contains("semester_weeks")) s.semester_weeks = j["semester_weeks"].get<int>();
    if (j.contains("semester_tags")) {
      auto tags = j["semester_tags"].get<std::vector<std::string>>();
      if (tags.size() != 4) throw Error(ErrorCode::InvalidConfig, "semester_tags needs four entries");
      std::copy(tags.begin(), tags.end(), s.semester_tags.begin());
    }
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("horizon_days")) s.horizon_days = j["horizon_days"].get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad synth config: ") + e.what());
  }
  return s;
}

ordered_json to_json(const CohortSpec& s) {
  ordered_json j;
  j["students"] = s.student_count;
  ordered_json mix;
  for (std::size_t i = 0; i < 5; ++i) mix[std::string(to_string(kArchetypes[i]))] = s.mix[i];
  j["mix"] = mix;
  j["courses_per_semester"] = s.courses_per_semester;
  j["quizzes_per_course"] = s.quizzes_per_course;
  j["quiz_interval_days"] = s.quiz_interval_days;
  j["semester_weeks"] = s.semester_weeks;
  j["semester_tags"] = s.semester_tags;
  if (s.seed) j["seed"] = *s.seed;
  j["horizon_days"] = s.horizon_days;
  return j;
}

Cohort generate_cohort(const CohortSpec& spec) {
  if (!spec.seed) throw Error(ErrorCode::InvalidConfig, "synthetic cohort needs a seed");
  const auto counts = allocate_counts(spec.mix, spec.student_count);
  if (spec.courses_per_semester < 1 || spec.quizzes_per_course < 1 || spec.quiz_interval_days < 1 ||
      spec.semester_weeks < 1 || spec.horizon_days < 0) {
    throw Error(ErrorCode::InvalidConfig, "cohort structure counts must be positive");
  }
  for (const auto& a : spec.archetypes) a.validate();

  // Semester starts on Mondays, autumn then spring.
  const std::array<Timestamp, 4> starts = {make_timestamp(2017, 10, 2), make_timestamp(2018, 3, 5),
                                           make_timestamp(2018, 10, 1), make_timestamp(2019, 3, 4)};
  std::vector<Semester> semesters;
  for (std::size_t i = 0; i < 4; ++i) {
    semesters.push_back({spec.semester_tags[i], starts[i], starts[i] + spec.semester_weeks * 7 * kSecondsPerDay});
  }

  std::vector<Archetype> assignment;
  for (std::size_t k = 0; k < counts.size(); ++k) assignment.insert(assignment.end(), counts[k], kArchetypes[k]);
  Rng order_rng(mix_seed(*spec.seed, 0x5EED0000ull));
  order_rng.shuffle(assignment);

  Cohort cohort;
  cohort.calendar = SemesterCalendar(semesters);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const Archetype arch = assignment[i];
    const auto& cfg = spec.archetypes[static_cast<std::size_t>(arch)];
    const std::size_t sem_index = i % 4;
    const std::size_t course_index = (i / 4) % static_cast<std::size_t>(spec.courses_per_semester);
    const Semester& sem = semesters[sem_index];

    StudentTruth st;
    st.student_id = format_id("s%05zu", i + 1);
    st.archetype = arch;
    st.semester = sem.tag;
    st.course_id = "c" + std::to_string(sem_index + 1) + "-" + std::to_string(course_index + 1);

    StudentSimulator sim(cfg, mix_seed(*spec.seed, i), st.student_id, st.course_id, sem);
    const std::int64_t first_day = local_day_number(sem.start, TimeZone{});
    const std::int64_t last_day = local_day_number(sem.end - 1, TimeZone{});
    std::size_t attempt_seq = 0;
    std::size_t quizzes_submitted = 0;
    for (int q = 0; q < spec.quizzes_per_course; ++q) {
      const std::int64_t release = first_day + 3 + static_cast<std::int64_t>(q) * spec.quiz_interval_days;
      if (release > last_day) break;
      if (!sim.rng().bernoulli(cfg.attempt_probability)) continue;
      const std::string quiz_id = st.course_id + "-q" + std::to_string(q + 1);
      std::int64_t start = release + static_cast<std::int64_t>(sim.rng().below(cfg.release_delay_max + 1));
      bool any_submit = false;
      for (int attempt_no = 1; start <= last_day; ++attempt_no) {
        auto draft = sim.attempt(st.student_id + "-a" + std::to_string(++attempt_seq), quiz_id, attempt_no, start);
        append_truth(draft, st, sem.end, spec.horizon_days, cohort.truth);
        ++st.attempts;
        const bool submitted = draft.submitted;
        const Timestamp submit_time = draft.submit_time;
        cohort.attempts.push_back(std::move(draft.attempt));
        cohort.events.insert(cohort.events.end(), std::make_move_iterator(draft.events.begin()),
                             std::make_move_iterator(draft.events.end()));
        if (!submitted) break;
        ++st.submitted;
        any_submit = true;
        if (!sim.rng().bernoulli(cfg.retry_probability)) break;
        start = local_day_number(submit_time, TimeZone{}) + 1 + static_cast<std::int64_t>(sim.rng().below(3));
      }
      if (any_submit) ++quizzes_submitted;
    }
    const double rate = static_cast<double>(quizzes_submitted) / spec.quizzes_per_course;
    auto modules = sim.module_events(first_day, last_day, 1.0 + 3.0 * rate);
    cohort.events.insert(cohort.events.end(), modules.begin(), modules.end());
    const double grade = std::clamp(1.0 + 5.0 * rate + sim.rng().normal(0.0, 0.5), 1.0, 6.0);
    st.grade = std::round(grade * 10.0) / 10.0;
    cohort.students.push_back(std::move(st));
  }
  std::stable_sort(cohort.events.begin(), cohort.events.end(), [](const LogEvent& a, const LogEvent& b) {
    if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
    return a.student_id < b.student_id;
  });
  return cohort;
}

CohortFiles render_cohort(const Cohort& cohort) {
  CohortFiles f;
  f.quiz_csv = write_quiz_table(cohort.attempts, TableFormat::Csv);
  f.logs_csv = write_log_table(cohort.events, TableFormat::Csv);
  for (const auto& t : cohort.truth) {
    ordered_json j;
    j["attemptID"] = t.attempt_id;
    j["studentID"] = t.student_id;
    j["archetype"] = to_string(t.archetype);
    j["dateRel"] = t.date_rel;
    j["label"] = to_string(t.label);
    f.truth_jsonl += j.dump() + "\n";
  }
  f.grades_csv = "studentID,grade\n";
  char buf[32];
  for (const auto& s : cohort.students) {
    std::snprintf(buf, sizeof buf, "%.1f", s.grade);
    f.grades_csv += s.student_id + "," + buf + "\n";
  }
  f.semesters_csv = cohort.calendar.to_csv();
  return f;
}

void write_cohort(const Cohort& cohort, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
  const auto files = render_cohort(cohort);
  write_file(dir / "quiz.csv", files.quiz_csv);
  write_file(dir / "logs.csv", files.logs_csv);
  write_file(dir / "truth.jsonl", files.truth_jsonl);
  write_file(dir / "grades.csv", files.grades_csv);
  write_file(dir / "semesters.csv", files.semesters_csv);
}

}  // namespace qs
