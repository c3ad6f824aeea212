#pragma once

// Seeded synthetic cohorts with planted behavioral archetypes.
//
// Each student belongs to one semester and one course, and attempts that
// course's quizzes after release. Per-student randomness comes from
// mix_seed(seed, student index), so students are generated independently.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qs/features.hpp"
#include "qs/ingest.hpp"
#include "qs/preprocess.hpp"

namespace qs {

enum class Archetype { EngagedRegular, Erratic, Delayed, Irregular, ErraticDelayed };
inline constexpr std::array<Archetype, 5> kArchetypes = {Archetype::EngagedRegular, Archetype::Erratic,
                                                         Archetype::Delayed, Archetype::Irregular,
                                                         Archetype::ErraticDelayed};
std::string_view to_string(Archetype a);
std::optional<Archetype> archetype_from_string(std::string_view name);

struct ArchetypeConfig {
  Archetype kind = Archetype::EngagedRegular;
  double attempt_probability = 0.9;  // per released quiz
  double retry_probability = 0.0;    // second attempt after a submission
  double submit_probability = 0.9;
  int release_delay_max = 3;  // days between release and start, uniform

  // A working session ends in a submit; a visit is a short look at the quiz.
  double session_events_mean = 16;
  double visit_events_mean = 2;
  double gap_log_mu = 4.8;  // in-session gaps ~ lognormal, seconds
  double gap_log_sigma = 0.6;

  // Days between consecutive active days: 1 + geometric(p).
  double day_gap_p = 1.0;
  double extra_visit_probability = 0.0;  // any visits before the working session
  int extra_visits_max = 1;              // 1..max visits when there are any
  std::size_t slot_count = 3;            // distinct period slots a student uses

  double score_mean = 0.8;  // submitted points / max points
  double score_sd = 0.1;

  // InvalidConfig on a probability outside [0,1] or a negative intensity.
  void validate() const;
};

ArchetypeConfig default_archetype(Archetype kind);

struct CohortSpec {
  std::size_t student_count = 100;
  std::array<double, 5> mix = {0.55, 0.15, 0.15, 0.10, 0.05};  // kArchetypes order
  int courses_per_semester = 2;
  int quizzes_per_course = 5;
  int quiz_interval_days = 14;
  int semester_weeks = 16;
  std::array<std::string, 4> semester_tags = {"2017F", "2018S", "2018F", "2019S"};
  std::optional<std::uint64_t> seed;  // required
  int horizon_days = kDefaultHorizonDays;
  std::array<ArchetypeConfig, 5> archetypes = {
      default_archetype(Archetype::EngagedRegular), default_archetype(Archetype::Erratic),
      default_archetype(Archetype::Delayed), default_archetype(Archetype::Irregular),
      default_archetype(Archetype::ErraticDelayed)};
};

// Recognized keys: students, mix (object by archetype name or 5-array),
// courses_per_semester, quizzes_per_course, quiz_interval_days,
// semester_weeks, semester_tags, seed, horizon_days.
CohortSpec cohort_spec_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const CohortSpec& spec);

// Largest-remainder allocation of n over the proportions (ties to the lower
// index). InvalidProportions unless every entry is in [0,1] and they sum to 1
// within 1e-9.
std::vector<std::size_t> allocate_counts(std::span<const double> proportions, std::size_t n);

struct TruthRow {
  std::string attempt_id;
  std::string student_id;
  Archetype archetype = Archetype::EngagedRegular;
  int date_rel = 0;
  Label label = Label::Disengaged;
};

struct StudentTruth {
  std::string student_id;
  Archetype archetype = Archetype::EngagedRegular;
  std::string semester;
  std::string course_id;
  std::size_t attempts = 0;
  std::size_t submitted = 0;
  double grade = 1.0;  // 1 (lowest) to 6 (highest)
};

struct Cohort {
  std::vector<QuizAttempt> attempts;
  std::vector<LogEvent> events;  // sorted by timestamp, then student
  std::vector<TruthRow> truth;   // one per attempt-day with events
  std::vector<StudentTruth> students;
  SemesterCalendar calendar;
};

// InvalidProportions for a bad mix; InvalidConfig without a seed or with a
// non-positive structure count.
Cohort generate_cohort(const CohortSpec& spec);

struct CohortFiles {
  std::string quiz_csv;
  std::string logs_csv;
  std::string truth_jsonl;
  std::string grades_csv;
  std::string semesters_csv;
};

CohortFiles render_cohort(const Cohort& cohort);

// Writes quiz.csv, logs.csv, truth.jsonl, grades.csv and semesters.csv.
void write_cohort(const Cohort& cohort, const std::filesystem::path& dir);

}  // namespace qs
