#include <algorithm>
#include <functional>
#include <map>

#include "doctest.h"
#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/features.hpp"
#include "qs/synth.hpp"
#include "support.hpp"

using namespace qs;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected qs::Error");
  return ErrorCode::Io;
}

CohortSpec small_spec(std::uint64_t seed, std::size_t students = 60) {
  CohortSpec s;
  s.seed = seed;
  s.student_count = students;
  return s;
}

std::vector<LabeledSample> samples_of(const Cohort& c) {
  auto join = join_attempt_events(c.attempts, c.events);
  SampleOptions opt;
  opt.calendar = c.calendar;
  return build_labeled_samples(join.streams, opt).samples;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("largest remainder allocation") {
    std::vector<double> p = {0.5, 0.2, 0.2, 0.1, 0.0};
    CHECK(allocate_counts(p, 100) == std::vector<std::size_t>{50, 20, 20, 10, 0});
    std::vector<double> thirds = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    CHECK(allocate_counts(thirds, 10) == std::vector<std::size_t>{4, 3, 3});
    std::vector<double> bad = {0.5, 0.6};
    CHECK(code_of([&] { allocate_counts(bad, 10); }) == ErrorCode::InvalidProportions);
    std::vector<double> negative = {1.2, -0.2};
    CHECK(code_of([&] { allocate_counts(negative, 10); }) == ErrorCode::InvalidProportions);
  }

  TEST_CASE("archetype counts follow the mix") {
    auto spec = small_spec(3, 100);
    spec.mix = {0.5, 0.2, 0.2, 0.1, 0.0};
    auto c = generate_cohort(spec);
    std::array<std::size_t, 5> counts{};
    for (const auto& s : c.students) ++counts[static_cast<std::size_t>(s.archetype)];
    CHECK(counts == std::array<std::size_t, 5>{50, 20, 20, 10, 0});
  }

  TEST_CASE("seed is mandatory and structure counts positive") {
    CohortSpec spec;
    CHECK(code_of([&] { generate_cohort(spec); }) == ErrorCode::InvalidConfig);
    spec.seed = 1;
    spec.quizzes_per_course = 0;
    CHECK(code_of([&] { generate_cohort(spec); }) == ErrorCode::InvalidConfig);
    spec = small_spec(1);
    spec.mix = {0.5, 0.5, 0.5, 0.0, 0.0};
    CHECK(code_of([&] { generate_cohort(spec); }) == ErrorCode::InvalidProportions);
  }

  TEST_CASE("archetype parameter validation") {
    for (auto a : kArchetypes) CHECK_NOTHROW(default_archetype(a).validate());
    auto cfg = default_archetype(Archetype::Delayed);
    cfg.day_gap_p = 0.9;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::InvalidConfig);
    auto reg = default_archetype(Archetype::EngagedRegular);
    reg.submit_probability = 1.5;
    CHECK(code_of([&] { reg.validate(); }) == ErrorCode::InvalidConfig);
    reg = default_archetype(Archetype::EngagedRegular);
    reg.session_events_mean = -1;
    CHECK(code_of([&] { reg.validate(); }) == ErrorCode::InvalidConfig);
  }

  TEST_CASE("fixed seed gives byte-identical files") {
    auto a = render_cohort(generate_cohort(small_spec(11)));
    auto b = render_cohort(generate_cohort(small_spec(11)));
    CHECK(a.quiz_csv == b.quiz_csv);
    CHECK(a.logs_csv == b.logs_csv);
    CHECK(a.truth_jsonl == b.truth_jsonl);
    CHECK(a.grades_csv == b.grades_csv);
    CHECK(a.semesters_csv == b.semesters_csv);
    auto c = render_cohort(generate_cohort(small_spec(12)));
    CHECK(c.logs_csv != a.logs_csv);
  }

  TEST_CASE("students are generated independently of cohort size") {
    // Per-student streams come from mix_seed(seed, index), so a prefix of
    // students keeps its attempts when more students are added, as long as
    // the archetype assignment is the same.
    auto spec = small_spec(5, 40);
    spec.mix = {1.0, 0.0, 0.0, 0.0, 0.0};
    auto small = generate_cohort(spec);
    spec.student_count = 80;
    auto big = generate_cohort(spec);
    std::vector<std::string> ids_small, ids_big;
    for (const auto& a : small.attempts) ids_small.push_back(a.attempt_id);
    for (const auto& a : big.attempts) ids_big.push_back(a.attempt_id);
    for (const auto& id : ids_small) CHECK(std::find(ids_big.begin(), ids_big.end(), id) != ids_big.end());
  }

  TEST_CASE("generated files pass ingest and join checks") {
    auto cohort = generate_cohort(small_spec(7, 80));
    auto files = render_cohort(cohort);
    auto quiz = parse_quiz_table(files.quiz_csv, TableFormat::Csv);
    auto logs = parse_log_table(files.logs_csv, TableFormat::Csv);
    CHECK(quiz.issues.empty());
    CHECK(logs.issues.empty());
    CHECK(quiz.attempts == cohort.attempts);
    CHECK(logs.events == cohort.events);
    auto join = join_attempt_events(quiz.attempts, logs.events);
    CHECK(join.report.dangling_events == 0);
    CHECK(join.report.course_mismatches.empty());
    CHECK(join.report.student_mismatches.empty());
    CHECK(join.report.early_event_attempts.empty());
    CHECK(std::is_sorted(cohort.events.begin(), cohort.events.end(),
                         [](const LogEvent& a, const LogEvent& b) { return a.timestamp < b.timestamp; }));
    auto cal = SemesterCalendar::parse_csv(files.semesters_csv);
    REQUIRE(cal.semesters().size() == 4);
    CHECK(cal.semesters()[0].tag == "2017F");
    auto grades = parse_grades_csv(files.grades_csv);
    CHECK(grades.size() == cohort.students.size());
    for (const auto& [id, g] : grades) CHECK((g >= 1.0 && g <= 6.0));
  }

  TEST_CASE("write_cohort puts five files on disk") {
    test::TempDir dir("synth");
    auto cohort = generate_cohort(small_spec(2, 10));
    write_cohort(cohort, dir.path());
    auto files = render_cohort(cohort);
    CHECK(read_file(dir / "quiz.csv") == files.quiz_csv);
    CHECK(read_file(dir / "logs.csv") == files.logs_csv);
    CHECK(read_file(dir / "truth.jsonl") == files.truth_jsonl);
    CHECK(std::filesystem::exists(dir / "grades.csv"));
    CHECK(std::filesystem::exists(dir / "semesters.csv"));
  }

  TEST_CASE("planted delays show up as inactivity") {
    auto reg = small_spec(4, 120);
    reg.mix = {1.0, 0.0, 0.0, 0.0, 0.0};
    auto reference = samples_of(generate_cohort(reg));
    std::vector<double> ref_inactive;
    // Compared on submission days, where the planted gaps are complete.
    for (const auto& s : reference) {
      if (s.label == Label::Engaged) ref_inactive.push_back(s.features[Feature::DaysInactive]);
    }
    std::sort(ref_inactive.begin(), ref_inactive.end());
    const double median = ref_inactive[ref_inactive.size() / 2];

    auto del = small_spec(4, 120);
    del.mix = {0.0, 0.0, 1.0, 0.0, 0.0};
    auto delayed = samples_of(generate_cohort(del));
    std::size_t above = 0, counted = 0;
    for (const auto& s : delayed) {
      if (s.label != Label::Engaged) continue;
      above += s.features[Feature::DaysInactive] > median;
      ++counted;
    }
    MESSAGE("regular median days_inactive " << median << ", delayed above it " << above << "/" << counted);
    CHECK(static_cast<double>(above) >= 0.9 * static_cast<double>(counted));
  }

  TEST_CASE("spec json") {
    auto j = nlohmann::json::parse(R"({"students": 40, "mix": {"delayed": 0.5, "engaged_regular": 0.5}, "seed": 3})");
    auto s = cohort_spec_from_json(j);
    CHECK(s.student_count == 40);
    CHECK(s.mix[2] == 0.5);
    CHECK(s.mix[0] == 0.5);
    CHECK(s.mix[1] == 0.0);
    CHECK(s.seed == 3u);
    auto back = cohort_spec_from_json(nlohmann::json::parse(to_json(s).dump()));
    CHECK(back.mix == s.mix);
    CHECK(back.seed == s.seed);
    CHECK(code_of([] { cohort_spec_from_json({{"mix", {{"lazy", 1.0}}}}); }) == ErrorCode::InvalidProportions);
    for (auto a : kArchetypes) CHECK(archetype_from_string(to_string(a)) == a);
    CHECK(archetype_from_string("Erratic-Delayed") == Archetype::ErraticDelayed);
  }

  TEST_CASE("truth rows carry archetypes and labels") {
    auto cohort = generate_cohort(small_spec(8, 40));
    std::map<std::string, Archetype> by_student;
    for (const auto& s : cohort.students) by_student[s.student_id] = s.archetype;
    for (const auto& t : cohort.truth) CHECK(by_student.at(t.student_id) == t.archetype);
    auto& first = cohort.students.front();
    CHECK(first.attempts >= first.submitted);
  }
}
