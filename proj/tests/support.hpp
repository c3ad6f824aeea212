#pragma once

// Fixtures shared by the unit and acceptance suites.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "qs/ingest.hpp"
#include "qs/time.hpp"

namespace qs::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("qs-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// The worked attempt: E_start, E1, E2 on day 0; E3 on day 2; E4, E5 on day 4;
// E6 and the submit (E_end) on day 6. Day 0 is Monday 2018-10-01 UTC.
inline AttemptEventStream worked_attempt() {
  const Timestamp d0 = make_timestamp(2018, 10, 1, 9, 0, 0);
  const Timestamp day = kSecondsPerDay;
  AttemptEventStream s;
  s.attempt.quiz_id = "q1";
  s.attempt.course_id = "c1";
  s.attempt.attempt_id = "x";
  s.attempt.attempt_no = 1;
  s.attempt.start_time = d0;
  s.attempt.end_time = d0 + 6 * day + 3 * 3600;
  s.attempt.status = QuizStatus::Submitted;
  s.attempt.max_points = 10;
  s.attempt.points = 8;
  s.student_id = "s1";
  s.events = {
      {"E_start", d0},
      {"E1", d0 + 600},
      {"E2", d0 + 1800},
      {"E3", d0 + 2 * day + 3600},
      {"E4", d0 + 4 * day + 7200},
      {"E5", d0 + 4 * day + 9000},
      {"E6", d0 + 6 * day + 3600},
      {"submit", d0 + 6 * day + 3 * 3600},
  };
  s.submitted = true;
  s.submission_time = d0 + 6 * day + 3 * 3600;
  return s;
}

// Pairwise AUC: wins plus half ties over all positive-negative pairs, kept
// as an exact rational (numerator in half-units over the pair count).
struct PairCount {
  std::uint64_t half_wins = 0;
  std::uint64_t pairs = 0;
  double value() const { return static_cast<double>(half_wins) / (2.0 * static_cast<double>(pairs)); }
};

inline PairCount brute_force_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  PairCount c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      ++c.pairs;
      if (scores[i] > scores[j]) c.half_wins += 2;
      else if (scores[i] == scores[j]) c.half_wins += 1;
    }
  }
  return c;
}

inline std::vector<std::string> tags(const std::vector<TimedEvent>& events) {
  std::vector<std::string> out;
  for (const auto& e : events) out.push_back(e.tag);
  return out;
}

}  // namespace qs::test
