#include "qs/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "qs/csv.hpp"
#include "qs/digest.hpp"

namespace qs {
namespace {

using nlohmann::json;

std::string normalize_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '_' || c == '-' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct ColumnSpec {
  std::string_view canonical;
  std::vector<std::string_view> aliases;  // normalized form
};

const std::vector<ColumnSpec>& quiz_columns() {
  static const std::vector<ColumnSpec> cols = {
      {"quizID", {"quizid", "quiz"}},
      {"courseID", {"courseid", "course"}},
      {"attemptID", {"attemptid", "attempt", "id"}},
      {"attemptNo", {"attemptno", "attemptnumber", "attemptnr"}},
      {"startTime", {"starttime", "timestart"}},
      {"endTime", {"endtime", "timefinish"}},
      {"quizStatus", {"quizstatus", "state", "status"}},
      {"maxPoints", {"maxpoints", "maxgrade", "sumgradesmax"}},
      {"points", {"points", "sumgrades", "grade"}},
  };
  return cols;
}

const std::vector<ColumnSpec>& log_columns() {
  static const std::vector<ColumnSpec> cols = {
      {"studentID", {"studentid", "userid", "user", "relateduserid"}},
      {"courseID", {"courseid", "course"}},
      {"objectID", {"objectid", "contextinstanceid"}},
      {"component", {"component"}},
      {"event", {"event", "eventname", "action"}},
      {"timestamp", {"timestamp", "timecreated", "time"}},
      {"origin", {"origin", "platform"}},
  };
  return cols;
}

std::optional<std::size_t> column_index(const std::vector<ColumnSpec>& cols,
                                        std::string_view raw_name) {
  auto n = normalize_name(raw_name);
  for (std::size_t i = 0; i < cols.size(); ++i) {
    for (auto alias : cols[i].aliases) {
      if (alias == n) return i;
    }
  }
  return std::nullopt;
}

// One generic row: value per canonical column, nullopt when absent/empty.
using GenericRow = std::vector<std::optional<std::string>>;

std::string json_scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

std::string_view check_text(std::string_view source) {
  source = csv::strip_bom(source);
  if (!csv::is_valid_utf8(source)) throw Error(ErrorCode::EncodingError, "input is not valid UTF-8");
  return source;
}

std::vector<GenericRow> read_generic(std::string_view source, TableFormat format,
                                     const std::vector<ColumnSpec>& cols) {
  source = check_text(source);
  std::vector<GenericRow> rows;
  if (format == TableFormat::Csv) {
    auto table = csv::parse(source);
    if (table.empty()) {
      throw Error(ErrorCode::MissingColumn, std::string(cols.front().canonical) + " (no header)");
    }
    std::vector<std::optional<std::size_t>> mapping(table.front().size());
    std::vector<bool> seen(cols.size(), false);
    for (std::size_t i = 0; i < table.front().size(); ++i) {
      mapping[i] = column_index(cols, table.front()[i]);
      if (mapping[i]) {
        if (seen[*mapping[i]]) mapping[i].reset();  // first occurrence wins
        else seen[*mapping[i]] = true;
      }
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!seen[c]) throw Error(ErrorCode::MissingColumn, std::string(cols[c].canonical));
    }
    for (std::size_t r = 1; r < table.size(); ++r) {
      const auto& raw = table[r];
      if (raw.size() == 1 && raw[0].empty()) continue;  // blank line
      GenericRow row(cols.size());
      for (std::size_t i = 0; i < raw.size() && i < mapping.size(); ++i) {
        if (mapping[i] && !raw[i].empty()) row[*mapping[i]] = raw[i];
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }

  std::vector<bool> seen(cols.size(), false);
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < source.size()) {
    std::size_t end = source.find('\n', start);
    if (end == std::string_view::npos) end = source.size();
    std::string_view line = source.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::EncodingError, "JSONL line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::EncodingError, "JSONL line " + std::to_string(line_no) + " is not an object");
    }
    GenericRow row(cols.size());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      auto idx = column_index(cols, it.key());
      if (!idx) continue;
      seen[*idx] = true;
      if (it->is_null()) continue;
      auto text = json_scalar_to_string(*it);
      if (!text.empty()) row[*idx] = std::move(text);
    }
    rows.push_back(std::move(row));
  }
  if (!rows.empty()) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (!seen[c]) throw Error(ErrorCode::MissingColumn, std::string(cols[c].canonical));
    }
  }
  return rows;
}

std::optional<double> parse_decimal(std::string_view s) {
  std::string buf(s);
  char* end = nullptr;
  double v = std::strtod(buf.c_str(), &end);
  if (end == buf.c_str() || *end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    auto d = parse_decimal(s);
    if (d && *d == std::floor(*d) && std::abs(*d) < 1e9) return static_cast<int>(*d);
    return std::nullopt;
  }
  return v;
}

std::optional<QuizStatus> parse_status(std::string_view s) {
  auto n = normalize_name(s);
  if (n == "submitted" || n == "finished" || n == "complete" || n == "completed") {
    return QuizStatus::Submitted;
  }
  if (n == "inprogress" || n == "inprog" || n == "started" || n == "overdue" ||
      n == "abandoned") {
    return QuizStatus::InProgress;
  }
  return std::nullopt;
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

struct RowFailure {
  ErrorCode code;
  std::string reason;
};

}  // namespace

std::optional<TableFormat> format_for_path(const std::filesystem::path& path) {
  auto ext = lower(path.extension().string());
  if (ext == ".csv") return TableFormat::Csv;
  if (ext == ".jsonl" || ext == ".ndjson") return TableFormat::Jsonl;
  return std::nullopt;
}

Component parse_component(std::string_view raw) {
  auto n = normalize_name(raw);
  if (n == "quiz" || n == "modquiz") return {ComponentKind::Quiz, {}};
  if (n == "module" || n == "coursemodule") return {ComponentKind::Module, {}};
  return {ComponentKind::Other, std::string(raw)};
}

Origin parse_origin(std::string_view raw) {
  auto n = normalize_name(raw);
  if (n == "web") return {OriginKind::Web, {}};
  if (n == "mobile" || n == "ws") return {OriginKind::Mobile, {}};
  return {OriginKind::Other, std::string(raw)};
}

std::string to_string(const Component& c) {
  switch (c.kind) {
    case ComponentKind::Quiz: return "quiz";
    case ComponentKind::Module: return "module";
    case ComponentKind::Other: return c.other;
  }
  return c.other;
}

std::string to_string(const Origin& o) {
  switch (o.kind) {
    case OriginKind::Web: return "web";
    case OriginKind::Mobile: return "mobile";
    case OriginKind::Other: return o.other;
  }
  return o.other;
}

std::string_view to_string(QuizStatus s) {
  return s == QuizStatus::Submitted ? "submitted" : "inprogress";
}

QuizTable parse_quiz_table(std::string_view source, TableFormat format) {
  const auto& cols = quiz_columns();
  auto rows = read_generic(source, format, cols);
  QuizTable out;
  std::unordered_set<std::string> ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto fail = [&](ErrorCode code, std::string reason) {
      out.issues.push_back(RowIssue{r + 1, code, std::move(reason)});
    };
    QuizAttempt a;
    if (!row[2]) {
      fail(ErrorCode::RowInvariantViolation, "attemptID is empty");
      continue;
    }
    a.quiz_id = row[0].value_or("");
    a.course_id = row[1].value_or("");
    a.attempt_id = *row[2];

    auto attempt_no = row[3] ? parse_int(*row[3]) : std::nullopt;
    if (!attempt_no || *attempt_no < 1) {
      fail(ErrorCode::RowInvariantViolation, "attemptNo must be a positive integer");
      continue;
    }
    a.attempt_no = *attempt_no;

    auto start = row[4] ? parse_timestamp(*row[4]) : std::nullopt;
    if (!start) {
      fail(ErrorCode::TimestampParseError, "startTime '" + row[4].value_or("") + "'");
      continue;
    }
    a.start_time = *start;
    if (row[5]) {
      auto end = parse_timestamp(*row[5]);
      if (!end) {
        fail(ErrorCode::TimestampParseError, "endTime '" + *row[5] + "'");
        continue;
      }
      a.end_time = *end;
    }

    auto status = row[6] ? parse_status(*row[6]) : std::nullopt;
    if (!status) {
      fail(ErrorCode::RowInvariantViolation, "unknown quizStatus '" + row[6].value_or("") + "'");
      continue;
    }
    a.status = *status;

    auto max_points = row[7] ? parse_decimal(*row[7]) : std::nullopt;
    if (!max_points || *max_points < 0) {
      fail(ErrorCode::RowInvariantViolation, "maxPoints must be a non-negative decimal");
      continue;
    }
    a.max_points = *max_points;
    if (row[8]) {
      auto points = parse_decimal(*row[8]);
      if (!points || *points < 0) {
        fail(ErrorCode::RowInvariantViolation, "points must be a non-negative decimal");
        continue;
      }
      if (*points > a.max_points) {
        fail(ErrorCode::RowInvariantViolation, "points exceed maxPoints");
        continue;
      }
      a.points = *points;
    }

    if (a.status == QuizStatus::Submitted) {
      if (!a.end_time) {
        fail(ErrorCode::RowInvariantViolation, "submitted attempt without endTime");
        continue;
      }
      if (*a.end_time < a.start_time) {
        fail(ErrorCode::RowInvariantViolation, "endTime before startTime");
        continue;
      }
    }
    if (!ids.insert(a.attempt_id).second) {
      fail(ErrorCode::RowInvariantViolation, "duplicate attemptID '" + a.attempt_id + "'");
      continue;
    }
    out.attempts.push_back(std::move(a));
  }
  return out;
}

LogTable parse_log_table(std::string_view source, TableFormat format) {
  const auto& cols = log_columns();
  auto rows = read_generic(source, format, cols);
  LogTable out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto ts = row[5] ? parse_timestamp(*row[5]) : std::nullopt;
    if (!ts) {
      out.issues.push_back(
          RowIssue{r + 1, ErrorCode::TimestampParseError, "timestamp '" + row[5].value_or("") + "'"});
      continue;
    }
    LogEvent e;
    e.student_id = row[0].value_or("");
    e.course_id = row[1].value_or("");
    e.object_id = row[2].value_or("");
    e.component = parse_component(row[3].value_or(""));
    e.event = row[4].value_or("");
    e.timestamp = *ts;
    e.origin = parse_origin(row[6].value_or(""));
    out.events.push_back(std::move(e));
  }
  return out;
}

QuizTable read_quiz_file(const std::filesystem::path& path) {
  auto fmt = format_for_path(path);
  if (!fmt) throw Error(ErrorCode::Io, "unsupported quiz table extension: " + path.string());
  return parse_quiz_table(read_file(path), *fmt);
}

LogTable read_log_file(const std::filesystem::path& path) {
  auto fmt = format_for_path(path);
  if (!fmt) throw Error(ErrorCode::Io, "unsupported log table extension: " + path.string());
  return parse_log_table(read_file(path), *fmt);
}

std::string write_quiz_table(std::span<const QuizAttempt> attempts, TableFormat format) {
  std::string out;
  if (format == TableFormat::Csv) {
    std::vector<std::string> header;
    for (const auto& c : quiz_columns()) header.emplace_back(c.canonical);
    out += csv::format_row(header);
    for (const auto& a : attempts) {
      std::vector<std::string> f = {
          a.quiz_id,
          a.course_id,
          a.attempt_id,
          std::to_string(a.attempt_no),
          std::to_string(a.start_time),
          a.end_time ? std::to_string(*a.end_time) : std::string(),
          std::string(to_string(a.status)),
          format_double(a.max_points),
          a.points ? format_double(*a.points) : std::string(),
      };
      out += csv::format_row(f);
    }
    return out;
  }
  for (const auto& a : attempts) {
    json j = json::object();
    j["quizID"] = a.quiz_id;
    j["courseID"] = a.course_id;
    j["attemptID"] = a.attempt_id;
    j["attemptNo"] = a.attempt_no;
    j["startTime"] = a.start_time;
    j["endTime"] = a.end_time ? json(*a.end_time) : json(nullptr);
    j["quizStatus"] = to_string(a.status);
    j["maxPoints"] = a.max_points;
    j["points"] = a.points ? json(*a.points) : json(nullptr);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::string write_log_table(std::span<const LogEvent> events, TableFormat format) {
  std::string out;
  if (format == TableFormat::Csv) {
    std::vector<std::string> header;
    for (const auto& c : log_columns()) header.emplace_back(c.canonical);
    out += csv::format_row(header);
    for (const auto& e : events) {
      std::vector<std::string> f = {e.student_id,          e.course_id, e.object_id,
                                    to_string(e.component), e.event,    std::to_string(e.timestamp),
                                    to_string(e.origin)};
      out += csv::format_row(f);
    }
    return out;
  }
  for (const auto& e : events) {
    json j = json::object();
    j["studentID"] = e.student_id;
    j["courseID"] = e.course_id;
    j["objectID"] = e.object_id;
    j["component"] = to_string(e.component);
    j["event"] = e.event;
    j["timestamp"] = e.timestamp;
    j["origin"] = to_string(e.origin);
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

bool is_submit_tag(std::string_view tag) {
  auto n = normalize_name(tag);
  return n == "submit" || n == "submitted" || n == "submission" || n == "attemptsubmitted";
}

JoinResult join_attempt_events(std::span<const QuizAttempt> attempts,
                               std::span<const LogEvent> logs) {
  JoinResult result;
  std::unordered_map<std::string_view, std::size_t> by_id;
  by_id.reserve(attempts.size());
  result.streams.resize(attempts.size());
  for (std::size_t i = 0; i < attempts.size(); ++i) {
    by_id.emplace(attempts[i].attempt_id, i);
    auto& s = result.streams[i];
    s.attempt = attempts[i];
    s.submitted = attempts[i].status == QuizStatus::Submitted;
  }

  // (stream, log index)
  std::vector<std::vector<std::size_t>> matched(attempts.size());
  for (std::size_t li = 0; li < logs.size(); ++li) {
    const auto& e = logs[li];
    if (e.component.kind != ComponentKind::Quiz) {
      ++result.report.non_quiz_events;
      continue;
    }
    auto it = by_id.find(e.object_id);
    if (it == by_id.end()) {
      ++result.report.dangling_events;
      continue;
    }
    matched[it->second].push_back(li);
    ++result.report.matched_events;
  }

  for (std::size_t i = 0; i < attempts.size(); ++i) {
    auto& s = result.streams[i];
    auto& idx = matched[i];
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = logs[a];
      const auto& eb = logs[b];
      if (ea.timestamp != eb.timestamp) return ea.timestamp < eb.timestamp;
      if (ea.event != eb.event) return ea.event < eb.event;
      return a < b;
    });
    bool course_mismatch = false;
    bool student_mismatch = false;
    bool early = false;
    for (std::size_t li : idx) {
      const auto& e = logs[li];
      s.events.push_back(TimedEvent{e.event, e.timestamp});
      if (s.student_id.empty()) {
        s.student_id = e.student_id;
      } else if (e.student_id != s.student_id) {
        student_mismatch = true;
      }
      if (!e.course_id.empty() && e.course_id != s.attempt.course_id) course_mismatch = true;
      if (e.timestamp < s.attempt.start_time - kClockSkewTolerance) early = true;
    }
    if (idx.empty()) result.report.attempts_without_events.push_back(s.attempt.attempt_id);
    if (course_mismatch) result.report.course_mismatches.push_back(s.attempt.attempt_id);
    if (student_mismatch) result.report.student_mismatches.push_back(s.attempt.attempt_id);
    if (early) result.report.early_event_attempts.push_back(s.attempt.attempt_id);

    if (s.submitted) {
      auto sub = std::find_if(s.events.begin(), s.events.end(),
                              [](const TimedEvent& e) { return is_submit_tag(e.tag); });
      s.submission_time = sub != s.events.end() ? std::optional<Timestamp>(sub->time)
                                                : s.attempt.end_time;
    }
  }
  return result;
}

}  // namespace qs
