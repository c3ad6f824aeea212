#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <thread>

#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/explain.hpp"
#include "qs/features.hpp"
#include "qs/service.hpp"
#include "qs/synth.hpp"

// After Eigen: resolv.h defines _res, which Eigen uses as a parameter name.
#include "httplib.h"

namespace qs {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Routing failures that have no library error code.
struct HttpError {
  int status;
  std::string code;
  std::string message;
};

ApiResponse respond(int status, const ordered_json& body) { return {status, body.dump() + "\n", "application/json"}; }

ApiResponse error_body(int status, std::string_view code, std::string_view message,
                       const std::string& stage = {}) {
  ordered_json e;
  e["code"] = code;
  e["message"] = message;
  if (!stage.empty()) e["stage"] = stage;
  return respond(status, {{"error", e}});
}

int http_status(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownSnapshot:
    case ErrorCode::UnknownPlan:
      return 404;
    case ErrorCode::InvalidTransition:
      return 409;
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidProportions:
    case ErrorCode::Serialization:
    case ErrorCode::InvalidHyperparameter:
      return 400;
    default:
      return 500;
  }
}

std::vector<std::string> segments(std::string_view path) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto slash = path.find('/', pos);
    if (slash == std::string_view::npos) slash = path.size();
    if (slash > pos) out.emplace_back(path.substr(pos, slash - pos));
    pos = slash + 1;
  }
  return out;
}

json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw HttpError{400, "BadRequest", std::string("request body is not JSON: ") + e.what()};
  }
}

std::vector<json> jsonl_rows(const std::string& text) {
  std::vector<json> rows;
  for (const auto& line : split_lines(text)) rows.push_back(json::parse(line));
  return rows;
}

std::vector<ordered_json> ordered_rows(const std::string& text) {
  std::vector<ordered_json> rows;
  for (const auto& line : split_lines(text)) rows.push_back(ordered_json::parse(line));
  return rows;
}

std::string query(const ApiRequest& r, const std::string& key) {
  auto it = r.query.find(key);
  return it == r.query.end() ? std::string() : it->second;
}

Timestamp now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
      .count();
}

struct Job {
  std::string state = "queued";  // queued, running, succeeded, failed
  std::string stage;
  std::string snapshot_id;
  bool reused = false;
  std::optional<ordered_json> error;
};

}  // namespace

struct Api::Jobs {
  std::mutex mu;
  std::condition_variable idle;
  std::map<std::string, Job> jobs;
  std::size_t next = 0;
  std::size_t active = 0;
  std::mutex run_mu;  // one pipeline at a time
  std::vector<std::thread> threads;
};

Api::Api(SnapshotStore store, ApiOptions options)
    : store_(std::move(store)), options_(std::move(options)), jobs_(std::make_unique<Jobs>()) {}

Api::~Api() {
  wait_idle();
  for (auto& t : jobs_->threads) {
    if (t.joinable()) t.join();
  }
}

void Api::wait_idle() {
  std::unique_lock lock(jobs_->mu);
  jobs_->idle.wait(lock, [&] { return jobs_->active == 0; });
}

ApiResponse Api::handle(const ApiRequest& req) {
  if (!options_.token.empty() && req.authorization != "Bearer " + options_.token) {
    return error_body(401, "Unauthorized", "missing or wrong API token");
  }
  const auto seg = segments(req.path);
  const auto& m = req.method;
  auto is = [&](std::initializer_list<const char*> pattern) {
    if (seg.size() != pattern.size()) return false;
    std::size_t i = 0;
    for (const char* p : pattern) {
      if (std::string_view(p) != "*" && seg[i] != p) return false;
      ++i;
    }
    return true;
  };
  auto snapshot = [&](std::string id) {
    if (id.empty() || id == "latest") {
      auto latest = store_.latest();
      if (!latest) throw Error(ErrorCode::UnknownSnapshot, "the store has no snapshots yet");
      id = *latest;
    }
    if (!store_.exists(id)) throw Error(ErrorCode::UnknownSnapshot, "no snapshot '" + id + "'");
    return id;
  };

  try {
    if (seg.empty() || seg[0] != "v1") throw HttpError{404, "NotFound", "unknown path " + req.path};

    if (m == "GET" && is({"v1", "snapshots"})) {
      ordered_json list = ordered_json::array();
      for (const auto& id : store_.list()) {
        if (store_.exists(id)) list.push_back(store_.manifest(id).to_json());
      }
      return respond(200, {{"snapshots", list}});
    }

    if (m == "POST" && is({"v1", "pipeline", "run"})) {
      const auto cfg = pipeline_config_from_json(parse_body(req.body), options_.base_dir);
      std::lock_guard jobs_lock(jobs_->mu);
      const std::string job_id = "job-" + std::to_string(++jobs_->next);
      jobs_->jobs[job_id] = Job{};
      ++jobs_->active;
      jobs_->threads.emplace_back([this, cfg, job_id] {
        std::lock_guard run(jobs_->run_mu);
        auto update = [&](auto&& fn) {
          std::lock_guard lock(jobs_->mu);
          fn(jobs_->jobs[job_id]);
        };
        update([](Job& j) { j.state = "running"; });
        try {
          auto result = run_pipeline(cfg, store_, [&](std::string_view stage) {
            update([&](Job& j) { j.stage = std::string(stage); });
          });
          update([&](Job& j) {
            j.state = "succeeded";
            j.snapshot_id = result.manifest.snapshot_id;
            j.reused = result.reused;
          });
        } catch (const StageError& e) {
          update([&](Job& j) {
            j.state = "failed";
            j.error = ordered_json{{"code", to_string(e.code())}, {"stage", e.stage()}, {"message", e.what()}};
          });
        } catch (const std::exception& e) {
          update([&](Job& j) {
            j.state = "failed";
            j.error = ordered_json{{"code", "Internal"}, {"message", e.what()}};
          });
        }
        std::lock_guard lock(jobs_->mu);
        --jobs_->active;
        jobs_->idle.notify_all();
      });
      return respond(202, {{"job_id", job_id},
                           {"state", "queued"},
                           {"status_url", "/v1/pipeline/" + job_id + "/status"}});
    }

    if (m == "GET" && is({"v1", "pipeline", "*", "status"})) {
      const auto& id = seg[2];
      {
        std::lock_guard lock(jobs_->mu);
        auto it = jobs_->jobs.find(id);
        if (it != jobs_->jobs.end()) {
          const Job& j = it->second;
          ordered_json body;
          body["job_id"] = id;
          body["state"] = j.state;
          body["stage"] = j.stage;
          if (!j.snapshot_id.empty()) body["snapshot_id"] = j.snapshot_id;
          body["reused"] = j.reused;
          if (j.error) body["error"] = *j.error;
          return respond(200, body);
        }
      }
      if (store_.exists(id)) return respond(200, {{"snapshot_id", id}, {"state", "succeeded"}});
      throw HttpError{404, "NotFound", "no pipeline job or snapshot '" + id + "'"};
    }

    if (m == "GET" && is({"v1", "cohort", "*", "summary"})) {
      const auto id = snapshot(seg[2]);
      ordered_json body;
      body["snapshot_id"] = id;
      body["summary"] = json::parse(store_.read_artifact(id, "summary.json"));
      body["risk_summary"] = json::parse(store_.read_artifact(id, "risk_summary.json"));
      body["cohort"] = json::parse(store_.read_artifact(id, "cohort.json"));
      body["feature_stats"] = json::parse(store_.read_artifact(id, "feature_stats.json"))["by_label"];
      return respond(200, body);
    }

    if (m == "GET" && is({"v1", "students", "*", "risk"})) {
      const auto id = snapshot(query(req, "snapshot"));
      const auto& sid = seg[2];
      ordered_json assessments = ordered_json::array();
      for (const auto& row : ordered_rows(store_.read_artifact(id, "risk.jsonl"))) {
        if (row.value("studentID", "") == sid) assessments.push_back(row);
      }
      if (assessments.empty()) throw HttpError{404, "NotFound", "no risk assessments for student '" + sid + "'"};
      std::vector<InterventionPlan> plans;
      for (const auto& row : jsonl_rows(store_.read_artifact(id, "plans.jsonl"))) {
        plans.push_back(intervention_plan_from_json(row));
      }
      const auto states = PlanStore::replay(plans, store_.decisions(id));
      ordered_json plan_json = ordered_json::array();
      for (const auto& p : plans) {
        if (p.student_id == sid) plan_json.push_back(to_json(*states.find(p.plan_id)));
      }
      return respond(200, {{"snapshot_id", id}, {"studentID", sid}, {"assessments", assessments}, {"plans", plan_json}});
    }

    if (m == "GET" && is({"v1", "attempts", "*", "explanation"})) {
      const auto id = snapshot(query(req, "snapshot"));
      const auto& aid = seg[2];
      const auto day = query(req, "dateRel");
      ordered_json rows = ordered_json::array();
      for (const auto& row : ordered_rows(store_.read_artifact(id, "explanations.jsonl"))) {
        if (row.value("attemptID", "") != aid) continue;
        if (!day.empty() && std::to_string(row.value("dateRel", -1)) != day) continue;
        rows.push_back(row);
      }
      if (rows.empty()) throw HttpError{404, "NotFound", "no explanation for attempt '" + aid + "'"};
      return respond(200, {{"snapshot_id", id}, {"attemptID", aid}, {"explanations", rows}});
    }

    if (m == "GET" && is({"v1", "attempts", "*", "dependence", "*"})) {
      const auto id = snapshot(query(req, "snapshot"));
      const auto& aid = seg[2];
      const auto feature = feature_from_name(seg[4]);
      if (!feature) throw HttpError{400, "BadRequest", "unknown feature '" + seg[4] + "'"};
      const std::size_t fi = index_of(*feature);
      const auto curves = json::parse(store_.read_artifact(id, "dependence.json"));
      ordered_json points = ordered_json::array();
      for (const auto& row : jsonl_rows(store_.read_artifact(id, "explanations.jsonl"))) {
        if (row.value("attemptID", "") != aid) continue;
        points.push_back({{"dateRel", row["dateRel"]}, {"value", row["features"][fi]}, {"phi", row["phi"][fi]}});
      }
      if (points.empty()) throw HttpError{404, "NotFound", "no explained samples for attempt '" + aid + "'"};
      return respond(200, {{"snapshot_id", id},
                           {"attemptID", aid},
                           {"feature", kFeatureNames[fi]},
                           {"curve", curves.at(fi)},
                           {"samples", points}});
    }

    if (m == "GET" && is({"v1", "interventions", "queue"})) {
      const auto id = snapshot(query(req, "snapshot"));
      std::vector<RiskLevel> filter;
      const auto levels = query(req, "levels");
      for (const auto& name : segments([&] {
             std::string s = levels;
             std::replace(s.begin(), s.end(), ',', '/');
             return s;
           }())) {
        auto l = risk_level_from_string(name);
        if (!l) throw HttpError{400, "BadRequest", "unknown risk level '" + name + "'"};
        filter.push_back(*l);
      }
      ordered_json entries = ordered_json::array();
      for (const auto& e : intervention_queue(store_, id, filter)) entries.push_back(to_json(e));
      return respond(200, {{"snapshot_id", id}, {"entries", entries}});
    }

    if (m == "POST" && is({"v1", "interventions", "*", "decision"})) {
      json body = parse_body(req.body);
      const auto id = snapshot(body.contains("snapshot") ? body["snapshot"].get<std::string>() : query(req, "snapshot"));
      body["planID"] = seg[2];
      if (!body.contains("action")) throw HttpError{400, "BadRequest", "decision needs an action"};
      InstructorDecision d = [&] {
        try {
          return instructor_decision_from_json(body);
        } catch (const json::exception& e) {
          throw HttpError{400, "BadRequest", e.what()};
        }
      }();
      if (d.timestamp == 0) d.timestamp = now_seconds();
      std::lock_guard lock(store_.write_lock());
      std::vector<InterventionPlan> plans;
      for (const auto& row : jsonl_rows(store_.read_artifact(id, "plans.jsonl"))) {
        plans.push_back(intervention_plan_from_json(row));
      }
      auto states = PlanStore::replay(plans, store_.decisions(id));
      const PlanState state = states.record_decision(d);
      store_.append_decision(id, d);
      auto out = to_json(state);
      out["snapshot_id"] = id;
      return respond(200, out);
    }

    if (m == "GET" && is({"v1", "metrics", "*"})) {
      std::string id;
      if (seg[2] == "latest") {
        id = snapshot("");
      } else {
        auto found = store_.snapshot_for_model(seg[2]);
        if (!found || !store_.exists(*found)) throw HttpError{404, "NotFound", "no model '" + seg[2] + "'"};
        id = *found;
      }
      ordered_json body = json::parse(store_.read_artifact(id, "metrics.json"));
      body["snapshot_id"] = id;
      if (fs::exists(store_.snapshot_dir(id) / "grid.json")) {
        body["grid"] = json::parse(store_.read_artifact(id, "grid.json"));
      }
      return respond(200, body);
    }

    if (m == "POST" && is({"v1", "synth", "generate"})) {
      const auto spec = cohort_spec_from_json(parse_body(req.body));
      const auto cohort = generate_cohort(spec);
      const auto digest = sha256_hex(to_json(spec).dump()).substr(0, 16);
      const fs::path dir = store_.root() / "synth" / digest;
      write_cohort(cohort, dir);
      ordered_json files;
      for (const char* f : {"quiz.csv", "logs.csv", "truth.jsonl", "grades.csv", "semesters.csv"}) {
        files[f] = (dir / f).string();
      }
      return respond(201, {{"dir", dir.string()},
                           {"files", files},
                           {"students", cohort.students.size()},
                           {"attempts", cohort.attempts.size()},
                           {"events", cohort.events.size()},
                           {"attempt_days", cohort.truth.size()},
                           {"spec", to_json(spec)}});
    }

    throw HttpError{404, "NotFound", "no route for " + m + " " + req.path};
  } catch (const HttpError& e) {
    return error_body(e.status, e.code, e.message);
  } catch (const StageError& e) {
    return error_body(http_status(e.code()), to_string(e.code()), e.what(), e.stage());
  } catch (const Error& e) {
    return error_body(http_status(e.code()), to_string(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_body(500, "Internal", e.what());
  }
}

void serve(Api& api, const std::string& host, int port) {
  httplib::Server server;
  auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.body = req.body;
    r.authorization = req.get_header_value("Authorization");
    const auto out = api.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  server.Get(".*", handler);
  server.Post(".*", handler);
  if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace qs
