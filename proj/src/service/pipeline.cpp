#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "qs/config.hpp"
#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/explain.hpp"
#include "qs/features.hpp"
#include "qs/ingest.hpp"
#include "qs/preprocess.hpp"
#include "qs/random.hpp"
#include "qs/service.hpp"

namespace qs {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

constexpr const char* kPipelineVersion = "qs-pipeline-1";

template <class Fn>
auto run_stage(const char* name, const StageObserver& observe, Fn&& fn) {
  if (observe) observe(name);
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.code(), e.what());
  } catch (const json::exception& e) {
    throw StageError(name, ErrorCode::Serialization, e.what());
  } catch (const fs::filesystem_error& e) {
    throw StageError(name, ErrorCode::Io, e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

ordered_json issues_json(const std::vector<RowIssue>& issues) {
  ordered_json a = ordered_json::array();
  for (const auto& i : issues) a.push_back({{"row", i.row}, {"code", to_string(i.code)}, {"reason", i.reason}});
  return a;
}

ordered_json join_json(const JoinReport& r) {
  ordered_json j;
  j["matched_events"] = r.matched_events;
  j["dangling_events"] = r.dangling_events;
  j["non_quiz_events"] = r.non_quiz_events;
  j["attempts_without_events"] = r.attempts_without_events;
  j["course_mismatches"] = r.course_mismatches;
  j["student_mismatches"] = r.student_mismatches;
  j["early_event_attempts"] = r.early_event_attempts;
  return j;
}

std::string jsonl(const std::vector<ordered_json>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) out.emplace_back(line);
    pos = nl + 1;
  }
  return out;
}

namespace {

std::string scope_name(ExplainScope s) { return s == ExplainScope::All ? "all" : "eval"; }

std::string now_rfc3339() {
  return format_rfc3339(std::chrono::duration_cast<std::chrono::seconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count());
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    if (j.contains("data_dir")) {
      const fs::path dir = resolve(base_dir, j["data_dir"].get<std::string>());
      c.inputs.quiz = dir / "quiz.csv";
      c.inputs.logs = dir / "logs.csv";
      if (fs::exists(dir / "semesters.csv")) c.inputs.semesters = dir / "semesters.csv";
      if (fs::exists(dir / "grades.csv")) c.inputs.grades = dir / "grades.csv";
    }
    if (j.contains("inputs")) {
      const auto& in = j["inputs"];
      auto opt = [&](const char* key, std::optional<fs::path>& out) {
        if (in.contains(key) && !in[key].is_null()) out = resolve(base_dir, in[key].get<std::string>());
      };
      if (in.contains("quiz")) c.inputs.quiz = resolve(base_dir, in["quiz"].get<std::string>());
      if (in.contains("logs")) c.inputs.logs = resolve(base_dir, in["logs"].get<std::string>());
      opt("semesters", c.inputs.semesters);
      opt("grades", c.inputs.grades);
      opt("catalog", c.inputs.catalog);
      opt("model", c.inputs.model);
    }
    if (c.inputs.quiz.empty() || c.inputs.logs.empty()) {
      throw Error(ErrorCode::InvalidConfig, "config needs inputs.quiz and inputs.logs (or data_dir)");
    }
    c.horizon_days = j.value("horizon_days", c.horizon_days);
    if (j.contains("timezone")) {
      auto tz = TimeZone::parse(j["timezone"].get<std::string>());
      if (!tz) throw Error(ErrorCode::InvalidConfig, "bad timezone " + j["timezone"].dump());
      c.tz = *tz;
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("model")) {
      const auto& m = j["model"];
      if (m.contains("kind")) {
        auto k = model_kind_from_string(m["kind"].get<std::string>());
        if (!k) throw Error(ErrorCode::InvalidConfig, "unknown model kind " + m["kind"].dump());
        c.kind = *k;
      }
      if (m.contains("grid")) {
        if (m["grid"].is_array()) {
          c.grid = "custom";
          for (const auto& g : m["grid"]) c.custom_grid.push_back(g);
        } else {
          c.grid = m["grid"].get<std::string>();
          if (c.grid != "default" && c.grid != "none") {
            throw Error(ErrorCode::InvalidConfig, "model.grid must be \"default\", \"none\" or an array");
          }
        }
      }
      if (m.contains("hyperparams")) c.hyperparams = m["hyperparams"];
      c.folds = m.value("folds", c.folds);
      c.seed = m.value("seed", c.seed);
    }
    if (j.contains("split")) {
      c.test_semesters = j["split"].value("test_semesters", std::vector<std::string>{});
    }
    if (j.contains("explain")) {
      const auto& e = j["explain"];
      if (e.contains("scope")) {
        const auto s = e["scope"].get<std::string>();
        if (s == "all") {
          c.explain_scope = ExplainScope::All;
        } else if (s == "eval") {
          c.explain_scope = ExplainScope::Eval;
        } else {
          throw Error(ErrorCode::InvalidConfig, "explain.scope must be \"eval\" or \"all\"");
        }
      }
      c.background_size = e.value("background", c.background_size);
      c.kernel_budget = e.value("budget", c.kernel_budget);
      c.dependence_grid = e.value("dependence_grid", c.dependence_grid);
      c.dependence_rows = e.value("dependence_rows", c.dependence_rows);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad pipeline config: ") + e.what());
  }
  if (c.folds < 2) throw Error(ErrorCode::InvalidConfig, "model.folds must be at least 2");
  return c;
}

ordered_json settings_json(const PipelineConfig& c) {
  ordered_json j;
  j["version"] = kPipelineVersion;
  j["horizon_days"] = c.horizon_days;
  j["timezone"] = c.tz.name();
  ordered_json m;
  m["kind"] = to_string(c.kind);
  m["grid"] = c.grid;
  m["custom_grid"] = c.custom_grid;
  m["hyperparams"] = c.hyperparams;
  m["folds"] = c.folds;
  m["seed"] = c.seed;
  j["model"] = m;
  j["split"] = {{"test_semesters", c.test_semesters}};
  j["explain"] = {{"scope", scope_name(c.explain_scope)},
                  {"background", c.background_size},
                  {"budget", c.kernel_budget},
                  {"dependence_grid", c.dependence_grid},
                  {"dependence_rows", c.dependence_rows}};
  return j;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, SnapshotStore& store, const StageObserver& observe) {
  struct Ingested {
    QuizTable quiz;
    LogTable logs;
    JoinResult join;
    std::map<std::string, std::string> digests;
  };

  Ingested in = run_stage("ingest", observe, [&] {
    Ingested r;
    auto digest_input = [&](const char* role, const fs::path& p) {
      if (!fs::exists(p)) throw Error(ErrorCode::Io, std::string(role) + " input not found: " + p.string());
      r.digests[role] = sha256_file(p);
    };
    digest_input("quiz", cfg.inputs.quiz);
    digest_input("logs", cfg.inputs.logs);
    if (cfg.inputs.semesters) digest_input("semesters", *cfg.inputs.semesters);
    if (cfg.inputs.grades) digest_input("grades", *cfg.inputs.grades);
    if (cfg.inputs.catalog) digest_input("catalog", *cfg.inputs.catalog);
    if (cfg.inputs.model) digest_input("model", *cfg.inputs.model);
    r.quiz = read_quiz_file(cfg.inputs.quiz);
    r.logs = read_log_file(cfg.inputs.logs);
    r.join = join_attempt_events(r.quiz.attempts, r.logs.events);
    return r;
  });

  const std::string config_digest = sha256_hex(settings_json(cfg).dump());
  std::string id_source = std::string(kPipelineVersion) + "\n" + config_digest + "\n";
  for (const auto& [role, d] : in.digests) id_source += role + "=" + d + "\n";
  const std::string snapshot_id = sha256_hex(id_source).substr(0, 16);

  if (store.exists(snapshot_id) && store.verify(snapshot_id).empty()) {
    PipelineResult r;
    r.manifest = store.manifest(snapshot_id);
    r.reused = true;
    r.summary = json::parse(store.read_artifact(snapshot_id, "summary.json"));
    return r;
  }

  const fs::path stage_dir = run_stage("ingest", {}, [&] {
    auto dir = store.begin(snapshot_id);
    ordered_json report;
    report["quiz_rows"] = in.quiz.attempts.size();
    report["log_rows"] = in.logs.events.size();
    report["quiz_issues"] = issues_json(in.quiz.issues);
    report["log_issues"] = issues_json(in.logs.issues);
    report["join"] = join_json(in.join.report);
    write_file(dir / "ingest.json", report.dump(2) + "\n");
    return dir;
  });
  auto put = [&](const char* name, const std::string& contents) { write_file(stage_dir / name, contents); };

  struct Prepared {
    SemesterCalendar calendar;
    SampleBuild build;
  };
  Prepared prep = run_stage("preprocess", observe, [&] {
    Prepared p;
    if (cfg.inputs.semesters) p.calendar = SemesterCalendar::parse_csv(read_file(*cfg.inputs.semesters));
    SampleOptions opt;
    opt.horizon_days = cfg.horizon_days;
    opt.tz = cfg.tz;
    opt.calendar = p.calendar;
    p.build = build_labeled_samples(in.join.streams, opt);
    std::string daily;
    for (const auto& r : p.build.records) daily += to_json(r).dump() + "\n";
    put("daily.jsonl", daily);
    return p;
  });
  const auto& samples = prep.build.samples;

  struct Split {
    std::vector<std::size_t> train, eval;
    std::vector<std::string> test_semesters;
    bool in_sample = false;
  };
  Split split = run_stage("features", observe, [&] {
    if (samples.empty()) throw Error(ErrorCode::TooFewSamples, "no attempt-day samples were produced");
    std::vector<ordered_json> rows;
    for (const auto& s : samples) rows.push_back(to_json(s));
    put("features.jsonl", jsonl(rows));
    ordered_json stats;
    stats["by_label"] = to_json(feature_stats_by_label(samples));
    stats["correlation"] = to_json(feature_correlation_matrix(samples));
    put("feature_stats.json", stats.dump(2) + "\n");

    Split sp;
    sp.test_semesters = cfg.test_semesters;
    if (sp.test_semesters.empty() && prep.calendar.semesters().size() >= 2) {
      auto sems = prep.calendar.semesters();
      std::stable_sort(sems.begin(), sems.end(), [](const Semester& a, const Semester& b) { return a.start < b.start; });
      sp.test_semesters.push_back(sems.back().tag);
    }
    const std::set<std::string> test(sp.test_semesters.begin(), sp.test_semesters.end());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      (test.count(samples[i].semester) ? sp.eval : sp.train).push_back(i);
    }
    if (sp.eval.empty() || sp.train.empty()) {
      sp.train.clear();
      sp.eval.clear();
      for (std::size_t i = 0; i < samples.size(); ++i) {
        sp.train.push_back(i);
        sp.eval.push_back(i);
      }
      sp.in_sample = true;
    }
    return sp;
  });

  const Dataset all = make_dataset(samples);
  const Dataset train = all.subset(split.train);
  const Dataset eval = all.subset(split.eval);

  struct Trained {
    TrainedModel model;
    std::string model_id;
  };
  Trained trained = run_stage("train", observe, [&] {
    Trained t;
    if (cfg.inputs.model) {
      t.model = TrainedModel::deserialize(read_file(*cfg.inputs.model));
    } else {
      ModelSpec spec{cfg.kind, cfg.hyperparams, cfg.seed};
      if (cfg.grid != "none") {
        auto grid = cfg.grid == "custom" ? cfg.custom_grid : default_grid(cfg.kind);
        auto result = grid_search_cv(cfg.kind, grid, train, cfg.folds, cfg.seed);
        put("grid.json", to_json(result).dump(2) + "\n");
        spec = result.best;
      }
      t.model = train_model(spec, train);
    }
    const auto text = t.model.serialize();
    put("model.qsm", text);
    t.model_id = "m-" + sha256_hex(text).substr(0, 16);
    return t;
  });
  const TrainedModel& model = trained.model;

  const std::vector<double> probs = run_stage("predict", observe, [&] {
    auto p = model.predict_proba_batch(all.x);
    std::vector<char> in_eval(samples.size(), 0);
    for (auto i : split.eval) in_eval[i] = 1;
    std::string csv = "attemptID,studentID,dateRel,semester,split,label,probability\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& s = samples[i];
      csv += s.attempt_id + "," + s.student_id + "," + std::to_string(s.date_rel) + "," + s.semester + "," +
             (in_eval[i] ? "eval" : "train") + "," + std::to_string(static_cast<int>(s.label)) + "," +
             format_double(p[i]) + "\n";
    }
    put("predictions.csv", csv);

    std::vector<double> scores;
    std::vector<int> predicted;
    for (auto i : split.eval) {
      scores.push_back(p[i]);
      predicted.push_back(p[i] >= kDecisionThreshold ? 1 : 0);
    }
    auto cls = classification_metrics(eval.y, predicted);
    std::optional<RocCurve> roc;
    const std::size_t positives = cls.counts.positives();
    if (positives > 0 && cls.counts.negatives() > 0) {
      roc = roc_auc(eval.y, scores);
      cls.metrics.auc = roc->auc;
      put("roc.csv", roc_csv(*roc));
    }
    ordered_json m;
    m["model_id"] = trained.model_id;
    m["kind"] = to_string(model.spec().kind);
    m["hyperparams"] = model.spec().hyperparams;
    m["threshold"] = kDecisionThreshold;
    m["train_samples"] = split.train.size();
    m["eval_samples"] = split.eval.size();
    m["test_semesters"] = split.test_semesters;
    m["in_sample"] = split.in_sample;
    m["counts"] = to_json(cls.counts);
    m["metrics"] = to_json(cls.metrics);
    if (roc) m["auc_trapezoid"] = roc->auc_trapezoid;
    put("metrics.json", m.dump(2) + "\n");
    return p;
  });

  struct Explained {
    std::vector<std::size_t> index;  // into samples
    std::vector<ShapExplanation> shap;
  };
  const std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  Explained ex = run_stage("explain", observe, [&] {
    Explained e;
    const auto f = predictor_for(model);
    const Matrix background = select_background(train, cfg.background_size, cfg.seed);
    if (cfg.explain_scope == ExplainScope::All) {
      for (std::size_t i = 0; i < samples.size(); ++i) e.index.push_back(i);
    } else {
      e.index = split.eval;
    }
    KernelOptions ko;
    ko.budget = cfg.kernel_budget;
    std::vector<ordered_json> rows;
    Matrix values(e.index.size(), kFeatureCount);
    for (std::size_t k = 0; k < e.index.size(); ++k) {
      const std::size_t i = e.index[k];
      ko.seed = mix_seed(cfg.seed, i);
      const auto& s = samples[i];
      e.shap.push_back(kernel_shap(f, s.features.span(), background, ko));
      values.row(static_cast<Eigen::Index>(k)) = all.x.row(static_cast<Eigen::Index>(i));
      ordered_json j;
      j["attemptID"] = s.attempt_id;
      j["studentID"] = s.student_id;
      j["dateRel"] = s.date_rel;
      j.update(to_json(e.shap.back(), names));
      rows.push_back(std::move(j));
    }
    put("explanations.jsonl", jsonl(rows));
    if (!e.shap.empty()) put("importance.json", to_json(shap_summary(e.shap, values, names)).dump() + "\n");

    const Dataset scope = all.subset(e.index);
    const Matrix rows_for_pd = select_background(scope.y.empty() ? train : scope, cfg.dependence_rows, cfg.seed);
    ordered_json curves = ordered_json::array();
    for (std::size_t fi = 0; fi < kFeatureCount; ++fi) {
      curves.push_back(to_json(partial_dependence_thresholds(f, rows_for_pd, fi, cfg.dependence_grid, names[fi])));
    }
    put("dependence.json", curves.dump() + "\n");
    return e;
  });

  const std::vector<RiskAssessment> risk = run_stage("risk", observe, [&] {
    std::vector<RiskAssessment> out;
    std::vector<double> p;
    std::vector<ordered_json> rows;
    for (std::size_t k = 0; k < ex.index.size(); ++k) {
      const auto& s = samples[ex.index[k]];
      out.push_back(assess_risk(ex.shap[k], s.attempt_id, s.student_id, s.date_rel));
      p.push_back(probs[ex.index[k]]);
      auto j = to_json(out.back());
      j["label"] = to_string(s.label);
      rows.push_back(std::move(j));
    }
    put("risk.jsonl", jsonl(rows));
    put("risk_summary.json", to_json(cohort_risk_summary(out, p)).dump(2) + "\n");
    return out;
  });

  run_stage("intervene", observe, [&] {
    const Catalog catalog =
        cfg.inputs.catalog ? Catalog::from_json(json::parse(read_file(*cfg.inputs.catalog))) : Catalog::standard();
    put("catalog.json", catalog.to_json().dump(2) + "\n");
    std::vector<ordered_json> rows;
    for (const auto& a : risk) rows.push_back(to_json(recommend_interventions(a, catalog)));
    put("plans.jsonl", jsonl(rows));
    return 0;
  });

  ordered_json summary = run_stage("report", observe, [&] {
    std::map<std::string, double> grades;
    if (cfg.inputs.grades) grades = parse_grades_csv(read_file(*cfg.inputs.grades));
    const auto report = cohort_reports(in.join.streams, in.logs.events, prep.calendar, grades, 5, cfg.tz);
    put("cohort.json", to_json(report).dump() + "\n");

    std::size_t engaged = 0;
    for (const auto& s : samples) engaged += s.label == Label::Engaged;
    ordered_json sum;
    sum["snapshot_id"] = snapshot_id;
    sum["model_id"] = trained.model_id;
    sum["samples"] = {{"total", samples.size()},
                      {"engaged", engaged},
                      {"disengaged", samples.size() - engaged},
                      {"train", split.train.size()},
                      {"eval", split.eval.size()},
                      {"explained", ex.index.size()}};
    sum["attempts"] = in.join.streams.size();
    sum["empty_attempts"] = prep.build.empty_streams.size();
    sum["metrics"] = json::parse(read_file(stage_dir / "metrics.json"))["metrics"];
    sum["risk"] = json::parse(read_file(stage_dir / "risk_summary.json"));
    put("summary.json", sum.dump(2) + "\n");
    return sum;
  });

  PipelineResult result;
  SnapshotManifest m;
  m.snapshot_id = snapshot_id;
  m.input_digests = in.digests;
  m.config_digest = config_digest;
  m.model_id = trained.model_id;
  m.created_at = now_rfc3339();
  result.manifest = run_stage("report", {}, [&] { return store.commit(std::move(m)); });
  result.summary = summary;
  return result;
}

void order_queue(std::vector<QueueEntry>& entries) {
  std::sort(entries.begin(), entries.end(), [](const QueueEntry& a, const QueueEntry& b) {
    if (a.level != b.level) return static_cast<int>(a.level) < static_cast<int>(b.level);
    if (a.total_shap() != b.total_shap()) return a.total_shap() < b.total_shap();
    if (a.student_id != b.student_id) return a.student_id < b.student_id;
    return a.plan_id < b.plan_id;
  });
}

std::vector<QueueEntry> intervention_queue(const SnapshotStore& store, std::string_view snapshot_id,
                                           std::span<const RiskLevel> filter) {
  static constexpr std::array<RiskLevel, 3> kDefault = {RiskLevel::High, RiskLevel::Medium, RiskLevel::Low};
  if (filter.empty()) filter = kDefault;
  std::vector<InterventionPlan> plans;
  for (const auto& line : split_lines(store.read_artifact(snapshot_id, "plans.jsonl"))) {
    plans.push_back(intervention_plan_from_json(json::parse(line)));
  }
  const PlanStore states = PlanStore::replay(plans, store.decisions(snapshot_id));
  std::vector<QueueEntry> out;
  for (const auto& p : plans) {
    if (std::find(filter.begin(), filter.end(), p.level) == filter.end()) continue;
    const PlanState* st = states.find(p.plan_id);
    QueueEntry e;
    e.plan_id = p.plan_id;
    e.student_id = p.student_id;
    e.attempt_id = p.attempt_id;
    e.date_rel = p.date_rel;
    e.level = p.level;
    e.count_shap_sum = p.flags.count_shap_sum;
    e.inactive_shap = p.flags.inactive_shap;
    e.stat_shap_sum = p.flags.stat_shap_sum;
    e.status = st->status;
    e.strategies = st->active_strategies;
    e.timing = p.timing;
    out.push_back(std::move(e));
  }
  order_queue(out);
  return out;
}

ordered_json to_json(const QueueEntry& e) {
  ordered_json j;
  j["planID"] = e.plan_id;
  j["studentID"] = e.student_id;
  j["attemptID"] = e.attempt_id;
  j["dateRel"] = e.date_rel;
  j["riskLevel"] = to_string(e.level);
  j["count_shap_sum"] = e.count_shap_sum;
  j["inactive_shap"] = e.inactive_shap;
  j["stat_shap_sum"] = e.stat_shap_sum;
  j["total_shap"] = e.total_shap();
  j["status"] = to_string(e.status);
  j["strategies"] = e.strategies;
  j["timing"] = to_string(e.timing);
  return j;
}

}  // namespace qs
