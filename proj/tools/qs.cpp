// Command-line front end. Stage subcommands read and write the same artifact
// files the pipeline stores, so they can be chained by hand.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "qs/config.hpp"
#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/eval.hpp"
#include "qs/explain.hpp"
#include "qs/features.hpp"
#include "qs/ingest.hpp"
#include "qs/intervene.hpp"
#include "qs/models.hpp"
#include "qs/preprocess.hpp"
#include "qs/random.hpp"
#include "qs/risk.hpp"
#include "qs/service.hpp"
#include "qs/synth.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace qs;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
};

json load_optional_config(const Globals& g) { return g.config.empty() ? json::object() : load_config(g.config); }

void put(const Globals& g, const std::string& name, const std::string& contents) {
  const fs::path p = fs::path(g.out_dir) / name;
  write_file(p, contents);
  std::cerr << "wrote " << p.string() << "\n";
}

template <class T>
std::string jsonl(const std::vector<T>& rows) {
  std::string out;
  for (const auto& r : rows) out += r.dump() + "\n";
  return out;
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> rows;
  for (const auto& line : split_lines(read_file(path))) rows.push_back(json::parse(line));
  return rows;
}

struct Streams {
  QuizTable quiz;
  LogTable logs;
  JoinResult join;
};

Streams load_streams(const std::string& quiz, const std::string& logs) {
  Streams s;
  s.quiz = read_quiz_file(quiz);
  s.logs = read_log_file(logs);
  s.join = join_attempt_events(s.quiz.attempts, s.logs.events);
  return s;
}

std::vector<LabeledSample> read_samples(const std::string& path) {
  std::vector<LabeledSample> out;
  for (const auto& j : read_jsonl(path)) out.push_back(labeled_sample_from_json(j));
  return out;
}

std::vector<LabeledSample> filter_semesters(const std::vector<LabeledSample>& all, const std::vector<std::string>& tags,
                                            bool keep) {
  const std::set<std::string> set(tags.begin(), tags.end());
  std::vector<LabeledSample> out;
  for (const auto& s : all) {
    if (tags.empty() || (set.count(s.semester) > 0) == keep) out.push_back(s);
  }
  return out;
}

SampleOptions sample_options(const std::string& semesters, int horizon, const std::string& tz) {
  SampleOptions opt;
  opt.horizon_days = horizon;
  if (!semesters.empty()) opt.calendar = SemesterCalendar::parse_csv(read_file(semesters));
  if (!tz.empty()) {
    auto z = TimeZone::parse(tz);
    if (!z) throw Error(ErrorCode::InvalidConfig, "bad timezone '" + tz + "'");
    opt.tz = *z;
  }
  return opt;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disengagement detection for voluntary online quizzes"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "TOML or JSON config file");
  app.add_option("--out-dir", g.out_dir, "Directory for written artifacts");
  auto* seed_opt = app.add_option("--seed", g.seed, "Random seed");

  std::string quiz, logs, semesters, tz, features_path, model_path, explanations_path, risk_path, catalog_path;
  int horizon = kDefaultHorizonDays;
  auto add_inputs = [&](CLI::App* sub) {
    sub->add_option("--quiz", quiz, "Quiz table (.csv/.jsonl)")->required();
    sub->add_option("--logs", logs, "Log table (.csv/.jsonl)")->required();
  };
  auto add_sample_opts = [&](CLI::App* sub) {
    sub->add_option("--semesters", semesters, "semesters.csv");
    sub->add_option("--horizon", horizon, "Day horizon for unsubmitted attempts");
    sub->add_option("--timezone", tz, "Fixed UTC offset for day boundaries");
  };

  auto* ingest = app.add_subcommand("ingest", "Parse and join quiz and log tables");
  add_inputs(ingest);

  auto* preprocess = app.add_subcommand("preprocess", "Daily activity records (daily.jsonl)");
  add_inputs(preprocess);
  add_sample_opts(preprocess);

  auto* featurize = app.add_subcommand("featurize", "Labeled feature vectors (features.jsonl)");
  add_inputs(featurize);
  add_sample_opts(featurize);

  std::string kind = "nn", grid = "default";
  std::vector<std::string> test_semesters;
  int folds = 4;
  auto* train = app.add_subcommand("train", "Grid-searched model (model.qsm)");
  train->add_option("--features", features_path, "features.jsonl")->required();
  train->add_option("--kind", kind, "lr, dt, rf, gbm, xgb, nn, knn, nb, svm");
  train->add_option("--grid", grid, "default, none, or a JSON array of hyperparameter sets");
  train->add_option("--exclude-semester", test_semesters, "Semester tags held out of training");
  train->add_option("--folds", folds, "Cross-validation folds");

  std::vector<std::string> eval_semesters;
  auto* eval = app.add_subcommand("eval", "Metrics and ROC of a model (metrics.json, roc.csv)");
  eval->add_option("--features", features_path, "features.jsonl")->required();
  eval->add_option("--model", model_path, "model.qsm")->required();
  eval->add_option("--semester", eval_semesters, "Evaluate only these semester tags");

  std::size_t background = 32, budget = 256;
  auto* explain = app.add_subcommand("explain", "Kernel SHAP attributions (explanations.jsonl)");
  explain->add_option("--features", features_path, "features.jsonl")->required();
  explain->add_option("--model", model_path, "model.qsm")->required();
  explain->add_option("--semester", eval_semesters, "Explain only these semester tags");
  explain->add_option("--background", background, "Background rows");
  explain->add_option("--budget", budget, "Coalitions per explanation");

  auto* risk = app.add_subcommand("risk", "Behavior flags and risk levels (risk.jsonl)");
  risk->add_option("--explanations", explanations_path, "explanations.jsonl")->required();

  auto* recommend = app.add_subcommand("recommend", "Intervention plans (plans.jsonl)");
  recommend->add_option("--risk", risk_path, "risk.jsonl")->required();
  recommend->add_option("--catalog", catalog_path, "catalog.json (standard catalog when omitted)");

  std::size_t students = 100;
  std::vector<double> mix;
  auto* synth = app.add_subcommand("synth", "Synthetic cohort (quiz.csv, logs.csv, truth.jsonl, grades.csv)");
  synth->add_option("--students", students, "Student count");
  synth->add_option("--mix", mix, "Five proportions: regular erratic delayed irregular erratic_delayed")
      ->expected(5);

  int port = 8080;
  std::string host = "127.0.0.1";
  auto* serve_cmd = app.add_subcommand("serve", "HTTP JSON API under /v1");
  serve_cmd->add_option("--port", port, "TCP port");
  serve_cmd->add_option("--host", host, "Bind address");

  auto* run = app.add_subcommand("run", "Full pipeline into the snapshot store (needs --config)");

  std::string snapshot;
  auto* report = app.add_subcommand("report", "Summary of a stored snapshot");
  report->add_option("--snapshot", snapshot, "Snapshot id (latest when omitted)");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (ingest->parsed()) {
      auto s = load_streams(quiz, logs);
      ordered_json r;
      r["quiz_rows"] = s.quiz.attempts.size();
      r["quiz_issues"] = s.quiz.issues.size();
      r["log_rows"] = s.logs.events.size();
      r["log_issues"] = s.logs.issues.size();
      r["streams"] = s.join.streams.size();
      r["matched_events"] = s.join.report.matched_events;
      r["dangling_events"] = s.join.report.dangling_events;
      r["attempts_without_events"] = s.join.report.attempts_without_events.size();
      put(g, "ingest.json", r.dump(2) + "\n");
      std::cout << r.dump(2) << "\n";
    } else if (preprocess->parsed() || featurize->parsed()) {
      auto s = load_streams(quiz, logs);
      auto build = build_labeled_samples(s.join.streams, sample_options(semesters, horizon, tz));
      if (preprocess->parsed()) {
        std::string out;
        for (const auto& r : build.records) out += to_json(r).dump() + "\n";
        put(g, "daily.jsonl", out);
      } else {
        std::vector<ordered_json> rows;
        for (const auto& smp : build.samples) rows.push_back(to_json(smp));
        put(g, "features.jsonl", jsonl(rows));
      }
      std::cout << build.records.size() << " attempt-days from " << s.join.streams.size() << " attempts\n";
    } else if (train->parsed()) {
      const json cfg = load_optional_config(g);
      if (cfg.contains("model")) {
        kind = cfg["model"].value("kind", kind);
        folds = cfg["model"].value("folds", folds);
      }
      auto k = model_kind_from_string(kind);
      if (!k) throw Error(ErrorCode::InvalidConfig, "unknown model kind '" + kind + "'");
      const auto samples = filter_semesters(read_samples(features_path), test_semesters, false);
      const Dataset data = make_dataset(samples);
      const std::uint64_t seed = g.seed_set ? g.seed : cfg.value("seed", std::uint64_t{0});
      ModelSpec spec{*k, cfg.contains("model") ? cfg["model"].value("hyperparams", json::object()) : json::object(),
                     seed};
      if (grid != "none") {
        std::vector<json> candidates;
        if (grid == "default") {
          candidates = default_grid(*k);
        } else {
          for (const auto& c : json::parse(grid)) candidates.push_back(c);
        }
        auto result = grid_search_cv(*k, candidates, data, folds, seed);
        put(g, "grid.json", to_json(result).dump(2) + "\n");
        spec = result.best;
      }
      const auto model = train_model(spec, data);
      put(g, "model.qsm", model.serialize());
      std::cout << "trained " << to_string(*k) << " on " << samples.size() << " samples\n";
    } else if (eval->parsed()) {
      const auto samples = filter_semesters(read_samples(features_path), eval_semesters, true);
      const Dataset data = make_dataset(samples);
      const auto model = TrainedModel::deserialize(read_file(model_path));
      const auto p = model.predict_proba_batch(data.x);
      std::vector<int> pred;
      for (double v : p) pred.push_back(v >= kDecisionThreshold ? 1 : 0);
      auto cls = classification_metrics(data.y, pred);
      if (cls.counts.positives() > 0 && cls.counts.negatives() > 0) {
        auto roc = roc_auc(data.y, p);
        cls.metrics.auc = roc.auc;
        put(g, "roc.csv", roc_csv(roc));
      }
      ordered_json m;
      m["samples"] = samples.size();
      m["counts"] = to_json(cls.counts);
      m["metrics"] = to_json(cls.metrics);
      put(g, "metrics.json", m.dump(2) + "\n");
      std::cout << m.dump(2) << "\n";
    } else if (explain->parsed()) {
      const auto all = read_samples(features_path);
      const auto samples = filter_semesters(all, eval_semesters, true);
      const auto model = TrainedModel::deserialize(read_file(model_path));
      const Matrix bg = select_background(make_dataset(filter_semesters(all, eval_semesters, false)), background, g.seed);
      const auto f = predictor_for(model);
      const std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
      std::vector<ordered_json> rows;
      KernelOptions ko;
      ko.budget = budget;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        ko.seed = mix_seed(g.seed, i);
        ordered_json j;
        j["attemptID"] = samples[i].attempt_id;
        j["studentID"] = samples[i].student_id;
        j["dateRel"] = samples[i].date_rel;
        j.update(to_json(kernel_shap(f, samples[i].features.span(), bg, ko), names));
        rows.push_back(std::move(j));
      }
      put(g, "explanations.jsonl", jsonl(rows));
    } else if (risk->parsed()) {
      std::vector<ordered_json> rows;
      std::vector<RiskAssessment> assessments;
      std::vector<double> preds;
      for (const auto& j : read_jsonl(explanations_path)) {
        auto a = assess_risk(shap_explanation_from_json(j), j.at("attemptID").get<std::string>(),
                             j.value("studentID", ""), j.at("dateRel").get<int>());
        rows.push_back(to_json(a));
        preds.push_back(a.model_prediction);
        assessments.push_back(std::move(a));
      }
      put(g, "risk.jsonl", jsonl(rows));
      const auto summary = to_json(cohort_risk_summary(assessments, preds));
      put(g, "risk_summary.json", summary.dump(2) + "\n");
      std::cout << summary.dump(2) << "\n";
    } else if (recommend->parsed()) {
      const Catalog catalog =
          catalog_path.empty() ? Catalog::standard() : Catalog::from_json(json::parse(read_file(catalog_path)));
      std::vector<ordered_json> rows;
      for (const auto& j : read_jsonl(risk_path)) {
        rows.push_back(to_json(recommend_interventions(risk_assessment_from_json(j), catalog)));
      }
      put(g, "plans.jsonl", jsonl(rows));
      put(g, "catalog.json", catalog.to_json().dump(2) + "\n");
    } else if (synth->parsed()) {
      CohortSpec spec = cohort_spec_from_json(load_optional_config(g).value("synth", json::object()));
      if (synth->count("--students")) spec.student_count = students;
      if (!mix.empty()) std::copy(mix.begin(), mix.end(), spec.mix.begin());
      if (g.seed_set) spec.seed = g.seed;
      const auto cohort = generate_cohort(spec);
      write_cohort(cohort, g.out_dir);
      std::cout << cohort.students.size() << " students, " << cohort.attempts.size() << " attempts, "
                << cohort.events.size() << " events in " << g.out_dir << "\n";
    } else if (serve_cmd->parsed()) {
      ApiOptions opt;
      if (const char* t = std::getenv("QS_API_TOKEN")) opt.token = t;
      opt.base_dir = fs::current_path();
      Api api(SnapshotStore(default_data_dir()), opt);
      std::cerr << "serving /v1 on " << host << ":" << port << " (store " << default_data_dir().string() << ")\n";
      serve(api, host, port);
    } else if (run->parsed()) {
      if (g.config.empty()) throw Error(ErrorCode::InvalidConfig, "run needs --config");
      json cfg = load_config(g.config);
      if (g.seed_set) cfg["seed"] = g.seed;
      const auto pc = pipeline_config_from_json(cfg, fs::path(g.config).parent_path());
      SnapshotStore store(default_data_dir());
      auto result = run_pipeline(pc, store, [](std::string_view stage) { std::cerr << "stage " << stage << "\n"; });
      std::cout << "snapshot " << result.manifest.snapshot_id << (result.reused ? " (reused)" : "") << "\n"
                << result.summary.dump(2) << "\n";
    } else if (report->parsed()) {
      SnapshotStore store(default_data_dir());
      if (snapshot.empty()) {
        auto latest = store.latest();
        if (!latest) throw Error(ErrorCode::UnknownSnapshot, "the store has no snapshots yet");
        snapshot = *latest;
      }
      const auto bad = store.verify(snapshot);
      ordered_json r;
      r["manifest"] = store.manifest(snapshot).to_json();
      r["summary"] = json::parse(store.read_artifact(snapshot, "summary.json"));
      r["modified_artifacts"] = bad;
      std::cout << r.dump(2) << "\n";
      if (!bad.empty()) return 3;
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << to_string(e.code()) << "] in stage " << e.stage() << ": " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
