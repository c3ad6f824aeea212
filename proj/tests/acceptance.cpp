// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Each check carries its own runtime limit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qs/eval.hpp"
#include "qs/explain.hpp"
#include "qs/features.hpp"
#include "qs/intervene.hpp"
#include "qs/models.hpp"
#include "qs/preprocess.hpp"
#include "qs/random.hpp"
#include "qs/risk.hpp"
#include "qs/service.hpp"
#include "qs/synth.hpp"
#include "risk_fixtures.hpp"
#include "shap_models.hpp"
#include "support.hpp"

using namespace qs;

namespace {

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << "first failure: " << what << "; ";
    ok = ok && cond;
  }
};

using Check = std::function<void(Outcome&)>;

struct Criterion {
  std::string name;
  double limit_seconds;  // 0: no limit
  Check run;
};

// ---------------------------------------------------------------------------
// Published classifier rates; only TPR and TNR feed the identity, the rest
// are carried for the record.

struct PublishedRow {
  const char* model;
  double ppv, npv, tpr, tnr, f1_tp, f1_tn, ba, auc;
};

constexpr PublishedRow kPublished[] = {
    {"RF", .89, .96, .98, .83, .93, .89, .90, .96},  {"DT", .88, .93, .96, .83, .92, .88, .89, .94},
    {"XGB", .86, .99, .99, .78, .92, .87, .89, .96}, {"GBM", .90, .95, .97, .85, .93, .89, .91, .96},
    {"LR", .88, .93, .96, .81, .91, .87, .88, .93},  {"NB", .69, .93, .98, .40, .81, .56, .69, .87},
    {"KNN", .85, .90, .94, .78, .89, .83, .86, .91}, {"SVC", .89, .95, .97, .83, .93, .89, .90, .94},
    {"NN", .90, .94, .96, .85, .93, .89, .91, .96},
};

void metric_identities(Outcome& o) {
  for (const auto& row : kPublished) {
    const auto m = metrics_from_rates(row.tpr, row.tnr, row.ppv, row.npv);
    const std::string tag = row.model;
    o.require(std::abs(m.ba - row.ba) <= 0.01, tag + " BA " + std::to_string(m.ba));
    o.require(std::abs(m.ba - (row.tpr + row.tnr) / 2) <= 1e-12, tag + " BA definition");
    o.require(std::abs(m.fpr - (1 - row.tnr)) <= 1e-12, tag + " FPR");
    o.require(std::abs(m.fnr - (1 - row.tpr)) <= 1e-12, tag + " FNR");
  }
  o.detail << std::size(kPublished) << " rows";
}

// ---------------------------------------------------------------------------

void golden_trace(Outcome& o) {
  using Tags = std::vector<std::string>;
  // The submission event is listed on its day but never accumulated.
  const std::vector<Tags> on_day = {{"E_start", "E1", "E2"}, {}, {"E3"}, {}, {"E4", "E5"}, {}, {"E6", "submit"}};
  const std::vector<Tags> acc = {{"E_start", "E1", "E2"},
                                 {"E_start", "E1", "E2"},
                                 {"E_start", "E1", "E2", "E3"},
                                 {"E_start", "E1", "E2", "E3"},
                                 {"E_start", "E1", "E2", "E3", "E4", "E5"},
                                 {"E_start", "E1", "E2", "E3", "E4", "E5"},
                                 {"E_start", "E1", "E2", "E3", "E4", "E5", "E6"}};
  const std::vector<int> inactive = {0, 0, 1, 1, 2, 2, 3};
  const auto recs = build_daily_records(test::worked_attempt(), kDefaultHorizonDays);
  o.require(recs.size() == 7, "7 rows, got " + std::to_string(recs.size()));
  if (recs.size() != 7) return;
  for (int d = 0; d < 7; ++d) {
    const auto& r = recs[d];
    const std::string at = "day " + std::to_string(d) + " ";
    o.require(r.attempt_id == "x", at + "attempt id");
    o.require(r.date_rel == d, at + "date_rel");
    o.require(test::tags(r.activity_on_day) == on_day[d], at + "activity on day");
    o.require(r.inactive_days == inactive[d], at + "inactive days");
    o.require(r.submission_day == 6, at + "submission day");
    o.require(r.days_before_submit == 6 - d, at + "days before submit");
    o.require(test::tags(r.accumulated_activity) == acc[d], at + "accumulated activity");
    o.require(r.did_submit == (d == 6), at + "did submit");
  }
  o.detail << "7 rows";
}

// ---------------------------------------------------------------------------
// Seeded cohort shared by the end-to-end and feature-direction checks.

struct CohortSamples {
  std::vector<LabeledSample> train, test;
};

const CohortSamples& cohort_samples() {
  static const CohortSamples cached = [] {
    CohortSpec spec;
    spec.student_count = 500;
    spec.mix = {0.55, 0.15, 0.15, 0.10, 0.05};
    spec.seed = 1;
    const auto cohort = generate_cohort(spec);
    const auto join = join_attempt_events(cohort.attempts, cohort.events);
    SampleOptions opt;
    opt.calendar = cohort.calendar;
    auto build = build_labeled_samples(join.streams, opt);
    CohortSamples out;
    const std::string held_out = spec.semester_tags.back();
    for (auto& s : build.samples) (s.semester == held_out ? out.test : out.train).push_back(std::move(s));
    return out;
  }();
  return cached;
}

void synthetic_end_to_end(Outcome& o) {
  const auto& c = cohort_samples();
  const auto train = make_dataset(c.train);
  const auto test = make_dataset(c.test);
  const auto grid = default_grid(ModelKind::NN);
  const auto search = grid_search_cv(ModelKind::NN, grid, train, 4, 5);
  const auto model = train_model(search.best, train);
  const auto p = model.predict_proba_batch(test.x);
  std::vector<int> pred;
  for (double v : p) pred.push_back(v >= kDecisionThreshold ? 1 : 0);
  const auto cls = classification_metrics(test.y, pred);
  const double auc = auc_score(test.y, p);
  o.require(cls.metrics.ba >= 0.90, "BA");
  o.require(auc >= 0.95, "AUC");
  o.require(cls.metrics.tnr >= 0.85, "disengaged detection rate");
  char buf[200];
  std::snprintf(buf, sizeof buf, "train %zu test %zu, grid pick %zu/%zu, BA %.4f AUC %.4f TNR %.4f", train.size(),
                test.size(), search.best_index + 1, grid.size(), cls.metrics.ba, auc, cls.metrics.tnr);
  o.detail << buf;
}

void feature_directions(Outcome& o) {
  const auto& c = cohort_samples();
  const auto st = feature_stats_by_label(c.train);
  const std::size_t di = index_of(Feature::DaysInactive);
  const double n = st.disengaged.mean[di], y = st.engaged.mean[di];
  o.require(n >= 3 * y, "days_inactive N >= 3x Y");
  o.require(n > y, "days_inactive N > Y");
  for (std::size_t f = 0; f < kPeriodCountFeatures; ++f) {
    o.require(st.engaged.mean[f] > st.disengaged.mean[f], std::string(kFeatureNames[f]) + " higher for Y");
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "days_inactive N %.3f Y %.3f (ratio %.2f), N=%zu Y=%zu", n, y, y > 0 ? n / y : 0.0,
                st.disengaged.count, st.engaged.count);
  o.detail << buf;
}

// ---------------------------------------------------------------------------

void shap_axioms(Outcome& o) {
  Rng rng(20240601);
  double worst_eff = 0, worst_dummy = 0, worst_sym = 0, worst_kernel = 0, worst_perm = 0;
  for (int t = 0; t < 200; ++t) {
    const std::size_t m = 3 + rng.below(6);  // 3..8
    const auto model = test::random_planted_model(rng, m);
    const auto [x, bg] = test::planted_inputs(rng, model, 5 + rng.below(8));
    const auto f = model.predictor();
    const auto exact = exact_shapley(f, x, bg);
    worst_eff = std::max(worst_eff, std::abs(exact.residual()));
    worst_dummy = std::max(worst_dummy, std::abs(exact.attributions[*model.dummy]));
    worst_sym = std::max(worst_sym, std::abs(exact.attributions[model.pair->first] -
                                             exact.attributions[model.pair->second]));
    const auto perm = test::permutation_shapley(f, x, bg);
    KernelOptions ko;
    ko.budget = (std::size_t{1} << m);
    const auto kernel = kernel_shap(f, x, bg, ko);
    for (std::size_t k = 0; k < m; ++k) {
      worst_perm = std::max(worst_perm, std::abs(perm[k] - exact.attributions[k]));
      worst_kernel = std::max(worst_kernel, std::abs(kernel.attributions[k] - exact.attributions[k]));
    }
  }
  o.require(worst_eff <= 1e-9, "efficiency");
  o.require(worst_dummy <= 1e-9, "dummy");
  o.require(worst_sym <= 1e-9, "symmetry");
  o.require(worst_perm <= 1e-9, "exact vs permutation definition");
  o.require(worst_kernel <= 1e-6, "kernel full enumeration vs exact");
  char buf[200];
  std::snprintf(buf, sizeof buf, "200 models; max |eff| %.1e dummy %.1e sym %.1e perm %.1e kernel %.1e", worst_eff,
                worst_dummy, worst_sym, worst_perm, worst_kernel);
  o.detail << buf;
}

// ---------------------------------------------------------------------------

RiskLevel expected_level(bool erratic, bool delayed, bool irregular) {
  if (erratic && delayed) return RiskLevel::High;
  if (erratic != delayed) return RiskLevel::Medium;
  return irregular ? RiskLevel::Low : RiskLevel::Engaged;
}

// 16 attributions whose three headline sums carry the requested signs.
ShapExplanation combo_explanation(bool erratic, bool delayed, bool irregular) {
  std::array<double, kFeatureCount> phi{};
  for (std::size_t f = 0; f < kPeriodCountFeatures; ++f) phi[f] = erratic ? -0.01 : 0.01;
  phi[0] += erratic ? -0.02 : 0.02;
  phi[index_of(Feature::DaysInactive)] = delayed ? -0.1 : 0.05;
  phi[index_of(Feature::StatMean)] = irregular ? -0.04 : 0.03;
  phi[index_of(Feature::StatSd)] = irregular ? 0.01 : -0.01;
  phi[index_of(Feature::PreviousPerf)] = -0.2;  // outside every flag
  return test::fixture_explanation(phi, 0.6);
}

void risk_truth_table(Outcome& o) {
  for (int bits = 0; bits < 8; ++bits) {
    const bool e = bits & 1, d = bits & 2, i = bits & 4;
    const auto want = expected_level(e, d, i);
    const std::string tag = "combo " + std::to_string(bits);
    const auto by_sums = flags_from_sums(e ? -1.0 : 1.0, d ? -1.0 : 1.0, i ? -1.0 : 1.0);
    o.require(by_sums.erratic == e && by_sums.delayed == d && by_sums.irregular == i, tag + " flags");
    o.require(risk_level(by_sums) == want, tag + " level from sums");
    const auto full = assess_risk(combo_explanation(e, d, i), "a", "s", 0);
    o.require(full.level == want, tag + " level from attributions");
  }
  std::size_t fixtures = 0;
  for (const auto& fx : test::behavior_fixtures()) {
    o.require(assess_risk(fx.explanation, "a", "s", 0).level == fx.expected, "fixture " + fx.name);
    ++fixtures;
  }
  o.require(fixtures == 4, "four fixtures");
  o.detail << "8 combinations, " << fixtures << " fixtures";
}

// ---------------------------------------------------------------------------

void auc_oracle(Outcome& o) {
  Rng rng(77);
  std::size_t done = 0, tied = 0;
  while (done < 1000) {
    const std::size_t n = 2 + rng.below(199);  // 2..200
    const int levels = 1 + static_cast<int>(rng.below(12));
    std::vector<int> y(n);
    std::vector<double> s(n);
    int pos = 0;
    for (std::size_t k = 0; k < n; ++k) {
      y[k] = rng.bernoulli(0.2 + 0.6 * rng.uniform()) ? 1 : 0;
      pos += y[k];
      s[k] = static_cast<double>(rng.below(static_cast<std::uint64_t>(levels))) / levels;
    }
    if (pos == 0 || pos == static_cast<int>(n)) continue;
    std::set<double> distinct(s.begin(), s.end());
    tied += distinct.size() < n;
    const auto roc = roc_auc(y, s);
    const double brute = test::brute_force_auc(y, s).value();
    o.require(roc.auc == brute, "rank AUC on instance " + std::to_string(done));
    o.require(auc_score(y, s) == brute, "auc_score on instance " + std::to_string(done));
    ++done;
  }
  o.detail << done << " instances, " << tied << " with ties";
}

// ---------------------------------------------------------------------------
// Planted one-feature effects plus additive noise from other columns. The
// dependence curve is g(v) + mean(h), the baseline is mean g(x_f) + mean(h),
// so the crossing solves g(v) = mean g(x_f) in closed form.

void threshold_extraction(Outcome& o) {
  Rng rng(4242);
  constexpr std::size_t kCols = 5, kRows = 150, kGrid = 25;
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t feat = rng.below(kCols);
    const double lo = rng.uniform(-5, 0), hi = lo + rng.uniform(2, 20);
    Matrix x(kRows, kCols);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.uniform(lo, hi);
    }
    const double centre = rng.uniform(lo + 0.2 * (hi - lo), lo + 0.8 * (hi - lo));
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const bool logistic = t % 2 == 0;
    const double k = sign * rng.uniform(0.5, 4.0) / (hi - lo) * 10;
    const double a = sign * rng.uniform(0.1, 2.0);
    std::array<double, kCols> w{};
    for (auto& v : w) v = rng.normal(0, 0.05);
    w[feat] = 0;

    auto g = [&](double v) { return logistic ? 1 / (1 + std::exp(-k * (v - centre))) : a * std::pow(v - centre, 3); };
    auto g_inverse = [&](double target) {
      return logistic ? centre + std::log(target / (1 - target)) / k : centre + std::cbrt(target / a);
    };
    BatchPredictor f = [&](const Matrix& rows) {
      std::vector<double> out(static_cast<std::size_t>(rows.rows()));
      for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        double h = 0;
        for (std::size_t c = 0; c < kCols; ++c) h += w[c] * rows(r, static_cast<Eigen::Index>(c));
        out[static_cast<std::size_t>(r)] = g(rows(r, static_cast<Eigen::Index>(feat))) + h;
      }
      return out;
    };

    double mean_g = 0, x_min = x(0, feat), x_max = x(0, feat);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double v = x(r, static_cast<Eigen::Index>(feat));
      mean_g += g(v);
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    mean_g /= kRows;
    const double truth = g_inverse(mean_g);
    const double step = (x_max - x_min) / (kGrid - 1);

    const auto curve = partial_dependence_thresholds(f, x, feat, kGrid, "days_inactive");
    const std::string tag = "plant " + std::to_string(t);
    o.require(curve.thresholds.size() == 1, tag + " has one crossing, got " + std::to_string(curve.thresholds.size()));
    if (curve.thresholds.empty()) continue;
    const double err = std::abs(curve.thresholds.front() - truth);
    worst = std::max(worst, err / step);
    o.require(err <= step, tag + " crossing within one grid step");
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "50 plants, worst error %.3f grid steps", worst);
  o.detail << buf;
}

// ---------------------------------------------------------------------------
// The behavior table and the risk table, by display name.

const std::map<Behavior, std::vector<std::string>> kBehaviorTable = {
    {Behavior::Erratic, {"Structured Learning Plans", "Gamification Elements", "Increased Flexibility"}},
    {Behavior::Delayed, {"Motivational Messages", "Deadline Reminders", "Progressive Deadlines"}},
    {Behavior::Irregular, {"Self-Reflection Feedback", "Individualized Time Slots", "Adapted Quiz Structure"}},
    {Behavior::Engaged, {"Challenging Content", "Peer Mentorship", "Recognition of Achievement"}},
};

const std::map<RiskLevel, std::set<std::string>> kRiskTable = {
    {RiskLevel::High, {"Structured Learning Plans", "Motivational Messages", "Increased Flexibility"}},
    {RiskLevel::Medium, {"Gamification Elements", "Deadline Reminders", "Progressive Deadlines"}},
    {RiskLevel::Low, {"Self-Reflection Feedback", "Individualized Time Slots", "Adapted Quiz Structure"}},
};

RiskAssessment combo_assessment(bool e, bool d, bool i, Rng& rng) {
  const auto mag = [&] { return rng.uniform(1e-6, 1.0); };
  RiskAssessment a;
  a.attempt_id = "a";
  a.student_id = "s";
  a.flags = flags_from_sums(e ? -mag() : mag(), d ? -mag() : mag(), i ? -mag() : mag());
  a.level = risk_level(a.flags);
  a.model_prediction = rng.uniform();
  return a;
}

std::set<std::string> names_of(const InterventionPlan& p, const Catalog& c) {
  std::set<std::string> out;
  for (const auto& id : p.strategies) {
    const auto* s = c.find(id);
    out.insert(s ? s->name : "?" + id);
  }
  return out;
}

void intervention_catalog(Outcome& o) {
  const Catalog standard = Catalog::standard();
  const Catalog round = Catalog::from_json(nlohmann::json::parse(standard.to_json().dump()));
  o.require(round == standard, "catalog json round-trip");
  Rng rng(9);
  std::size_t pairs = 0, rows = 0;
  for (const Catalog* c : {&standard, &round}) {
    for (const auto& [behavior, names] : kBehaviorTable) {
      std::set<std::string> emitted;
      for (int bits = 0; bits < 8; ++bits) {
        const bool e = bits & 1, d = bits & 2, i = bits & 4;
        const bool has = behavior == Behavior::Erratic     ? e
                         : behavior == Behavior::Delayed   ? d
                         : behavior == Behavior::Irregular ? i
                                                           : bits == 0;
        if (!has) continue;
        const auto got = names_of(recommend_interventions(combo_assessment(e, d, i, rng), *c), *c);
        emitted.insert(got.begin(), got.end());
      }
      for (const auto& name : names) {
        bool paired = false;
        for (const auto* s : c->for_behavior(behavior)) paired = paired || s->name == name;
        o.require(paired, name + " listed under " + std::string(to_string(behavior)));
        o.require(emitted.count(name) == 1, name + " emitted for a " + std::string(to_string(behavior)) + " case");
        ++pairs;
      }
    }
    for (int bits = 0; bits < 8; ++bits) {
      const bool e = bits & 1, d = bits & 2, i = bits & 4;
      const auto a = combo_assessment(e, d, i, rng);
      const auto plan = recommend_interventions(a, *c);
      const auto got = names_of(plan, *c);
      if (a.level == RiskLevel::Engaged) {
        const auto& eng = kBehaviorTable.at(Behavior::Engaged);
        o.require(got == std::set<std::string>(eng.begin(), eng.end()), "engaged plan");
      } else {
        o.require(got == kRiskTable.at(a.level), "combo " + std::to_string(bits) + " plan set");
        ++rows;
      }
    }
  }
  std::size_t highs = 0;
  for (int t = 0; t < 500; ++t) {
    const auto a = combo_assessment(true, true, rng.bernoulli(0.5), rng);
    const auto plan = recommend_interventions(a, standard);
    o.require(plan.level == RiskLevel::High && plan.timing == Timing::Immediate, "high plan timing");
    ++highs;
  }
  o.detail << pairs << " pair checks, " << rows << " risk-row checks, " << highs << " high plans";
}

// ---------------------------------------------------------------------------

void determinism(Outcome& o) {
  test::TempDir dir("acceptance-determinism");
  CohortSpec spec;
  spec.student_count = 60;
  spec.seed = 11;
  write_cohort(generate_cohort(spec), dir / "cohort");
  const nlohmann::json cfg = {{"data_dir", (dir / "cohort").string()}, {"seed", 11}};
  SnapshotStore a(dir / "store-a"), b(dir / "store-b");
  const auto ra = run_pipeline(pipeline_config_from_json(cfg), a);
  const auto rb = run_pipeline(pipeline_config_from_json(cfg), b);
  o.require(!ra.reused && !rb.reused, "both runs computed from scratch");
  o.require(ra.manifest.snapshot_id == rb.manifest.snapshot_id, "snapshot id");
  o.require(ra.manifest.artifacts == rb.manifest.artifacts, "artifact digests");
  o.require(ra.manifest.artifacts.size() >= 10, "artifact count");
  for (const auto& [name, digest] : ra.manifest.artifacts) {
    o.require(a.read_artifact(ra.manifest.snapshot_id, name) == b.read_artifact(rb.manifest.snapshot_id, name),
              name + " bytes");
  }
  o.require(a.verify(ra.manifest.snapshot_id).empty() && b.verify(rb.manifest.snapshot_id).empty(), "verify");
  o.detail << ra.manifest.artifacts.size() << " artifacts, snapshot " << ra.manifest.snapshot_id;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"metric identities vs published rates", 1, metric_identities},
      {"preprocess golden trace", 1, golden_trace},
      {"synthetic end-to-end NN", 600, synthetic_end_to_end},
      {"shapley axioms and kernel agreement", 120, shap_axioms},
      {"risk truth table and fixtures", 1, risk_truth_table},
      {"auc vs brute-force pairs", 30, auc_oracle},
      {"feature directions submit vs non-submit", 60, feature_directions},
      {"dependence threshold extraction", 30, threshold_extraction},
      {"intervention catalog", 1, intervention_catalog},
      {"pipeline determinism", 0, determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& c = criteria[i];
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.require(false, "runtime limit " + std::to_string(c.limit_seconds) + " s");
    }
    failed += !o.ok;
    std::printf("%s [%zu] %s (%.2f s) %s\n", o.ok ? "PASS" : "FAIL", i + 1, c.name.c_str(), secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
