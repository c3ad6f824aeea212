#pragma once

// File-backed snapshots, the end-to-end pipeline, the intervention queue and
// the /v1 JSON API.
//
// Store layout under the data directory:
//   index.json                       snapshot ids in creation order
//   snapshots/<id>/manifest.json     digests of inputs, config and artifacts
//   snapshots/<id>/<artifact>        immutable once the manifest exists
//   snapshots/<id>/decisions.jsonl   append-only, outside the digests
//   snapshots/<id>.partial/          artifacts of a failed run
//   synth/<digest>/                  generated cohorts

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "qs/intervene.hpp"
#include "qs/models.hpp"
#include "qs/risk.hpp"
#include "qs/time.hpp"

namespace qs {

// $QS_DATA_DIR when set, otherwise ./qs-data.
std::filesystem::path default_data_dir();

struct SnapshotManifest {
  std::string snapshot_id;
  std::map<std::string, std::string> input_digests;  // role -> sha256
  std::string config_digest;
  std::string model_id;
  std::map<std::string, std::string> artifacts;  // file name -> sha256
  std::string created_at;

  nlohmann::ordered_json to_json() const;
  static SnapshotManifest from_json(const nlohmann::json& j);
};

inline constexpr const char* kDecisionLog = "decisions.jsonl";

class SnapshotStore {
 public:
  explicit SnapshotStore(std::filesystem::path root = default_data_dir());

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path snapshot_dir(std::string_view id) const;

  bool exists(std::string_view id) const;
  SnapshotManifest manifest(std::string_view id) const;  // UnknownSnapshot
  std::string read_artifact(std::string_view id, std::string_view name) const;
  std::vector<std::string> list() const;
  std::optional<std::string> latest() const;
  std::optional<std::string> snapshot_for_model(std::string_view model_id) const;

  // Empty staging directory for a run; any earlier partial run is cleared.
  std::filesystem::path begin(std::string_view id);
  // Digests the staged files, moves them into place and indexes the snapshot.
  SnapshotManifest commit(SnapshotManifest manifest);

  // Artifacts whose current digest differs from the manifest.
  std::vector<std::string> verify(std::string_view id) const;

  std::vector<InstructorDecision> decisions(std::string_view id) const;
  void append_decision(std::string_view id, const InstructorDecision& decision);

  // Serializes pipeline commits and decision writes.
  std::mutex& write_lock() { return *write_lock_; }

 private:
  std::filesystem::path root_;
  std::shared_ptr<std::mutex> write_lock_;
};

struct PipelineInputs {
  std::filesystem::path quiz;
  std::filesystem::path logs;
  std::optional<std::filesystem::path> semesters;
  std::optional<std::filesystem::path> grades;
  std::optional<std::filesystem::path> catalog;
  std::optional<std::filesystem::path> model;  // skip training
};

enum class ExplainScope { Eval, All };

struct PipelineConfig {
  PipelineInputs inputs;
  int horizon_days = 28;
  TimeZone tz;

  ModelKind kind = ModelKind::NN;
  std::string grid = "default";  // "default", "none" or "custom"
  std::vector<nlohmann::json> custom_grid;
  nlohmann::json hyperparams = nlohmann::json::object();  // used with grid "none"
  int folds = 4;
  std::uint64_t seed = 0;

  // Held-out semester tags; empty means the last calendar semester when the
  // calendar has two or more, otherwise training data doubles as eval data.
  std::vector<std::string> test_semesters;

  ExplainScope explain_scope = ExplainScope::Eval;
  std::size_t background_size = 32;
  std::size_t kernel_budget = 256;
  std::size_t dependence_grid = 25;
  std::size_t dependence_rows = 256;
};

// Input paths are resolved against `base_dir`. InvalidConfig on unknown
// enum values or missing inputs.quiz / inputs.logs.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

// Canonical settings without input paths (inputs are digested by content).
nlohmann::ordered_json settings_json(const PipelineConfig& config);

struct PipelineResult {
  SnapshotManifest manifest;
  bool reused = false;
  nlohmann::json summary;
};

using StageObserver = std::function<void(std::string_view stage)>;

// ingest -> preprocess -> features -> train -> predict -> explain -> risk ->
// intervene -> report. Failures surface as StageError naming the stage.
PipelineResult run_pipeline(const PipelineConfig& config, SnapshotStore& store, const StageObserver& observe = {});

struct QueueEntry {
  std::string plan_id;
  std::string student_id;
  std::string attempt_id;
  int date_rel = 0;
  RiskLevel level = RiskLevel::Engaged;
  double count_shap_sum = 0;
  double inactive_shap = 0;
  double stat_shap_sum = 0;
  PlanStatus status = PlanStatus::Pending;
  std::vector<std::string> strategies;
  Timing timing = Timing::AtCourseCheckpoint;

  double total_shap() const { return count_shap_sum + inactive_shap + stat_shap_sum; }
};

// Severity, then most negative total of the three headline sums, then
// studentID, then planID.
void order_queue(std::vector<QueueEntry>& entries);

// Empty filter means High, Medium and Low. UnknownSnapshot.
std::vector<QueueEntry> intervention_queue(const SnapshotStore& store, std::string_view snapshot_id,
                                           std::span<const RiskLevel> filter = {});

nlohmann::ordered_json to_json(const QueueEntry& e);

// Non-empty lines of a JSONL artifact.
std::vector<std::string> split_lines(std::string_view text);

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
  std::string authorization;  // raw Authorization header
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

struct ApiOptions {
  std::string token;  // when set, requests need "Bearer <token>"
  std::filesystem::path base_dir;  // resolves relative input paths
};

// Stateless over the store apart from the pipeline job table.
class Api {
 public:
  explicit Api(SnapshotStore store, ApiOptions options = {});
  ~Api();
  Api(const Api&) = delete;
  Api& operator=(const Api&) = delete;

  ApiResponse handle(const ApiRequest& request);

  // Blocks until queued pipeline jobs are finished.
  void wait_idle();

 private:
  struct Jobs;
  SnapshotStore store_;
  ApiOptions options_;
  std::unique_ptr<Jobs> jobs_;
};

// Serves the API over HTTP until the process is stopped.
void serve(Api& api, const std::string& host, int port);

}  // namespace qs
