#include <algorithm>
#include <cstdlib>
#include <fstream>

#include "qs/digest.hpp"
#include "qs/error.hpp"
#include "qs/service.hpp"

namespace qs {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

bool valid_id(std::string_view id) {
  return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || c == '-';
  });
}

json read_index(const fs::path& root) {
  const auto p = root / "index.json";
  if (!fs::exists(p)) return json{{"snapshots", json::array()}};
  try {
    return json::parse(read_file(p));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, "corrupt store index: " + std::string(e.what()));
  }
}

}  // namespace

fs::path default_data_dir() {
  if (const char* env = std::getenv("QS_DATA_DIR"); env && *env) return fs::path(env);
  return fs::path("qs-data");
}

ordered_json SnapshotManifest::to_json() const {
  ordered_json j;
  j["snapshot_id"] = snapshot_id;
  j["input_digests"] = input_digests;
  j["config_digest"] = config_digest;
  j["model_id"] = model_id;
  j["artifacts"] = artifacts;
  j["created_at"] = created_at;
  return j;
}

SnapshotManifest SnapshotManifest::from_json(const json& j) {
  try {
    SnapshotManifest m;
    m.snapshot_id = j.at("snapshot_id").get<std::string>();
    m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.model_id = j.value("model_id", "");
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    m.created_at = j.value("created_at", "");
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Serialization, std::string("malformed manifest: ") + e.what());
  }
}

SnapshotStore::SnapshotStore(fs::path root) : root_(std::move(root)), write_lock_(std::make_shared<std::mutex>()) {}

fs::path SnapshotStore::snapshot_dir(std::string_view id) const { return root_ / "snapshots" / std::string(id); }

bool SnapshotStore::exists(std::string_view id) const {
  return valid_id(id) && fs::exists(snapshot_dir(id) / "manifest.json");
}

SnapshotManifest SnapshotStore::manifest(std::string_view id) const {
  if (!exists(id)) throw Error(ErrorCode::UnknownSnapshot, "no snapshot '" + std::string(id) + "'");
  return SnapshotManifest::from_json(json::parse(read_file(snapshot_dir(id) / "manifest.json")));
}

std::string SnapshotStore::read_artifact(std::string_view id, std::string_view name) const {
  if (!exists(id)) throw Error(ErrorCode::UnknownSnapshot, "no snapshot '" + std::string(id) + "'");
  return read_file(snapshot_dir(id) / std::string(name));
}

std::vector<std::string> SnapshotStore::list() const {
  std::vector<std::string> out;
  const json index = read_index(root_);
  for (const auto& e : index["snapshots"]) out.push_back(e.at("id").get<std::string>());
  return out;
}

std::optional<std::string> SnapshotStore::latest() const {
  auto ids = list();
  if (ids.empty()) return std::nullopt;
  return ids.back();
}

std::optional<std::string> SnapshotStore::snapshot_for_model(std::string_view model_id) const {
  std::optional<std::string> found;
  const json index = read_index(root_);
  for (const auto& e : index["snapshots"]) {
    if (e.value("model_id", "") == model_id) found = e.at("id").get<std::string>();
  }
  return found;
}

fs::path SnapshotStore::begin(std::string_view id) {
  if (!valid_id(id)) throw Error(ErrorCode::InvalidConfig, "bad snapshot id '" + std::string(id) + "'");
  fs::path staging = root_ / "snapshots" / (std::string(id) + ".partial");
  fs::remove_all(staging);
  fs::create_directories(staging);
  return staging;
}

SnapshotManifest SnapshotStore::commit(SnapshotManifest m) {
  std::lock_guard lock(*write_lock_);
  const fs::path staging = root_ / "snapshots" / (m.snapshot_id + ".partial");
  m.artifacts.clear();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(staging)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  for (const auto& f : files) {
    const auto name = f.filename().string();
    if (name == "manifest.json" || name == kDecisionLog) continue;
    m.artifacts[name] = sha256_file(f);
  }
  write_file(staging / "manifest.json", m.to_json().dump(2) + "\n");

  const fs::path final_dir = snapshot_dir(m.snapshot_id);
  fs::remove_all(final_dir);
  fs::rename(staging, final_dir);

  json index = read_index(root_);
  auto& list = index["snapshots"];
  for (auto it = list.begin(); it != list.end();) {
    it = it->value("id", "") == m.snapshot_id ? list.erase(it) : it + 1;
  }
  list.push_back({{"id", m.snapshot_id}, {"model_id", m.model_id}, {"created_at", m.created_at}});
  write_file(root_ / "index.json", index.dump(2) + "\n");
  return m;
}

std::vector<std::string> SnapshotStore::verify(std::string_view id) const {
  const auto m = manifest(id);
  std::vector<std::string> bad;
  for (const auto& [name, digest] : m.artifacts) {
    const auto p = snapshot_dir(id) / name;
    if (!fs::exists(p) || sha256_file(p) != digest) bad.push_back(name);
  }
  return bad;
}

std::vector<InstructorDecision> SnapshotStore::decisions(std::string_view id) const {
  if (!exists(id)) throw Error(ErrorCode::UnknownSnapshot, "no snapshot '" + std::string(id) + "'");
  const auto p = snapshot_dir(id) / kDecisionLog;
  if (!fs::exists(p)) return {};
  return PlanStore::parse_log(read_file(p));
}

void SnapshotStore::append_decision(std::string_view id, const InstructorDecision& d) {
  if (!exists(id)) throw Error(ErrorCode::UnknownSnapshot, "no snapshot '" + std::string(id) + "'");
  std::ofstream out(snapshot_dir(id) / kDecisionLog, std::ios::binary | std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append decision log");
  out << to_json(d).dump() << '\n';
  if (!out) throw Error(ErrorCode::Io, "short write to decision log");
}

}  // namespace qs
