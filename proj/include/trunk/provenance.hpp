#pragma once

#include <chrono>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trunk/common.hpp"
#include "trunk/config.hpp"
#include "trunk/dataset.hpp"
#include "trunk/version.hpp"

namespace trunk {

// Run ledger: everything needed to attribute a divergence between two runs.
// Written before training starts; append-only afterwards.
struct RunManifest {
  std::string timestamp;
  std::string device;            // CPU model / accelerator identity
  std::string accelerator;       // "none" on pure-CPU builds
  std::map<std::string, std::string> runtime_versions;
  uint64_t seed = 0;
  bool deterministic_mode = true;
  std::string config_digest;
  std::map<std::string, std::string> dataset_checksums;
  std::string validation_carve;  // how the validation split was derived
  std::string artifact_version;
};

namespace detail {

inline std::string cpu_model() {
#ifdef __linux__
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto pos = line.find(':');
      if (pos != std::string::npos) return trim(line.substr(pos + 1));
    }
  }
#endif
  return "unavailable";
}

inline std::string iso8601_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace detail

// Resolves every field; anything it cannot determine is recorded as
// "unavailable" rather than omitted.
inline RunManifest capture(const ExperimentConfig& config,
                           const fs::path& data_dir = data_root()) {
  RunManifest m;
  m.timestamp = detail::iso8601_now();
  m.device = detail::cpu_model();
  m.accelerator = "none";
  m.runtime_versions["compiler"] =
#if defined(__clang__)
      std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
      std::string("gcc ") + __VERSION__;
#else
      "unavailable";
#endif
  m.runtime_versions["cxx_standard"] = std::to_string(__cplusplus);
  m.seed = config.seed;
  m.deterministic_mode = config.deterministic;
  m.config_digest = config_digest(config);
  m.validation_carve =
      "10% of train, shuffled by stream(seed=" + std::to_string(config.seed) +
      ", tag=validation-carve)";
  m.artifact_version = kVersion;

  // content hashes of the raw archives actually present on disk
  if (!config.dataset_name.empty() && config.dataset_name != "synthetic" &&
      fs::exists(data_dir)) {
    std::vector<std::string> stems;
    if (config.dataset_name == "svhn")
      stems = {"train_32x32.mat", "test_32x32.mat"};
    else if (config.dataset_name == "cifar10")
      stems = {"cifar-10-batches-bin/data_batch_1.bin",
               "cifar-10-batches-bin/test_batch.bin"};
    else if (config.dataset_name == "emnist")
      stems = {"emnist-balanced-train-images-idx3-ubyte.gz",
               "emnist-balanced-test-images-idx3-ubyte.gz"};
    for (const auto& s : stems) {
      fs::path p = data_dir / s;
      m.dataset_checksums[s] =
          fs::exists(p) ? sha256_file_hex(p) : "unavailable";
    }
  } else if (config.dataset_name == "synthetic") {
    m.dataset_checksums["synthetic"] =
        "seeded:" + std::to_string(config.seed);
  }
  return m;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json j;
  j["timestamp"] = m.timestamp;
  j["device"] = m.device;
  j["accelerator"] = m.accelerator;
  j["runtime_versions"] = m.runtime_versions;
  j["seed"] = m.seed;
  j["deterministic_mode"] = m.deterministic_mode;
  j["config_digest"] = m.config_digest;
  j["dataset_checksums"] = m.dataset_checksums;
  j["validation_carve"] = m.validation_carve;
  j["artifact_version"] = m.artifact_version;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.timestamp = j.at("timestamp").get<std::string>();
  m.device = j.at("device").get<std::string>();
  m.accelerator = j.at("accelerator").get<std::string>();
  for (const auto& [k, v] : j.at("runtime_versions").items())
    m.runtime_versions[k] = v.get<std::string>();
  m.seed = j.at("seed").get<uint64_t>();
  m.deterministic_mode = j.at("deterministic_mode").get<bool>();
  m.config_digest = j.at("config_digest").get<std::string>();
  for (const auto& [k, v] : j.at("dataset_checksums").items())
    m.dataset_checksums[k] = v.get<std::string>();
  m.validation_carve = j.value("validation_carve", "");
  m.artifact_version = j.at("artifact_version").get<std::string>();
  return m;
}

inline void save_manifest(const RunManifest& m, const fs::path& path) {
  write_text_file(path, manifest_to_json(m).dump(2) + "\n");
}

inline RunManifest load_manifest(const fs::path& path) {
  return manifest_from_json(nlohmann::json::parse(read_text_file(path)));
}

// Field-level diff excluding the timestamp; symmetric.
inline std::vector<std::string> diff(const RunManifest& a,
                                     const RunManifest& b) {
  std::vector<std::string> fields;
  if (a.device != b.device) fields.push_back("device");
  if (a.accelerator != b.accelerator) fields.push_back("accelerator");
  if (a.runtime_versions != b.runtime_versions)
    fields.push_back("runtime_versions");
  if (a.seed != b.seed) fields.push_back("seed");
  if (a.deterministic_mode != b.deterministic_mode)
    fields.push_back("deterministic_mode");
  if (a.config_digest != b.config_digest) fields.push_back("config_digest");
  if (a.dataset_checksums != b.dataset_checksums)
    fields.push_back("dataset_checksums");
  if (a.validation_carve != b.validation_carve)
    fields.push_back("validation_carve");
  if (a.artifact_version != b.artifact_version)
    fields.push_back("artifact_version");
  return fields;
}

}  // namespace trunk
