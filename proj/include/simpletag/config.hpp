#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "simpletag/model.hpp"
#include "simpletag/trainer.hpp"

namespace simpletag {

inline constexpr std::string_view kEnvPrefix = "SIMPLETAG_";

// Everything a training run needs besides data paths.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  int min_count = 1;

  // Throws ConfigError naming the key for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  // Resolved key/value pairs in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;
};

std::vector<std::string> config_keys();

// Flat `key = value` lines; '#' starts a comment. Errors name file and line.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
// Overrides any key whose SIMPLETAG_<KEY> variable is set.
void apply_env_overrides(RunConfig& config);
std::string format_config(const RunConfig& config);

// Resolved run description written beside every output.
struct RunManifest {
  RunConfig config;
  std::string command;
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string checkpoint_path;
  std::string out_path;
  std::string run_id;

  void save(const std::filesystem::path& path) const;
  static RunManifest load(const std::filesystem::path& path);
};

// 16 hex digits of FNV-1a over the resolved config and the named files' bytes.
std::string compute_run_id(const RunConfig& config, const std::vector<std::string>& files);

}  // namespace simpletag
