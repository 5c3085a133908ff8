#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "geolo/alignment.hpp"
#include "geolo/normals.hpp"
#include "geolo/odometry.hpp"
#include "geolo/range_image.hpp"

namespace geolo {

/// Every tunable of the command-line pipeline. Loaded from a JSON file and
/// then overridden flag by flag.
struct RunConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path normals_dir;  ///< defaults to dataset_root when empty
  std::string scan_format = "kitti_bin";
  std::string sensor = "hdl64";
  std::map<std::string, ProjectionConfig> sensor_presets;

  NormalParams normals;
  LossOptions loss;
  std::optional<double> bridge_max_distance;  ///< correspondence gate for loss/bridge, none by default
  OptimizerConfig optimizer;

  std::filesystem::path trajectory_out;
  std::filesystem::path summary_out;
  bool deterministic_mode = true;
  unsigned threads = 1;

  RunConfig();

  ProjectionConfig projection() const;
  std::filesystem::path normals_path_for(const std::string& scan_id) const;
  void validate() const;
};

/// Reads a JSON config; keys that are absent keep their defaults.
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_json(RunConfig& cfg, const std::string& json_text);

}  // namespace geolo
