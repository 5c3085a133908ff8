#include "geolo/config.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace geolo {

namespace {

using nlohmann::json;

double deg_to_rad(double d) { return d * std::numbers::pi / 180.0; }

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void read_optional_distance(const json& j, const char* key, std::optional<double>& out) {
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) {
    out.reset();
  } else {
    out = j.at(key).get<double>();
  }
}

}  // namespace

RunConfig::RunConfig() {
  sensor_presets["vlp16"] = sensor_preset("vlp16");
  sensor_presets["hdl64"] = sensor_preset("hdl64");
}

ProjectionConfig RunConfig::projection() const {
  const auto it = sensor_presets.find(sensor);
  if (it == sensor_presets.end()) throw InvalidArgument("unknown sensor preset '" + sensor + "'");
  return it->second;
}

std::filesystem::path RunConfig::normals_path_for(const std::string& scan_id) const {
  const auto dir = normals_dir.empty() ? dataset_root : normals_dir;
  return dir / (scan_id + ".normals");
}

void RunConfig::validate() const {
  if (scan_format != "kitti_bin") throw InvalidArgument("unsupported scan format '" + scan_format + "'");
  projection().validate();
  normals.validate();
  optimizer.validate();
  if (bridge_max_distance && !(*bridge_max_distance > 0.0)) throw InvalidArgument("max_distance must be positive");
  if (!(loss.lambda >= 0.0) || !std::isfinite(loss.lambda)) throw InvalidArgument("lambda must be finite and non-negative");
}

void apply_config_json(RunConfig& cfg, const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  try {
    if (j.contains("dataset_root")) cfg.dataset_root = j.at("dataset_root").get<std::string>();
    if (j.contains("normals_dir")) cfg.normals_dir = j.at("normals_dir").get<std::string>();
    read_if(j, "scan_format", cfg.scan_format);
    read_if(j, "sensor", cfg.sensor);
    read_if(j, "deterministic_mode", cfg.deterministic_mode);
    read_if(j, "threads", cfg.threads);
    if (j.contains("trajectory_out")) cfg.trajectory_out = j.at("trajectory_out").get<std::string>();
    if (j.contains("summary_out")) cfg.summary_out = j.at("summary_out").get<std::string>();

    if (j.contains("sensor_presets")) {
      for (const auto& [name, p] : j.at("sensor_presets").items()) {
        ProjectionConfig pc;
        pc.height = p.at("height").get<int>();
        pc.width = p.at("width").get<int>();
        pc.fov_up = deg_to_rad(p.at("fov_up_deg").get<double>());
        pc.fov_down = deg_to_rad(p.at("fov_down_deg").get<double>());
        pc.validate();
        cfg.sensor_presets[name] = pc;
      }
    }
    if (j.contains("normals")) {
      const auto& n = j.at("normals");
      read_if(n, "alpha", cfg.normals.alpha);
      read_if(n, "min_valid_neighbors", cfg.normals.min_valid_neighbors);
      read_if(n, "half_window", cfg.normals.half_window);
    }
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      read_if(l, "lambda", cfg.loss.lambda);
      read_if(l, "p2n", cfg.loss.p2n);
      read_if(l, "n2n", cfg.loss.n2n);
      read_if(l, "strict_nk_denominator", cfg.loss.strict_nk_denominator);
      read_optional_distance(l, "max_distance", cfg.bridge_max_distance);
    }
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      auto& oc = cfg.optimizer;
      read_if(o, "max_iterations", oc.max_iterations);
      read_if(o, "loss_tolerance", oc.loss_tolerance);
      read_if(o, "step_tolerance", oc.step_tolerance);
      read_if(o, "recorrespond_every", oc.recorrespond_every);
      read_optional_distance(o, "max_distance", oc.max_distance);
      if (o.contains("initializer")) {
        const auto name = o.at("initializer").get<std::string>();
        if (name == "identity") {
          oc.initializer = Initializer::identity;
        } else if (name == "constant_velocity") {
          oc.initializer = Initializer::constant_velocity;
        } else {
          throw InvalidArgument("unknown initializer '" + name + "'");
        }
      }
      if (o.contains("line_search")) {
        const auto& ls = o.at("line_search");
        if (ls.contains("kind")) {
          const auto kind = ls.at("kind").get<std::string>();
          if (kind == "fixed_step") {
            oc.line_search.kind = LineSearch::Kind::fixed_step;
          } else if (kind == "backtracking") {
            oc.line_search.kind = LineSearch::Kind::backtracking;
          } else {
            throw InvalidArgument("unknown line search '" + kind + "'");
          }
        }
        read_if(ls, "step", oc.line_search.step);
        read_if(ls, "beta", oc.line_search.beta);
        read_if(ls, "c", oc.line_search.c);
        read_if(ls, "max_backtracks", oc.line_search.max_backtracks);
        read_if(ls, "barzilai_borwein", oc.line_search.barzilai_borwein);
      }
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  cfg.optimizer.loss = cfg.loss;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  RunConfig cfg;
  apply_config_json(cfg, text.str());
  return cfg;
}

}  // namespace geolo
