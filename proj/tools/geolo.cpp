// geolo: command-line front end for normals precomputation, scan-to-scan
// odometry, trajectory evaluation and the trainer bridge.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "geolo/bridge.hpp"
#include "geolo/config.hpp"
#include "geolo/evaluation.hpp"
#include "geolo/normals.hpp"
#include "geolo/odometry.hpp"
#include "geolo/range_image.hpp"
#include "geolo/scan_io.hpp"

namespace fs = std::filesystem;
using namespace geolo;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Thrown for bad user input (missing files, bad flag values); maps to exit 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Overrides {
  std::string config_path;
  std::optional<std::string> sensor;
  std::optional<double> alpha;
  std::optional<int> min_neighbors;
  std::optional<int> half_window;
  std::optional<double> lambda;
  bool no_p2n = false;
  bool no_n2n = false;
  bool strict_nk = false;
  std::optional<double> max_distance;
  bool no_max_distance = false;
  std::optional<int> max_iterations;
  std::optional<int> recorrespond_every;
  std::optional<std::string> initializer;
  std::optional<unsigned> threads;
  bool nondeterministic = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--threads", o.threads, "Worker threads");
  cmd->add_flag("--nondeterministic", o.nondeterministic, "Allow out-of-order bridge responses / parallel work");
}

void add_normal_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--sensor", o.sensor, "Sensor preset for the range image");
  cmd->add_option("--alpha", o.alpha, "Neighbor depth gate in meters");
  cmd->add_option("--min-neighbors", o.min_neighbors, "Minimum valid neighbors for a normal");
  cmd->add_option("--half-window", o.half_window, "Neighborhood half window in pixels");
}

void add_loss_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--lambda", o.lambda, "Point-to-plane weight");
  cmd->add_flag("--no-p2n", o.no_p2n, "Disable the point-to-plane term");
  cmd->add_flag("--no-n2n", o.no_n2n, "Disable the plane-to-plane term");
  cmd->add_flag("--strict-nk", o.strict_nk, "Divide by the source point count instead of the valid pair count");
  cmd->add_option("--max-distance", o.max_distance, "Correspondence distance gate in meters");
  cmd->add_flag("--no-max-distance", o.no_max_distance, "Disable the correspondence distance gate");
}

RunConfig resolve(const Overrides& o, bool optimizer_gate) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_run_config(o.config_path);
  if (o.sensor) cfg.sensor = *o.sensor;
  if (o.alpha) cfg.normals.alpha = *o.alpha;
  if (o.min_neighbors) cfg.normals.min_valid_neighbors = *o.min_neighbors;
  if (o.half_window) cfg.normals.half_window = *o.half_window;
  if (o.lambda) cfg.loss.lambda = *o.lambda;
  if (o.no_p2n) cfg.loss.p2n = false;
  if (o.no_n2n) cfg.loss.n2n = false;
  if (o.strict_nk) cfg.loss.strict_nk_denominator = true;
  auto& gate = optimizer_gate ? cfg.optimizer.max_distance : cfg.bridge_max_distance;
  if (o.max_distance) gate = *o.max_distance;
  if (o.no_max_distance) gate.reset();
  if (o.max_iterations) cfg.optimizer.max_iterations = *o.max_iterations;
  if (o.recorrespond_every) cfg.optimizer.recorrespond_every = *o.recorrespond_every;
  if (o.initializer) {
    if (*o.initializer == "identity") {
      cfg.optimizer.initializer = Initializer::identity;
    } else if (*o.initializer == "constant_velocity") {
      cfg.optimizer.initializer = Initializer::constant_velocity;
    } else {
      throw UsageError("unknown initializer '" + *o.initializer + "'");
    }
  }
  if (o.threads) cfg.threads = *o.threads;
  if (o.nondeterministic) cfg.deterministic_mode = false;
  cfg.optimizer.loss = cfg.loss;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

void require_dir(const fs::path& dir, const char* what) {
  std::error_code ec;
  if (dir.empty() || !fs::is_directory(dir, ec)) throw UsageError(std::string(what) + " is not a readable directory: " + dir.string());
}

void require_file(const fs::path& file, const char* what) {
  std::error_code ec;
  if (file.empty() || !fs::is_regular_file(file, ec)) throw UsageError(std::string(what) + " not found: " + file.string());
}

int cmd_normals(const Overrides& o, const fs::path& scans, fs::path out_dir) {
  RunConfig cfg = resolve(o, true);
  require_dir(scans, "scan directory");
  if (out_dir.empty()) out_dir = cfg.normals_dir.empty() ? scans : cfg.normals_dir;
  fs::create_directories(out_dir);

  const auto projection = cfg.projection();
  std::size_t files = 0, valid = 0, invalid = 0;
  for (const auto& path : list_scan_files(scans)) {
    const auto scan = load_kitti_bin(path);
    const auto field = compute_normals(scan, project(scan, projection), cfg.normals, cfg.threads);
    save_normals(field, out_dir / (path.stem().string() + ".normals"));
    ++files;
    valid += field.valid_count();
    invalid += field.size() - field.valid_count();
  }
  std::cout << "normals: scans=" << files << " valid=" << valid << " invalid=" << invalid << " out=" << out_dir.string()
            << "\n";
  return kExitOk;
}

class DirectoryFrames : public FrameSource {
 public:
  DirectoryFrames(std::vector<fs::path> scans, const RunConfig& cfg, fs::path normals_dir)
      : scans_(std::move(scans)), cfg_(cfg), normals_dir_(std::move(normals_dir)) {}

  std::size_t size() const override { return scans_.size(); }

  Frame load(std::size_t i) const override {
    Frame frame;
    frame.scan = load_kitti_bin(scans_[i]);
    frame.normals = load_normals(cache_path(i), cfg_.normals);
    if (frame.normals.size() != frame.scan.size()) {
      throw ValidationError(cache_path(i).string() + ": normals cache does not match its scan");
    }
    return frame;
  }

  fs::path cache_path(std::size_t i) const { return normals_dir_ / (scans_[i].stem().string() + ".normals"); }

 private:
  std::vector<fs::path> scans_;
  RunConfig cfg_;
  fs::path normals_dir_;
};

int cmd_odometry(const Overrides& o, const fs::path& scans, fs::path normals_dir, fs::path out) {
  RunConfig cfg = resolve(o, true);
  require_dir(scans, "scan directory");
  if (normals_dir.empty()) normals_dir = cfg.normals_dir.empty() ? scans : cfg.normals_dir;
  if (out.empty()) out = cfg.trajectory_out;
  if (out.empty()) throw UsageError("no output trajectory path given (--out)");

  DirectoryFrames frames(list_scan_files(scans), cfg, normals_dir);
  if (frames.size() < 2) throw UsageError("odometry needs at least 2 scans in " + scans.string());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    require_file(frames.cache_path(i), "normals cache (run `geolo normals` first)");
  }

  SequenceResult result;
  try {
    result = run_sequence(frames, cfg.optimizer);
  } catch (const SequenceError& e) {
    fs::path partial = out;
    partial += ".partial";
    write_trajectory(e.partial, partial);
    std::cerr << "error: " << e.what() << "\npartial trajectory (" << e.partial.size() << " poses) written to "
              << partial.string() << "\n";
    return kExitFailure;
  }
  write_trajectory(result.poses, out);

  auto ms = result.step_milliseconds;
  std::sort(ms.begin(), ms.end());
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  const double median = ms.size() % 2 ? ms[ms.size() / 2] : 0.5 * (ms[ms.size() / 2 - 1] + ms[ms.size() / 2]);
  std::cout << "odometry: frames=" << result.poses.size() << " out=" << out.string() << "\n";
  std::cout << "timing per pair [ms]: mean=" << mean << " median=" << median << " max=" << ms.back() << "\n";
  return kExitOk;
}

std::vector<double> parse_lengths(const std::string& spec, RotationUnit& unit, bool unit_given) {
  if (spec == "kitti") {
    if (!unit_given) unit = RotationUnit::deg_per_100m;
    return kitti_segment_lengths();
  }
  if (spec == "indoor") {
    if (!unit_given) unit = RotationUnit::deg_per_10m;
    return indoor_segment_lengths();
  }
  std::vector<double> lengths;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      lengths.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("bad segment length '" + item + "'");
    }
  }
  if (lengths.empty()) throw UsageError("no segment lengths given");
  return lengths;
}

int cmd_eval(const fs::path& gt_path, const fs::path& est_path, const std::string& lengths_spec,
             const std::string& unit_name, fs::path summary, const fs::path& deviations) {
  require_file(gt_path, "ground-truth trajectory");
  require_file(est_path, "estimated trajectory");
  RotationUnit unit = RotationUnit::deg_per_100m;
  if (!unit_name.empty()) {
    if (unit_name == "deg/100m") {
      unit = RotationUnit::deg_per_100m;
    } else if (unit_name == "deg/10m") {
      unit = RotationUnit::deg_per_10m;
    } else {
      throw UsageError("unknown rotation unit '" + unit_name + "'");
    }
  }
  const auto lengths = parse_lengths(lengths_spec, unit, !unit_name.empty());
  const auto gt = read_trajectory(gt_path).poses;
  const auto est = read_trajectory(est_path).poses;
  if (gt.size() != est.size()) {
    std::cerr << "error: trajectory length mismatch (" << gt.size() << " vs " << est.size() << " poses)\n";
    return kExitFailure;
  }
  const auto stats = relative_errors(gt, est, lengths, unit);
  std::cout << format_error_table(stats);
  if (summary.empty()) {
    summary = est_path;
    summary += ".summary.json";
  }
  std::ofstream(summary, std::ios::trunc) << format_error_summary_json(stats);
  if (!deviations.empty()) std::ofstream(deviations, std::ios::trunc) << format_deviation_table(pose_deviation_series(gt, est));
  return kExitOk;
}

std::vector<double> parse_numbers(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number in ") + what + ": '" + item + "'");
    }
  }
  if (values.size() != expected) throw UsageError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
  return values;
}

int cmd_loss(const Overrides& o, const fs::path& root, const std::string& source, const std::string& target,
             const std::string& q, const std::string& t) {
  RunConfig cfg = resolve(o, false);
  require_dir(root, "dataset root");
  cfg.dataset_root = root;
  ScanDataset dataset(cfg);
  nlohmann::json request;
  request["request_id"] = "loss";
  request["source_scan_id"] = source;
  request["target_scan_id"] = target;
  request["q"] = parse_numbers(q, 4, "--q");
  request["t"] = parse_numbers(t, 3, "--t");
  const auto response = handle_request(request, dataset);
  std::cout << response.dump() << "\n";
  if (!response.contains("error")) return kExitOk;
  return response["error"]["code"] == "unknown_scan" || response["error"]["code"] == "malformed_request" ? kExitUsage
                                                                                                          : kExitFailure;
}

int cmd_bridge(const Overrides& o, const fs::path& root, unsigned workers) {
  RunConfig cfg = resolve(o, false);
  require_dir(root, "dataset root");
  cfg.dataset_root = root;
  ScanDataset dataset(cfg);
  run_bridge(std::cin, std::cout, dataset, cfg.deterministic_mode ? 1u : std::max(1u, workers));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geolo: geometric LiDAR odometry and loss oracle"};
  app.require_subcommand(1);
  Overrides o;

  auto* normals = app.add_subcommand("normals", "Precompute normal caches for a scan directory");
  fs::path scans, out_dir, normals_dir, out_file;
  normals->add_option("--scans", scans, "Directory of KITTI .bin scans")->required();
  normals->add_option("--out", out_dir, "Output directory for .normals files (default: scan directory)");
  add_common(normals, o);
  add_normal_flags(normals, o);

  auto* odometry = app.add_subcommand("odometry", "Scan-to-scan odometry over a scan directory");
  odometry->add_option("--scans", scans, "Directory of KITTI .bin scans")->required();
  odometry->add_option("--normals", normals_dir, "Directory of .normals caches (default: scan directory)");
  odometry->add_option("--out", out_file, "Output trajectory file");
  odometry->add_option("--max-iterations", o.max_iterations, "Optimizer iterations per pair");
  odometry->add_option("--recorrespond-every", o.recorrespond_every, "Iterations between correspondence searches");
  odometry->add_option("--initializer", o.initializer, "identity | constant_velocity");
  add_common(odometry, o);
  add_normal_flags(odometry, o);
  add_loss_flags(odometry, o);

  auto* eval = app.add_subcommand("eval", "Relative pose error of an estimated trajectory");
  fs::path gt, est, summary, deviations;
  std::string lengths = "kitti", unit;
  eval->add_option("--gt", gt, "Ground-truth trajectory (KITTI pose format)")->required();
  eval->add_option("--est", est, "Estimated trajectory (KITTI pose format)")->required();
  eval->add_option("--lengths", lengths, "kitti | indoor | comma-separated meters");
  eval->add_option("--unit", unit, "deg/100m | deg/10m");
  eval->add_option("--summary", summary, "JSON summary output (default: <est>.summary.json)");
  eval->add_option("--deviations", deviations, "Per-frame step deviation table output");

  auto* loss = app.add_subcommand("loss", "One-shot loss and gradient for a scan pair");
  fs::path root;
  std::string source_id, target_id, q = "1,0,0,0", t = "0,0,0";
  loss->add_option("--root", root, "Dataset root with <id>.bin and <id>.normals")->required();
  loss->add_option("--source", source_id, "Source scan id")->required();
  loss->add_option("--target", target_id, "Target scan id")->required();
  loss->add_option("--q", q, "Quaternion w,x,y,z");
  loss->add_option("--t", t, "Translation x,y,z");
  add_common(loss, o);
  add_normal_flags(loss, o);
  add_loss_flags(loss, o);

  auto* bridge = app.add_subcommand("bridge", "Serve loss/gradient requests on stdin/stdout");
  unsigned workers = 1;
  bridge->add_option("--root", root, "Dataset root with <id>.bin and <id>.normals")->required();
  bridge->add_option("--workers", workers, "Worker threads (needs --nondeterministic)");
  add_common(bridge, o);
  add_normal_flags(bridge, o);
  add_loss_flags(bridge, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*normals) return cmd_normals(o, scans, out_dir);
    if (*odometry) return cmd_odometry(o, scans, normals_dir, out_file);
    if (*eval) return cmd_eval(gt, est, lengths, unit, summary, deviations);
    if (*loss) return cmd_loss(o, root, source_id, target_id, q, t);
    if (*bridge) return cmd_bridge(o, root, workers);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
