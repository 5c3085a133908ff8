#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "geolo/evaluation.hpp"
#include "geolo/scan_io.hpp"
#include "support/cli_runner.hpp"
#include "support/synthetic.hpp"

using namespace geolo;
using namespace geolo::testing;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = GEOLO_CLI_PATH;
constexpr double kDeg = std::numbers::pi / 180.0;

std::string q(const fs::path& p) { return shell_quote(p.string()); }

/// Writes a config whose "synthetic" preset matches the ray-cast pattern.
fs::path write_config(const fs::path& dir) {
  const auto pattern = structured_pattern();
  nlohmann::json j;
  j["sensor"] = "synthetic";
  j["sensor_presets"]["synthetic"] = {{"height", pattern.rows},
                                      {"width", pattern.cols},
                                      {"fov_up_deg", pattern.elevation_top / kDeg},
                                      {"fov_down_deg", pattern.elevation_bottom / kDeg}};
  const auto path = dir / "geolo.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

/// Scans 000000.bin ... taken along `step` applied repeatedly.
void write_sequence(const fs::path& dir, int frames, const RelativeTransformd& step) {
  fs::create_directories(dir);
  auto pose = RelativeTransformd::identity();
  for (int k = 0; k < frames; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "%06d.bin", k);
    save_kitti_bin(ray_cast(structured_scene(), structured_pattern(), pose), dir / name);
    pose = compose(pose, step);
  }
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  TempDir tmp("cli-usage");
  CHECK(run_cli(kCli, "", tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "frobnicate", tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "normals --scans " + q(tmp.path() / "missing"), tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "eval --gt " + q(tmp.path() / "a.txt") + " --est " + q(tmp.path() / "b.txt"), tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "normals --scans " + q(tmp.path()) + " --config " + q(tmp.path() / "none.json"), tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "--help", tmp.path()).exit_code == 0);
}

TEST_CASE("normals, odometry and eval on a synthetic sequence") {
  TempDir tmp("cli-pipeline");
  const auto cfg = write_config(tmp.path());
  const auto scans = tmp.path() / "scans";
  const auto step = RelativeTransformd::from_axis_angle({0, 0, 1}, 1 * kDeg, {0.2, 0.0, 0.0});
  write_sequence(scans, 10, step);

  const auto normals = run_cli(kCli, "normals --config " + q(cfg) + " --scans " + q(scans), tmp.path());
  REQUIRE(normals.exit_code == 0);
  CHECK(normals.out.find("normals: scans=10") != std::string::npos);
  for (const auto& scan : list_scan_files(scans)) {
    auto cache = scan;
    cache.replace_extension(".normals");
    CHECK(fs::is_regular_file(cache));
  }
  const auto first_cache = read_file(scans / "000000.normals");
  REQUIRE(run_cli(kCli, "normals --config " + q(cfg) + " --scans " + q(scans), tmp.path()).exit_code == 0);
  CHECK(read_file(scans / "000000.normals") == first_cache);

  const auto traj = tmp.path() / "est.txt";
  const auto odo = run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(traj), tmp.path());
  REQUIRE(odo.exit_code == 0);
  CHECK(odo.out.find("timing per pair [ms]: mean=") != std::string::npos);
  const auto text = read_file(traj);
  CHECK(count_lines(text) == 10);
  const auto est = read_trajectory(traj).poses;
  auto truth = RelativeTransformd::identity();
  std::vector<PoseRecord> gt;
  for (std::size_t k = 0; k < est.size(); ++k) {
    gt.push_back(PoseRecord::from_transform(truth, k));
    CHECK((est[k].translation - truth.t()).norm() < 0.01 * static_cast<double>(k) + 1e-9);
    truth = compose(truth, step);
  }

  // determinism: a second run produces the identical file
  const auto traj2 = tmp.path() / "est2.txt";
  REQUIRE(run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(traj2), tmp.path()).exit_code == 0);
  CHECK(read_file(traj2) == text);

  const auto gt_path = tmp.path() / "gt.txt";
  write_trajectory(gt, gt_path);
  const auto ev = run_cli(kCli, "eval --gt " + q(gt_path) + " --est " + q(traj) + " --lengths 1,2 --unit deg/10m --deviations " +
                                    q(tmp.path() / "dev.txt"),
                          tmp.path());
  REQUIRE(ev.exit_code == 0);
  CHECK(ev.out.find("deg/10m") != std::string::npos);
  const auto summary = nlohmann::json::parse(read_file(tmp.path() / "est.txt.summary.json"));
  CHECK(summary["r_rel_unit"] == "deg/10m");
  CHECK(summary["per_length"].size() == 2);
  CHECK(count_lines(read_file(tmp.path() / "dev.txt")) == 10);  // header plus 9 steps
}

TEST_CASE("odometry needs caches and at least two scans") {
  TempDir tmp("cli-odo");
  const auto cfg = write_config(tmp.path());
  const auto scans = tmp.path() / "scans";
  write_sequence(scans, 2, RelativeTransformd::identity());
  const auto out = tmp.path() / "t.txt";
  CHECK(run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(out), tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans), tmp.path()).exit_code == 2);

  REQUIRE(run_cli(kCli, "normals --config " + q(cfg) + " --scans " + q(scans), tmp.path()).exit_code == 0);
  const auto run = run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(out), tmp.path());
  REQUIRE(run.exit_code == 0);
  // static platform: both poses are identity
  for (const auto& p : read_trajectory(out).poses) {
    CHECK(p.translation.norm() < 1e-6);
    CHECK((p.rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
  }

  fs::remove(scans / "000001.bin");
  CHECK(run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(out), tmp.path()).exit_code == 2);
}

TEST_CASE("a failing pair writes the partial trajectory") {
  TempDir tmp("cli-partial");
  const auto cfg = write_config(tmp.path());
  const auto scans = tmp.path() / "scans";
  write_sequence(scans, 3, RelativeTransformd::identity());
  // frame 2 is moved 1 km away, beyond any correspondence gate
  auto far = load_kitti_bin(scans / "000002.bin");
  far.points.row(0).array() += 1000.0;
  save_kitti_bin(far, scans / "000002.bin");
  REQUIRE(run_cli(kCli, "normals --config " + q(cfg) + " --scans " + q(scans), tmp.path()).exit_code == 0);

  const auto out = tmp.path() / "t.txt";
  const auto run = run_cli(kCli, "odometry --config " + q(cfg) + " --scans " + q(scans) + " --out " + q(out), tmp.path());
  CHECK(run.exit_code == 1);
  CHECK(run.err.find("frame 2") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  const auto partial = read_trajectory(tmp.path() / "t.txt.partial").poses;
  CHECK(partial.size() == 2);
}

TEST_CASE("eval exact cases") {
  TempDir tmp("cli-eval");
  std::vector<PoseRecord> gt, scaled;
  for (std::size_t k = 0; k <= 1000; ++k) {
    PoseRecord p;
    p.frame_index = k;
    p.translation = Eigen::Vector3d(static_cast<double>(k), 0, 0);
    gt.push_back(p);
    p.translation *= 1.01;
    scaled.push_back(p);
  }
  write_trajectory(gt, tmp.path() / "gt.txt");
  write_trajectory(scaled, tmp.path() / "scaled.txt");

  const auto same = run_cli(kCli, "eval --gt " + q(tmp.path() / "gt.txt") + " --est " + q(tmp.path() / "gt.txt") + " --summary " +
                                      q(tmp.path() / "same.json"),
                            tmp.path());
  REQUIRE(same.exit_code == 0);
  const auto zero = nlohmann::json::parse(read_file(tmp.path() / "same.json"));
  CHECK(zero["mean_t_rel_percent"].get<double>() == 0.0);
  CHECK(zero["mean_r_rel"].get<double>() == 0.0);

  REQUIRE(run_cli(kCli, "eval --gt " + q(tmp.path() / "gt.txt") + " --est " + q(tmp.path() / "scaled.txt"), tmp.path()).exit_code == 0);
  const auto s = nlohmann::json::parse(read_file(tmp.path() / "scaled.txt.summary.json"));
  for (const auto& row : s["per_length"]) CHECK(std::abs(row["t_rel_percent"].get<double>() - 1.0) <= 1e-6);
  CHECK(s["per_length"][0]["segment_count"] == 901);

  gt.pop_back();
  write_trajectory(gt, tmp.path() / "short.txt");
  CHECK(run_cli(kCli, "eval --gt " + q(tmp.path() / "short.txt") + " --est " + q(tmp.path() / "scaled.txt"), tmp.path()).exit_code == 1);
  std::ofstream(tmp.path() / "bad.txt") << "1 0 0\n";
  CHECK(run_cli(kCli, "eval --gt " + q(tmp.path() / "bad.txt") + " --est " + q(tmp.path() / "scaled.txt"), tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "eval --gt " + q(tmp.path() / "gt.txt") + " --est " + q(tmp.path() / "gt.txt") + " --lengths x", tmp.path()).exit_code == 2);
}

TEST_CASE("loss one-shot and bridge agree") {
  TempDir tmp("cli-loss");
  const auto cfg = write_config(tmp.path());
  const auto root = tmp.path() / "scans";
  write_sequence(root, 2, RelativeTransformd::from_translation({0.3, 0, 0}));
  REQUIRE(run_cli(kCli, "normals --config " + q(cfg) + " --scans " + q(root), tmp.path()).exit_code == 0);

  const auto one = run_cli(kCli, "loss --config " + q(cfg) + " --root " + q(root) + " --source 000001 --target 000000 --t 0.1,0,0",
                           tmp.path());
  REQUIRE(one.exit_code == 0);
  const auto shot = nlohmann::json::parse(one.out);
  CHECK(shot["valid_pairs"].get<int>() > 0);

  const auto requests = tmp.path() / "requests.jsonl";
  {
    std::ofstream r(requests);
    r << R"({"request_id": 1, "source_scan_id": "000001", "target_scan_id": "000000", "q": [1, 0, 0, 0], "t": [0.1, 0, 0]})" << "\n";
    r << R"({"request_id": 2, "source_scan_id": "missing", "target_scan_id": "000000", "q": [1, 0, 0, 0], "t": [0, 0, 0]})" << "\n";
    r << "garbage\n";
  }
  const auto bridge = run_cli(kCli, "bridge --config " + q(cfg) + " --root " + q(root), tmp.path(), requests);
  REQUIRE(bridge.exit_code == 0);
  std::istringstream lines(bridge.out);
  std::string line;
  REQUIRE(std::getline(lines, line));
  const auto first = nlohmann::json::parse(line);
  CHECK(first["request_id"] == 1);
  CHECK(first["loss_total"].get<double>() == shot["loss_total"].get<double>());
  CHECK(first["grad_q"] == shot["grad_q"]);
  REQUIRE(std::getline(lines, line));
  CHECK(nlohmann::json::parse(line)["error"]["code"] == "unknown_scan");
  REQUIRE(std::getline(lines, line));
  CHECK(nlohmann::json::parse(line)["error"]["code"] == "malformed_request");

  CHECK(run_cli(kCli, "loss --config " + q(cfg) + " --root " + q(root) + " --source nope --target 000000", tmp.path()).exit_code == 2);
  CHECK(run_cli(kCli, "loss --config " + q(cfg) + " --root " + q(root) + " --source 000001 --target 000000 --q 1,0,0", tmp.path()).exit_code == 2);
}
