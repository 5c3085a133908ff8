#include <doctest.h>

#include <cmath>
#include <numbers>

#include "geolo/odometry.hpp"
#include "support/synthetic.hpp"

using namespace geolo;
using namespace geolo::testing;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct PairFixture {
  Frame target;
  Frame source;
};

/// Target seen from the origin, source seen from `sensor_motion`; the true
/// alignment of source onto target is therefore `sensor_motion` itself.
PairFixture structured_pair(const RelativeTransformd& sensor_motion) {
  const auto scene = structured_scene();
  const auto pattern = structured_pattern();
  const auto proj = projection_for(pattern);
  return {make_frame(ray_cast(scene, pattern, RelativeTransformd::identity(), "a"), proj),
          make_frame(ray_cast(scene, pattern, sensor_motion, "b"), proj)};
}

double rotation_error_deg(const RelativeTransformd& a, const RelativeTransformd& b) {
  return rotation_angle<double>(a.rotation().transpose() * b.rotation()) / kDeg;
}

AlignmentResult align_pair(const PairFixture& f, const OptimizerConfig& cfg = {}) {
  return align(f.source.scan, f.target.scan, f.source.normals, f.target.normals, cfg);
}

}  // namespace

TEST_CASE("structured scene has a realistic density") {
  const auto scan = ray_cast(structured_scene(), structured_pattern(), RelativeTransformd::identity());
  MESSAGE("structured scan points: " << scan.size());
  CHECK(scan.size() > 3000);
  CHECK(scan.size() < 9000);
}

TEST_CASE("identical scans converge immediately") {
  const auto f = structured_pair(RelativeTransformd::identity());
  const auto r = align(f.target.scan, f.target.scan, f.target.normals, f.target.normals, {});
  CHECK(r.converged);
  CHECK(r.iterations == 0);
  CHECK(r.final_loss.total < 1e-12);
  CHECK(r.transform.t().norm() == 0.0);
}

TEST_CASE("recovers a small known motion") {
  const auto truth = RelativeTransformd::from_axis_angle({0.2, -0.3, 1.0}, 3 * kDeg, {0.25, -0.15, 0.05});
  const auto f = structured_pair(truth);
  const auto r = align_pair(f);
  const double rot = rotation_error_deg(r.transform, truth);
  const double trans = (r.transform.t() - truth.t()).norm();
  MESSAGE("iterations " << r.iterations << " rot " << rot << " deg, trans " << trans << " m");
  CHECK(r.iterations <= 200);
  CHECK(rot < 0.5);
  CHECK(trans < 0.02);
  for (std::size_t i = 1; i < r.per_iteration_trace.size(); ++i)
    CHECK(r.per_iteration_trace[i].loss <= r.per_iteration_trace[i - 1].loss);
}

TEST_CASE("single iteration lowers the loss") {
  const auto truth = RelativeTransformd::from_axis_angle({0, 0, 1}, 2 * kDeg, {0.1, 0.05, 0});
  const auto f = structured_pair(truth);
  OptimizerConfig cfg;
  cfg.max_iterations = 1;
  const auto r = align_pair(f, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
  REQUIRE(r.per_iteration_trace.size() == 2);
  CHECK(r.per_iteration_trace[1].loss < r.per_iteration_trace[0].loss);
}

TEST_CASE("fixed-step descent also works on a near-aligned pair") {
  const auto truth = RelativeTransformd::from_translation({0.05, 0, 0});
  const auto f = structured_pair(truth);
  OptimizerConfig cfg;
  cfg.line_search.kind = LineSearch::Kind::fixed_step;
  cfg.line_search.step = 1e-4;
  cfg.max_iterations = 50;
  const auto r = align_pair(f, cfg);
  CHECK(r.final_loss.total < r.per_iteration_trace.front().loss);
}

TEST_CASE("invalid optimizer configs are rejected") {
  const auto f = structured_pair(RelativeTransformd::identity());
  OptimizerConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(align_pair(f, cfg), InvalidArgument);
  cfg = {};
  cfg.recorrespond_every = 0;
  CHECK_THROWS_AS(align_pair(f, cfg), InvalidArgument);
  cfg = {};
  cfg.line_search.beta = 1.0;
  CHECK_THROWS_AS(align_pair(f, cfg), InvalidArgument);
}

TEST_CASE("error grows with the initial perturbation") {
  // rotation error in units of 0.5 deg plus translation error in units of 2 cm
  const Eigen::Vector3d axis(0.2, -0.3, 1.0);
  const Eigen::Vector3d direction = Eigen::Vector3d(0.25, -0.15, 0.05).normalized();
  double prev = -1.0;
  for (const double deg : {1.0, 3.0, 5.0}) {
    const auto truth = RelativeTransformd::from_axis_angle(axis, deg * kDeg, direction * (0.1 * deg));
    const auto r = align_pair(structured_pair(truth));
    const double err = rotation_error_deg(r.transform, truth) / 0.5 + (r.transform.t() - truth.t()).norm() / 0.02;
    MESSAGE(deg << " deg -> normalized error " << err);
    CHECK(err > prev);
    prev = err;
  }
}

TEST_CASE("sequence of a static sensor stays at identity") {
  const auto scan = ray_cast(structured_scene(), structured_pattern(), RelativeTransformd::identity());
  const auto frame = make_frame(scan, projection_for(structured_pattern()));
  const InMemoryFrames frames(std::vector<Frame>(10, frame));
  const auto result = run_sequence(frames, {});
  REQUIRE(result.poses.size() == 10);
  for (std::size_t k = 0; k < 10; ++k) {
    CHECK(result.poses[k].frame_index == k);
    CHECK(result.poses[k].translation.norm() < 1e-6);
    CHECK((result.poses[k].rotation - Eigen::Matrix3d::Identity()).norm() < 1e-6);
  }
  CHECK(result.steps.size() == 9);
  CHECK(result.step_milliseconds.size() == 9);
}

TEST_CASE("sequence with constant motion accumulates poses") {
  const auto step = RelativeTransformd::from_axis_angle({0, 0, 1}, 1 * kDeg, {0.2, 0.0, 0.0});
  const auto scene = structured_scene();
  const auto pattern = structured_pattern();
  std::vector<Frame> frames;
  auto pose = RelativeTransformd::identity();
  std::vector<RelativeTransformd> truth;
  for (int k = 0; k < 5; ++k) {
    frames.push_back(make_frame(ray_cast(scene, pattern, pose), projection_for(pattern)));
    truth.push_back(pose);
    pose = compose(pose, step);
  }
  const auto result = run_sequence(InMemoryFrames(std::move(frames)), {});
  REQUIRE(result.poses.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    const auto est = result.poses[k].as_transform();
    CHECK((est.t() - truth[k].t()).norm() < 0.01 * static_cast<double>(k) + 1e-9);
    CHECK(rotation_error_deg(est, truth[k]) < 0.1 * static_cast<double>(k) + 1e-9);
  }
}

TEST_CASE("reversed sequence reproduces the inverse trajectory") {
  const auto step = RelativeTransformd::from_axis_angle({0.1, 0, 1}, 1.5 * kDeg, {0.15, 0.05, 0.0});
  const auto scene = structured_scene();
  const auto pattern = structured_pattern();
  std::vector<Frame> forward;
  auto pose = RelativeTransformd::identity();
  for (int k = 0; k < 4; ++k) {
    forward.push_back(make_frame(ray_cast(scene, pattern, pose), projection_for(pattern)));
    pose = compose(pose, step);
  }
  std::vector<Frame> backward(forward.rbegin(), forward.rend());
  const auto fwd = run_sequence(InMemoryFrames(forward), {});
  const auto bwd = run_sequence(InMemoryFrames(backward), {});
  // bwd pose j expresses frame (n-1-j) in frame n-1, so inv(fwd.back()) * fwd[n-1-j] should match it
  const auto last_inv = inverse(fwd.poses.back().as_transform());
  for (std::size_t j = 0; j < 4; ++j) {
    const auto expected = compose(last_inv, fwd.poses[3 - j].as_transform());
    const auto got = bwd.poses[j].as_transform();
    CHECK((got.t() - expected.t()).norm() < 0.02 * static_cast<double>(j) + 1e-9);
    CHECK(rotation_error_deg(got, expected) < 0.2 * static_cast<double>(j) + 1e-9);
  }
}

TEST_CASE("sequence input validation") {
  CHECK_THROWS_AS(run_sequence(InMemoryFrames({}), {}), InvalidArgument);
  const auto scan = ray_cast(structured_scene(), structured_pattern(), RelativeTransformd::identity());
  CHECK_THROWS_AS(run_sequence(InMemoryFrames({make_frame(scan, projection_for(structured_pattern()))}), {}),
                  InvalidArgument);
}
