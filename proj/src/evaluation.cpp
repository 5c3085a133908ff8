#include "geolo/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace geolo {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Matrix4<double> homogeneous(const PoseRecord& p) {
  Matrix4<double> m = Matrix4<double>::Identity();
  m.topLeftCorner<3, 3>() = p.rotation;
  m.topRightCorner<3, 1>() = p.translation;
  return m;
}

Matrix4<double> rigid_inverse(const Matrix4<double>& m) {
  Matrix4<double> inv = Matrix4<double>::Identity();
  inv.topLeftCorner<3, 3>() = m.topLeftCorner<3, 3>().transpose();
  inv.topRightCorner<3, 1>() = -(inv.topLeftCorner<3, 3>() * m.topRightCorner<3, 1>());
  return inv;
}

double unit_scale(RotationUnit unit) { return unit == RotationUnit::deg_per_100m ? 100.0 : 10.0; }

Vector3<double> roll_pitch_yaw(const Matrix3<double>& R) {
  const double pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  return {std::atan2(R(2, 1), R(2, 2)), pitch, std::atan2(R(1, 0), R(0, 0))};
}

/// Rotation angle of AᵀB via |A - B|_F = 2√2 sin(θ/2).
double chordal_angle(const Matrix3<double>& A, const Matrix3<double>& B) {
  return 2.0 * std::asin(std::min(1.0, (A - B).norm() / (2.0 * std::numbers::sqrt2)));
}

}  // namespace

std::vector<double> kitti_segment_lengths() { return {100, 200, 300, 400, 500, 600, 700, 800}; }
std::vector<double> indoor_segment_lengths() { return {5, 10, 25, 40, 60, 100}; }

std::string unit_label(RotationUnit unit) { return unit == RotationUnit::deg_per_100m ? "deg/100m" : "deg/10m"; }

std::vector<double> trajectory_path_lengths(const std::vector<PoseRecord>& gt) {
  if (gt.size() < 2) throw InvalidArgument("path lengths need at least 2 poses");
  std::vector<double> dist(gt.size(), 0.0);
  for (std::size_t i = 1; i < gt.size(); ++i) {
    dist[i] = dist[i - 1] + (gt[i].translation - gt[i - 1].translation).norm();
  }
  return dist;
}

SegmentErrorStats relative_errors(const std::vector<PoseRecord>& gt, const std::vector<PoseRecord>& est,
                                  const std::vector<double>& lengths, RotationUnit unit) {
  if (gt.size() != est.size()) {
    throw InvalidArgument("trajectory length mismatch: " + std::to_string(gt.size()) + " ground-truth vs " +
                          std::to_string(est.size()) + " estimated poses");
  }
  for (const double L : lengths) {
    if (!(L > 0.0)) throw InvalidArgument("segment lengths must be positive");
  }
  SegmentErrorStats stats;
  stats.r_rel_unit = unit;
  for (const double L : lengths) stats.per_length[L];
  if (gt.size() < 2) return stats;

  const auto dist = trajectory_path_lengths(gt);
  std::vector<Matrix4<double>> G;
  std::vector<Matrix4<double>> E;
  G.reserve(gt.size());
  E.reserve(est.size());
  for (std::size_t i = 0; i < gt.size(); ++i) {
    G.push_back(homogeneous(gt[i]));
    E.push_back(homogeneous(est[i]));
  }

  double t_sum = 0.0;
  double r_sum = 0.0;
  for (const double L : lengths) {
    LengthStats& row = stats.per_length[L];
    double t_len = 0.0;
    double r_len = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      // end frame index is monotone in the start frame
      j = std::max(j, i);
      while (j < gt.size() && dist[j] < dist[i] + L) ++j;
      if (j == gt.size()) break;

      const Matrix4<double> rel_gt = rigid_inverse(G[i]) * G[j];
      const Matrix4<double> rel_est = rigid_inverse(E[i]) * E[j];
      // |trans(inv(rel_est) * rel_gt)| = |t_gt - t_est| and the angle of R_estᵀ R_gt follows from
      // the chordal distance, which is exact at zero where acos of the trace is not
      const double t_err = (rel_gt.topRightCorner<3, 1>() - rel_est.topRightCorner<3, 1>()).norm() / L * 100.0;
      const double r_err = chordal_angle(rel_est.topLeftCorner<3, 3>(), rel_gt.topLeftCorner<3, 3>()) * kRadToDeg / L *
                           unit_scale(unit);
      t_len += t_err;
      r_len += r_err;
      ++row.segment_count;
    }
    if (row.segment_count > 0) {
      row.t_rel = t_len / static_cast<double>(row.segment_count);
      row.r_rel = r_len / static_cast<double>(row.segment_count);
    }
    t_sum += t_len;
    r_sum += r_len;
    stats.segment_count += row.segment_count;
  }
  if (stats.segment_count > 0) {
    stats.mean_t_rel = t_sum / static_cast<double>(stats.segment_count);
    stats.mean_r_rel = r_sum / static_cast<double>(stats.segment_count);
  }
  return stats;
}

std::vector<PoseDeviation> pose_deviation_series(const std::vector<PoseRecord>& a, const std::vector<PoseRecord>& b) {
  if (a.size() != b.size()) throw InvalidArgument("trajectory length mismatch");
  std::vector<PoseDeviation> out;
  for (std::size_t k = 1; k < a.size(); ++k) {
    const Matrix4<double> step_a = rigid_inverse(homogeneous(a[k - 1])) * homogeneous(a[k]);
    const Matrix4<double> step_b = rigid_inverse(homogeneous(b[k - 1])) * homogeneous(b[k]);
    PoseDeviation row;
    row.frame = k;
    row.d_translation = step_b.topRightCorner<3, 1>() - step_a.topRightCorner<3, 1>();
    const Matrix3<double> dR = step_a.topLeftCorner<3, 3>().transpose() * step_b.topLeftCorner<3, 3>();
    row.d_rotation = roll_pitch_yaw(dR);
    out.push_back(row);
  }
  return out;
}

std::string format_error_table(const SegmentErrorStats& stats) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%10s %12s %14s %10s\n", "length[m]", "t_rel[%]", ("r_rel[" + unit_label(stats.r_rel_unit) + "]").c_str(),
                "segments");
  out << line;
  for (const auto& [L, row] : stats.per_length) {
    std::snprintf(line, sizeof line, "%10g %12.6f %14.6f %10zu\n", L, row.t_rel, row.r_rel, row.segment_count);
    out << line;
  }
  std::snprintf(line, sizeof line, "%10s %12.6f %14.6f %10zu\n", "mean", stats.mean_t_rel, stats.mean_r_rel,
                stats.segment_count);
  out << line;
  return out.str();
}

std::string format_error_summary_json(const SegmentErrorStats& stats) {
  nlohmann::ordered_json j;
  j["r_rel_unit"] = unit_label(stats.r_rel_unit);
  j["mean_t_rel_percent"] = stats.mean_t_rel;
  j["mean_r_rel"] = stats.mean_r_rel;
  j["segment_count"] = stats.segment_count;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& [L, row] : stats.per_length) {
    rows.push_back({{"length_m", L}, {"t_rel_percent", row.t_rel}, {"r_rel", row.r_rel}, {"segment_count", row.segment_count}});
  }
  j["per_length"] = rows;
  return j.dump(2) + "\n";
}

std::string format_deviation_table(const std::vector<PoseDeviation>& series) {
  std::ostringstream out;
  out << "frame dx dy dz droll dpitch dyaw\n";
  char line[256];
  for (const auto& row : series) {
    std::snprintf(line, sizeof line, "%zu %.9g %.9g %.9g %.9g %.9g %.9g\n", row.frame, row.d_translation.x(),
                  row.d_translation.y(), row.d_translation.z(), row.d_rotation.x(), row.d_rotation.y(),
                  row.d_rotation.z());
    out << line;
  }
  return out.str();
}

}  // namespace geolo
