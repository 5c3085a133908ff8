#pragma once

#include <map>
#include <string>
#include <vector>

#include "geolo/scan_io.hpp"

namespace geolo {

enum class RotationUnit { deg_per_100m, deg_per_10m };

struct LengthStats {
  double t_rel = 0.0;  ///< percent
  double r_rel = 0.0;  ///< degrees per RotationUnit
  std::size_t segment_count = 0;
};

struct SegmentErrorStats {
  std::map<double, LengthStats> per_length;
  double mean_t_rel = 0.0;
  double mean_r_rel = 0.0;
  std::size_t segment_count = 0;
  RotationUnit r_rel_unit = RotationUnit::deg_per_100m;
};

/// Segment lengths {100, 200, ..., 800} m.
std::vector<double> kitti_segment_lengths();
/// Segment lengths {5, 10, 25, 40, 60, 100} m, reported with deg/10m.
std::vector<double> indoor_segment_lengths();

std::string unit_label(RotationUnit unit);

/// Cumulative ground-truth path length at each frame, starting at 0.
std::vector<double> trajectory_path_lengths(const std::vector<PoseRecord>& gt);

/// Relative translational (%) and rotational error over every start frame and
/// segment length. The segment for start frame i ends at the first frame whose
/// path length reaches path[i] + L. Means average over all segments.
SegmentErrorStats relative_errors(const std::vector<PoseRecord>& gt, const std::vector<PoseRecord>& est,
                                  const std::vector<double>& lengths,
                                  RotationUnit unit = RotationUnit::deg_per_100m);

struct PoseDeviation {
  std::size_t frame = 0;
  Vector3<double> d_translation = Vector3<double>::Zero();  ///< meters
  Vector3<double> d_rotation = Vector3<double>::Zero();     ///< roll, pitch, yaw in radians
};

/// Per-frame deviation between the frame-to-frame steps of two trajectories.
/// Row k compares step (k-1 -> k); the translation deviation is
/// t_b - t_a and the rotation deviation is the roll/pitch/yaw of R_aᵀ R_b.
std::vector<PoseDeviation> pose_deviation_series(const std::vector<PoseRecord>& a, const std::vector<PoseRecord>& b);

/// Fixed-width table of per-length errors and overall means.
std::string format_error_table(const SegmentErrorStats& stats);
/// Structured JSON summary.
std::string format_error_summary_json(const SegmentErrorStats& stats);
/// Whitespace-separated columns: frame dx dy dz droll dpitch dyaw.
std::string format_deviation_table(const std::vector<PoseDeviation>& series);

}  // namespace geolo
