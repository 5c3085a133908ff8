#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "geolo/geometry.hpp"

namespace geolo {

/// One LiDAR revolution in the sensor frame. Column i of `points` has range `ranges[i]`.
struct PointCloudScan {
  Matrix3X<double> points;
  Eigen::VectorXd ranges;
  std::string source_id;

  std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
  Vector3<double> point(std::size_t i) const { return points.col(static_cast<Eigen::Index>(i)); }

  /// Builds a scan from raw points, dropping non-finite and zero-range returns.
  static PointCloudScan from_points(const Eigen::Ref<const Matrix3X<double>>& raw, std::string id = {});
};

struct PoseRecord {
  Matrix3<double> rotation = Matrix3<double>::Identity();
  Vector3<double> translation = Vector3<double>::Zero();
  std::size_t frame_index = 0;

  RelativeTransformd as_transform() const { return RelativeTransformd::from_matrix(rotation, translation); }
  static PoseRecord from_transform(const RelativeTransformd& T, std::size_t frame_index);
};

struct TrajectoryReadResult {
  std::vector<PoseRecord> poses;
  /// Frames whose rotation block drifted more than 1e-6 from orthonormal and was projected back onto SO(3).
  std::vector<std::size_t> reorthonormalized;
};

/// Reads a KITTI velodyne file: packed little-endian float32 (x, y, z, reflectance), no header.
PointCloudScan load_kitti_bin(const std::filesystem::path& path);

/// Writes points as KITTI velodyne binary with zero reflectance.
void save_kitti_bin(const PointCloudScan& scan, const std::filesystem::path& path);

/// One line per pose: the top 3x4 block of the homogeneous matrix, row-major.
std::string format_pose_line(const PoseRecord& pose);
void write_trajectory(const std::vector<PoseRecord>& poses, const std::filesystem::path& path);
TrajectoryReadResult read_trajectory(const std::filesystem::path& path);

/// Sorted list of *.bin files in a directory.
std::vector<std::filesystem::path> list_scan_files(const std::filesystem::path& dir);

}  // namespace geolo
