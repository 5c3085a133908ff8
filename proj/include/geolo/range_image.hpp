#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "geolo/scan_io.hpp"

namespace geolo {

/// Spherical projection geometry. Angles in radians; elevation is measured
/// from the sensor's horizontal plane, so fov_down < 0 < fov_up for most sensors.
struct ProjectionConfig {
  int height = 16;
  int width = 720;
  double fov_up = 15.0 * std::numbers::pi / 180.0;
  double fov_down = -15.0 * std::numbers::pi / 180.0;

  void validate() const;
};

/// Dense H x W (x, y, z, r) image holding the nearest return per pixel.
///
/// Pixel (v, u) lives in column v * width + u of `channels`. `point_index`
/// maps a pixel back to the column of the source scan, or -1 if empty.
class RangeImage {
 public:
  RangeImage() = default;
  RangeImage(const ProjectionConfig& cfg, std::size_t source_size);

  int height() const { return cfg_.height; }
  int width() const { return cfg_.width; }
  const ProjectionConfig& config() const { return cfg_; }
  std::size_t source_size() const { return source_size_; }

  Eigen::Index pixel(int v, int u) const { return static_cast<Eigen::Index>(v) * cfg_.width + u; }
  bool valid(int v, int u) const { return point_index_[static_cast<std::size_t>(pixel(v, u))] >= 0; }
  std::int64_t point_index(int v, int u) const { return point_index_[static_cast<std::size_t>(pixel(v, u))]; }
  Eigen::Vector4d channels(int v, int u) const { return channels_.col(pixel(v, u)); }

  const Eigen::Matrix<double, 4, Eigen::Dynamic>& channels() const { return channels_; }
  const std::vector<std::int64_t>& point_indices() const { return point_index_; }
  std::size_t valid_count() const;

  /// Stores point `index` of the source at (v, u) unless a nearer point already occupies it.
  void offer(int v, int u, std::int64_t index, const Vector3<double>& p, double range);

 private:
  ProjectionConfig cfg_;
  std::size_t source_size_ = 0;
  Eigen::Matrix<double, 4, Eigen::Dynamic> channels_;
  std::vector<std::int64_t> point_index_;
};

struct PixelCoord {
  int v = 0;
  int u = 0;
  bool operator==(const PixelCoord&) const = default;
};

/// Pixel a point falls on, or false if it lies outside the vertical field of view.
bool project_point(const ProjectionConfig& cfg, const Vector3<double>& p, PixelCoord& out);

RangeImage project(const PointCloudScan& scan, const ProjectionConfig& cfg);

/// Source indices of valid pixels in the (2h+1)^2 window around (v, u),
/// columns wrapping around the 360° image and rows cut at the image border.
/// The center pixel is excluded. Throws if the center pixel is empty.
std::vector<std::int64_t> pixel_neighborhood(const RangeImage& img, int u, int v, int half_window);

/// Named sensor layouts (vlp16, hdl64).
ProjectionConfig sensor_preset(const std::string& name);

}  // namespace geolo
