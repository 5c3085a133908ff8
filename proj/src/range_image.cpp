#include "geolo/range_image.hpp"

#include <algorithm>
#include <cmath>

namespace geolo {

namespace {

constexpr double kPi = std::numbers::pi;

double deg(double d) { return d * kPi / 180.0; }

}  // namespace

void ProjectionConfig::validate() const {
  if (height < 2) throw InvalidArgument("projection height must be at least 2");
  if (width < 4) throw InvalidArgument("projection width must be at least 4");
  if (!(fov_up - fov_down > 0.0)) throw InvalidArgument("fov_up must exceed fov_down");
}

RangeImage::RangeImage(const ProjectionConfig& cfg, std::size_t source_size)
    : cfg_(cfg),
      source_size_(source_size),
      channels_(Eigen::Matrix<double, 4, Eigen::Dynamic>::Zero(4, static_cast<Eigen::Index>(cfg.height) * cfg.width)),
      point_index_(static_cast<std::size_t>(cfg.height) * static_cast<std::size_t>(cfg.width), -1) {}

std::size_t RangeImage::valid_count() const {
  return static_cast<std::size_t>(std::count_if(point_index_.begin(), point_index_.end(), [](auto i) { return i >= 0; }));
}

void RangeImage::offer(int v, int u, std::int64_t index, const Vector3<double>& p, double range) {
  const Eigen::Index px = pixel(v, u);
  auto& slot = point_index_[static_cast<std::size_t>(px)];
  // nearest point wins; equal ranges keep the lower index
  if (slot >= 0) {
    const double held = channels_(3, px);
    if (range > held || (range == held && index > slot)) return;
  }
  slot = index;
  channels_.col(px) << p, range;
}

bool project_point(const ProjectionConfig& cfg, const Vector3<double>& p, PixelCoord& out) {
  const double r = p.norm();
  if (!(r > 0.0)) return false;
  const double elevation = std::asin(std::clamp(p.z() / r, -1.0, 1.0));
  if (elevation > cfg.fov_up || elevation < cfg.fov_down) return false;
  const double azimuth = std::atan2(p.y(), p.x());

  auto u = static_cast<long>(std::floor((azimuth + kPi) / (2.0 * kPi) * cfg.width));
  u %= cfg.width;
  if (u < 0) u += cfg.width;
  auto v = static_cast<long>(std::floor((cfg.fov_up - elevation) / (cfg.fov_up - cfg.fov_down) * cfg.height));
  v = std::clamp<long>(v, 0, cfg.height - 1);
  out = PixelCoord{static_cast<int>(v), static_cast<int>(u)};
  return true;
}

RangeImage project(const PointCloudScan& scan, const ProjectionConfig& cfg) {
  cfg.validate();
  RangeImage img(cfg, scan.size());
  for (std::size_t i = 0; i < scan.size(); ++i) {
    const Vector3<double> p = scan.point(i);
    PixelCoord px;
    if (!project_point(cfg, p, px)) continue;
    img.offer(px.v, px.u, static_cast<std::int64_t>(i), p, scan.ranges[static_cast<Eigen::Index>(i)]);
  }
  return img;
}

std::vector<std::int64_t> pixel_neighborhood(const RangeImage& img, int u, int v, int half_window) {
  if (half_window < 1) throw InvalidArgument("half_window must be positive");
  if (v < 0 || v >= img.height() || u < 0 || u >= img.width()) throw InvalidArgument("pixel outside image");
  if (!img.valid(v, u)) throw InvalidArgument("neighborhood requested around an empty pixel");

  const int W = img.width();
  // a window wider than the image would visit columns twice
  const int du_lo = -std::min(half_window, (W - 1) / 2);
  const int du_hi = std::min(half_window, W - 1 + du_lo);

  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>((2 * half_window + 1) * (2 * half_window + 1)));
  const int row_lo = std::max(0, v - half_window);
  const int row_hi = std::min(img.height() - 1, v + half_window);
  for (int row = row_lo; row <= row_hi; ++row) {
    for (int du = du_lo; du <= du_hi; ++du) {
      const int col = ((u + du) % W + W) % W;
      if (row == v && col == u) continue;
      const auto idx = img.point_index(row, col);
      if (idx >= 0) out.push_back(idx);
    }
  }
  return out;
}

ProjectionConfig sensor_preset(const std::string& name) {
  if (name == "vlp16") return ProjectionConfig{16, 720, deg(15.0), deg(-15.0)};
  if (name == "hdl64") return ProjectionConfig{64, 1024, deg(2.0), deg(-24.8)};
  throw InvalidArgument("unknown sensor preset '" + name + "'");
}

}  // namespace geolo
