#include "geolo/normals.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

namespace geolo {

namespace {

constexpr std::array<char, 8> kMagic{'G', 'L', 'N', 'O', 'R', 'M', 'A', 'L'};
constexpr std::size_t kHeaderBytes = 40;

template <typename T>
void put(std::vector<char>& buf, std::size_t offset, T value) {
  std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const std::vector<char>& buf, std::size_t offset) {
  T value;
  std::memcpy(&value, buf.data() + offset, sizeof(T));
  return value;
}

void check_matches(const PointCloudScan& scan, const RangeImage& img) {
  if (img.source_size() != scan.size()) {
    throw InvalidArgument("range image was built from a scan of " + std::to_string(img.source_size()) + " points, got " +
                          std::to_string(scan.size()));
  }
  const auto& idx = img.point_indices();
  for (std::size_t px = 0; px < idx.size(); ++px) {
    if (idx[px] < 0) continue;
    const auto col = static_cast<Eigen::Index>(px);
    if (img.channels().col(col).head<3>() != scan.points.col(static_cast<Eigen::Index>(idx[px]))) {
      throw InvalidArgument("range image does not belong to this scan (pixel " + std::to_string(px) + ")");
    }
  }
}

void normals_for_rows(const PointCloudScan& scan, const RangeImage& img, const NormalParams& params, int row_begin,
                      int row_end, NormalField& field) {
  Matrix3X<double> hood(3, (2 * params.half_window + 1) * (2 * params.half_window + 1));
  for (int v = row_begin; v < row_end; ++v) {
    for (int u = 0; u < img.width(); ++u) {
      if (!img.valid(v, u)) continue;
      const auto center = img.point_index(v, u);
      const double r_center = scan.ranges[center];

      Eigen::Index count = 0;
      hood.col(count++) = scan.points.col(center);
      for (const auto nb : pixel_neighborhood(img, u, v, params.half_window)) {
        if (std::abs(scan.ranges[nb] - r_center) <= params.alpha) hood.col(count++) = scan.points.col(nb);
      }
      if (count - 1 < params.min_valid_neighbors) continue;

      const auto n = pca_normal<double>(hood.leftCols(count));
      if (!n) continue;
      Vector3<double> normal = *n;
      if (normal.dot(scan.points.col(center)) > 0.0) normal = -normal;
      field.normals.col(center) = normal;
      field.valid[static_cast<std::size_t>(center)] = 1;
    }
  }
}

}  // namespace

void NormalParams::validate() const {
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (min_valid_neighbors < 3) throw InvalidArgument("min_valid_neighbors must be at least 3");
  if (half_window < 1) throw InvalidArgument("half_window must be positive");
}

std::size_t NormalField::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

NormalField NormalField::all_invalid(std::size_t n, const NormalParams& params) {
  NormalField field;
  field.normals = Matrix3X<double>::Zero(3, static_cast<Eigen::Index>(n));
  field.valid.assign(n, 0);
  field.params = params;
  return field;
}

NormalField compute_normals(const PointCloudScan& scan, const RangeImage& img, const NormalParams& params,
                            unsigned threads) {
  params.validate();
  check_matches(scan, img);
  NormalField field = NormalField::all_invalid(scan.size(), params);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(img.height()));
  if (threads <= 1) {
    normals_for_rows(scan, img, params, 0, img.height(), field);
    return field;
  }
  // each point owns its output slot, so row bands can run concurrently
  std::vector<std::jthread> workers;
  const int band = (img.height() + static_cast<int>(threads) - 1) / static_cast<int>(threads);
  for (int begin = 0; begin < img.height(); begin += band) {
    const int end = std::min(img.height(), begin + band);
    workers.emplace_back([&, begin, end] { normals_for_rows(scan, img, params, begin, end, field); });
  }
  return field;
}

void save_normals(const NormalField& field, const std::filesystem::path& path) {
  const std::size_t n = field.size();
  std::vector<char> buf(kHeaderBytes + n * 12 + (n + 7) / 8, 0);
  std::memcpy(buf.data(), kMagic.data(), kMagic.size());
  put<std::uint32_t>(buf, 8, kNormalsFormatVersion);
  put<std::uint32_t>(buf, 12, static_cast<std::uint32_t>(field.params.min_valid_neighbors));
  put<std::uint32_t>(buf, 16, static_cast<std::uint32_t>(field.params.half_window));
  put<std::uint32_t>(buf, 20, 0);
  put<double>(buf, 24, field.params.alpha);
  put<std::uint64_t>(buf, 32, n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool ok = field.is_valid(i);
    for (int k = 0; k < 3; ++k) {
      const float value = ok ? static_cast<float>(field.normals(k, static_cast<Eigen::Index>(i))) : 0.0f;
      put<float>(buf, kHeaderBytes + i * 12 + static_cast<std::size_t>(k) * 4, value);
    }
    if (ok) buf[kHeaderBytes + n * 12 + i / 8] |= static_cast<char>(1u << (i % 8));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write normals cache " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

NormalField load_normals(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open normals cache " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (buf.size() < kHeaderBytes || !std::equal(kMagic.begin(), kMagic.end(), buf.begin())) {
    throw FormatError(where + "not a normals cache (bad header)");
  }
  const auto version = get<std::uint32_t>(buf, 8);
  if (version != kNormalsFormatVersion) {
    throw FormatError(where + "unsupported normals format version " + std::to_string(version));
  }
  NormalParams params;
  params.min_valid_neighbors = static_cast<int>(get<std::uint32_t>(buf, 12));
  params.half_window = static_cast<int>(get<std::uint32_t>(buf, 16));
  params.alpha = get<double>(buf, 24);
  const auto n64 = get<std::uint64_t>(buf, 32);
  if (n64 > (buf.size() - kHeaderBytes) / 12) throw FormatError(where + "point count exceeds file size");
  const auto n = static_cast<std::size_t>(n64);
  if (buf.size() != kHeaderBytes + n * 12 + (n + 7) / 8) throw FormatError(where + "file length does not match point count");

  NormalField field = NormalField::all_invalid(n, params);
  for (std::size_t i = 0; i < n; ++i) {
    if (!((static_cast<unsigned char>(buf[kHeaderBytes + n * 12 + i / 8]) >> (i % 8)) & 1u)) continue;
    Vector3<double> normal;
    for (int k = 0; k < 3; ++k) normal[k] = get<float>(buf, kHeaderBytes + i * 12 + static_cast<std::size_t>(k) * 4);
    const double norm = normal.norm();
    if (!std::isfinite(norm) || norm < 0.5) throw FormatError(where + "corrupt normal at point " + std::to_string(i));
    field.normals.col(static_cast<Eigen::Index>(i)) = normal / norm;
    field.valid[i] = 1;
  }
  return field;
}

NormalField load_normals(const std::filesystem::path& path, const NormalParams& expected) {
  NormalField field = load_normals(path);
  if (!(field.params == expected)) {
    throw ValidationError(path.string() + ": cache was computed with different normal parameters");
  }
  return field;
}

}  // namespace geolo
