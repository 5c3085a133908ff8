#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <vector>

#include "geolo/range_image.hpp"
#include "geolo/scan_io.hpp"

namespace geolo {

struct NormalParams {
  double alpha = 0.5;  ///< max |range(x_i) - range(x_nb)| for a neighbor to count, meters
  int min_valid_neighbors = 5;
  int half_window = 2;  ///< 2 -> 5x5 pixel window

  void validate() const;
  bool operator==(const NormalParams&) const = default;
};

/// Per-point unit normals, oriented toward the sensor origin (n · p <= 0).
struct NormalField {
  Matrix3X<double> normals;  ///< zero columns where invalid
  std::vector<std::uint8_t> valid;
  NormalParams params;

  std::size_t size() const { return valid.size(); }
  bool is_valid(std::size_t i) const { return valid[i] != 0; }
  std::size_t valid_count() const;
  static NormalField all_invalid(std::size_t n, const NormalParams& params = {});
};

/// Smallest-eigenvalue direction of the covariance of a point set, or nothing
/// when the set is degenerate (fewer than 3 points, collinear, or without a
/// distinct smallest eigenvalue: λ_min / λ_mid above `max_flatness_ratio`).
///
/// When the two smallest eigenvalues are within 1e-12 the candidate with
/// lexicographically smallest (|nx|, |ny|, |nz|) is returned.
template <typename Scalar>
std::optional<Vector3<Scalar>> pca_normal(const Eigen::Ref<const Matrix3X<Scalar>>& points,
                                          Scalar max_flatness_ratio = Scalar(0.8)) {
  if (points.cols() < 3) return std::nullopt;
  const Vector3<Scalar> mean = points.rowwise().mean();
  const Matrix3X<Scalar> centered = points.colwise() - mean;
  const Matrix3<Scalar> cov = centered * centered.transpose() / static_cast<Scalar>(points.cols());

  Eigen::SelfAdjointEigenSolver<Matrix3<Scalar>> solver(cov);
  if (solver.info() != Eigen::Success) return std::nullopt;
  const Vector3<Scalar> lambda = solver.eigenvalues();  // ascending
  const Matrix3<Scalar>& vecs = solver.eigenvectors();

  if (!(lambda[2] > Scalar(0))) return std::nullopt;
  if (lambda[1] <= std::numeric_limits<Scalar>::epsilon() * Scalar(16) * lambda[2]) return std::nullopt;  // rank < 2
  if (lambda[0] > max_flatness_ratio * lambda[1]) return std::nullopt;

  Vector3<Scalar> n = vecs.col(0);
  if (lambda[1] - lambda[0] <= Scalar(1e-12)) {
    const Vector3<Scalar> a = vecs.col(0).cwiseAbs();
    const Vector3<Scalar> b = vecs.col(1).cwiseAbs();
    if (std::lexicographical_compare(b.data(), b.data() + 3, a.data(), a.data() + 3)) n = vecs.col(1);
  }
  return n.normalized();
}

/// PCA normals over range-image neighborhoods with the depth-difference gate.
///
/// Only points that own a pixel in `img` can receive a normal. `threads` = 0
/// picks the hardware concurrency; the result does not depend on it.
NormalField compute_normals(const PointCloudScan& scan, const RangeImage& img, const NormalParams& params,
                            unsigned threads = 1);

// Cache file layout (little-endian):
//   0  char[8] "GLNORMAL"
//   8  u32     format version (1)
//  12  u32     min_valid_neighbors
//  16  u32     half_window
//  20  u32     reserved, 0
//  24  f64     alpha
//  32  u64     point count N
//  40  f32     N x (nx, ny, nz), zeros where invalid
//   .  u8      ceil(N / 8) validity bytes, point i at bit (i % 8) of byte i / 8
inline constexpr std::uint32_t kNormalsFormatVersion = 1;

void save_normals(const NormalField& field, const std::filesystem::path& path);
NormalField load_normals(const std::filesystem::path& path);
/// Also throws ValidationError when the stored parameters differ from `expected`.
NormalField load_normals(const std::filesystem::path& path, const NormalParams& expected);

}  // namespace geolo
