#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "geolo/geometry.hpp"
#include "geolo/kdtree.hpp"
#include "geolo/normals.hpp"
#include "geolo/scan_io.hpp"

namespace geolo {

/// Exact nearest-neighbor index over a target scan's points.
using SpatialIndex = KdTree<double>;

std::shared_ptr<const SpatialIndex> build_index(const PointCloudScan& target);

struct CorrespondencePair {
  std::int64_t source = -1;
  std::int64_t target = -1;
  double distance = 0.0;
};

/// One nearest-target match per source point, in source order.
struct CorrespondenceSet {
  std::vector<CorrespondencePair> pairs;
  std::vector<std::uint8_t> valid;
  std::optional<double> max_distance_used;
  std::size_t rejected_count = 0;         ///< pairs dropped by the distance gate
  std::size_t normal_rejected_count = 0;  ///< pairs dropped because an endpoint lacks a normal

  std::size_t valid_count() const;
};

CorrespondenceSet find_correspondences(const Eigen::Ref<const Matrix3X<double>>& transformed_source,
                                       const SpatialIndex& index, const NormalField& source_normals,
                                       const NormalField& target_normals, std::optional<double> max_distance);

struct LossOptions {
  double lambda = 1.0;
  bool p2n = true;
  bool n2n = true;
  /// Divide by the source point count instead of the number of valid pairs.
  bool strict_nk_denominator = false;
};

struct LossReport {
  double l_p2n = 0.0;
  double l_n2n = 0.0;
  double total = 0.0;
  double lambda = 1.0;
  std::size_t valid_pair_count = 0;
  bool p2n_enabled = true;
  bool n2n_enabled = true;
};

struct GradientReport {
  Vector4<double> d_total_d_q = Vector4<double>::Zero();
  Vector3<double> d_total_d_t = Vector3<double>::Zero();
  RelativeTransformd evaluated_at;
};

struct LossAndGradient {
  LossReport loss;
  GradientReport gradient;
};

/// Raw sums of the two geometric terms over a list of (source, target) pairs.
///
/// For each pair the source point s and normal m are moved by T = (q, t):
///   p2n residual  e = (R(q̄) s + t - s_b) · n_b
///   n2n residual  d = R(q̄) m - n_b
/// The sums of e² and |d|² and their derivatives with respect to the raw
/// quaternion and translation are accumulated in pair order.
template <typename Scalar>
struct TermSums {
  Scalar p2n = Scalar(0);
  Scalar n2n = Scalar(0);
  Vector4<Scalar> d_p2n_d_q = Vector4<Scalar>::Zero();
  Vector3<Scalar> d_p2n_d_t = Vector3<Scalar>::Zero();
  Vector4<Scalar> d_n2n_d_q = Vector4<Scalar>::Zero();
};

template <typename Scalar>
TermSums<Scalar> accumulate_terms(const Eigen::Ref<const Matrix3X<Scalar>>& source_points,
                                  const Eigen::Ref<const Matrix3X<Scalar>>& source_normals,
                                  const Eigen::Ref<const Matrix3X<Scalar>>& target_points,
                                  const Eigen::Ref<const Matrix3X<Scalar>>& target_normals,
                                  std::span<const std::pair<std::int64_t, std::int64_t>> pairs,
                                  const RelativeTransform<Scalar>& T, bool with_gradient) {
  TermSums<Scalar> sums;
  const Matrix3<Scalar> R = T.rotation();
  for (const auto& [si, ti] : pairs) {
    const Vector3<Scalar> s = source_points.col(si);
    const Vector3<Scalar> m = source_normals.col(si);
    const Vector3<Scalar> n = target_normals.col(ti);

    const Scalar e = (R * s + T.t() - target_points.col(ti)).dot(n);
    const Vector3<Scalar> d = R * m - n;
    sums.p2n += e * e;
    sums.n2n += d.squaredNorm();

    if (with_gradient) {
      sums.d_p2n_d_t += Scalar(2) * e * n;
      sums.d_p2n_d_q += Scalar(2) * e * (rotation_jacobian_wrt_quaternion<Scalar>(T.q(), s).transpose() * n);
      sums.d_n2n_d_q += Scalar(2) * (rotation_jacobian_wrt_quaternion<Scalar>(T.q(), m).transpose() * d);
    }
  }
  return sums;
}

/// Loss at T over the valid pairs of `corr`. Throws NoOverlapError if there are none.
LossReport compute_loss(const PointCloudScan& source, const NormalField& source_normals, const PointCloudScan& target,
                        const NormalField& target_normals, const CorrespondenceSet& corr, const RelativeTransformd& T,
                        const LossOptions& options = {});

/// Gradient of the total loss with respect to the raw (q, t), correspondences held fixed.
GradientReport compute_gradient(const PointCloudScan& source, const NormalField& source_normals,
                                const PointCloudScan& target, const NormalField& target_normals,
                                const CorrespondenceSet& corr, const RelativeTransformd& T,
                                const LossOptions& options = {});

/// compute_loss and compute_gradient in one pass.
LossAndGradient evaluate_loss(const PointCloudScan& source, const NormalField& source_normals,
                              const PointCloudScan& target, const NormalField& target_normals,
                              const CorrespondenceSet& corr, const RelativeTransformd& T, const LossOptions& options,
                              bool with_gradient);

/// Transforms the source by T, matches against `index` and evaluates loss and gradient.
struct PairEvaluation {
  CorrespondenceSet correspondences;
  LossAndGradient result;
};

PairEvaluation evaluate_pair(const PointCloudScan& source, const NormalField& source_normals,
                             const PointCloudScan& target, const NormalField& target_normals,
                             const SpatialIndex& index, const RelativeTransformd& T, const LossOptions& options,
                             std::optional<double> max_distance, bool with_gradient = true);

}  // namespace geolo
