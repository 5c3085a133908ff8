#pragma once

// Reference computations that share no code path with the library kernels.

#include <Eigen/Core>

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

namespace geolo::testing {

/// Rotation matrix of q / |q| (q in w, x, y, z order) written out explicitly.
inline Eigen::Matrix3d reference_rotation(const Eigen::Vector4d& q_raw) {
  const Eigen::Vector4d q = q_raw / q_raw.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),  //
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),   //
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

struct ReferenceLoss {
  double p2n = 0.0;
  double n2n = 0.0;
};

/// Mean point-to-plane and plane-to-plane terms over fixed pairs.
inline ReferenceLoss reference_loss(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& src_n,
                                    const Eigen::Matrix3Xd& tgt, const Eigen::Matrix3Xd& tgt_n,
                                    const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs,
                                    const Eigen::Vector4d& q, const Eigen::Vector3d& t) {
  const Eigen::Matrix3d R = reference_rotation(q);
  ReferenceLoss out;
  for (const auto& [s, g] : pairs) {
    const double e = (R * src.col(s) + t - tgt.col(g)).dot(tgt_n.col(g));
    out.p2n += e * e;
    out.n2n += (R * src_n.col(s) - tgt_n.col(g)).squaredNorm();
  }
  out.p2n /= static_cast<double>(pairs.size());
  out.n2n /= static_cast<double>(pairs.size());
  return out;
}

/// Central-difference gradient of lambda * p2n + n2n with respect to (q, t), pairs frozen.
inline Eigen::Matrix<double, 7, 1> reference_gradient(const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& src_n,
                                                      const Eigen::Matrix3Xd& tgt, const Eigen::Matrix3Xd& tgt_n,
                                                      const std::vector<std::pair<std::int64_t, std::int64_t>>& pairs,
                                                      const Eigen::Vector4d& q, const Eigen::Vector3d& t, double lambda,
                                                      bool use_p2n, bool use_n2n, double h) {
  auto total = [&](const Eigen::Matrix<double, 7, 1>& x) {
    const auto l = reference_loss(src, src_n, tgt, tgt_n, pairs, x.head<4>(), x.tail<3>());
    return (use_p2n ? lambda * l.p2n : 0.0) + (use_n2n ? l.n2n : 0.0);
  };
  Eigen::Matrix<double, 7, 1> x;
  x << q, t;
  Eigen::Matrix<double, 7, 1> g;
  for (int k = 0; k < 7; ++k) {
    Eigen::Matrix<double, 7, 1> xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    g[k] = (total(xp) - total(xm)) / (2 * h);
  }
  return g;
}

/// Linear-scan nearest neighbor with smallest-index tie-break.
inline std::pair<std::int64_t, double> brute_force_nearest(const Eigen::Matrix3Xd& pts, const Eigen::Vector3d& q) {
  std::int64_t best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double d = (pts.col(i) - q).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {best, best_d};
}

}  // namespace geolo::testing
