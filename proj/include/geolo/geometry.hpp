#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

#include "geolo/errors.hpp"

namespace geolo {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
template <typename Scalar>
using Matrix34 = Eigen::Matrix<Scalar, 3, 4>;
template <typename Scalar>
using Matrix3X = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

/// Quaternions are stored as 4-vectors in (w, x, y, z) order throughout.
template <typename Scalar>
constexpr Scalar kMinQuaternionNorm = Scalar(1e-12);

template <typename Scalar>
Matrix3<Scalar> skew(const Vector3<Scalar>& v) {
  Matrix3<Scalar> m;
  m << Scalar(0), -v.z(), v.y(),  //
      v.z(), Scalar(0), -v.x(),   //
      -v.y(), v.x(), Scalar(0);
  return m;
}

/// Rotation matrix of q / |q|. Throws for |q| below kMinQuaternionNorm.
template <typename Scalar>
Matrix3<Scalar> rotation_matrix(const Vector4<Scalar>& q) {
  const Scalar norm = q.norm();
  if (!(norm >= kMinQuaternionNorm<Scalar>)) {
    throw DegenerateInputError("quaternion norm below 1e-12");
  }
  const Vector4<Scalar> u = q / norm;
  return Eigen::Quaternion<Scalar>(u[0], u[1], u[2], u[3]).toRotationMatrix();
}

/// Rigid transform as raw quaternion (w, x, y, z) plus translation.
///
/// The quaternion may be unnormalized, as emitted by a pose regressor. Every
/// geometric operation acts through the unit quaternion q / |q|, so the
/// transform represented is invariant to positive scaling of q.
template <typename Scalar>
class RelativeTransform {
 public:
  RelativeTransform() : q_(Scalar(1), Scalar(0), Scalar(0), Scalar(0)), t_(Vector3<Scalar>::Zero()) {}

  RelativeTransform(const Vector4<Scalar>& q, const Vector3<Scalar>& t) : q_(q), t_(t) {
    if (!q_.allFinite() || !t_.allFinite()) {
      throw DegenerateInputError("transform has non-finite parameters");
    }
    if (q_.squaredNorm() == Scalar(0)) {
      throw DegenerateInputError("zero quaternion");
    }
  }

  static RelativeTransform identity() { return RelativeTransform(); }

  static RelativeTransform from_translation(const Vector3<Scalar>& t) {
    return RelativeTransform(Vector4<Scalar>(Scalar(1), Scalar(0), Scalar(0), Scalar(0)), t);
  }

  static RelativeTransform from_axis_angle(const Vector3<Scalar>& axis, Scalar angle,
                                           const Vector3<Scalar>& t = Vector3<Scalar>::Zero()) {
    const Vector3<Scalar> a = axis.normalized();
    const Scalar s = std::sin(angle / 2);
    return RelativeTransform(Vector4<Scalar>(std::cos(angle / 2), s * a.x(), s * a.y(), s * a.z()), t);
  }

  /// Canonical representative with w >= 0.
  static RelativeTransform from_matrix(const Matrix3<Scalar>& rotation, const Vector3<Scalar>& t) {
    Eigen::Quaternion<Scalar> quat(rotation);
    quat.normalize();
    Vector4<Scalar> q(quat.w(), quat.x(), quat.y(), quat.z());
    if (q[0] < Scalar(0)) q = -q;
    return RelativeTransform(q, t);
  }

  const Vector4<Scalar>& q() const { return q_; }
  const Vector3<Scalar>& t() const { return t_; }

  Matrix3<Scalar> rotation() const { return rotation_matrix(q_); }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation();
    m.template topRightCorner<3, 1>() = t_;
    return m;
  }

  template <typename Other>
  RelativeTransform<Other> cast() const {
    return RelativeTransform<Other>(q_.template cast<Other>(), t_.template cast<Other>());
  }

 private:
  Vector4<Scalar> q_;
  Vector3<Scalar> t_;
};

using RelativeTransformd = RelativeTransform<double>;

template <typename Scalar>
RelativeTransform<Scalar> normalize(const RelativeTransform<Scalar>& T) {
  const Scalar norm = T.q().norm();
  if (!(norm >= kMinQuaternionNorm<Scalar>)) {
    throw DegenerateInputError("cannot normalize quaternion with norm below 1e-12");
  }
  return RelativeTransform<Scalar>(T.q() / norm, T.t());
}

/// R(q̄) p + t
template <typename Scalar>
Vector3<Scalar> apply(const RelativeTransform<Scalar>& T, const Vector3<Scalar>& p) {
  return T.rotation() * p + T.t();
}

/// Applies T to every column of a 3xN block.
template <typename Scalar>
Matrix3X<Scalar> apply_all(const RelativeTransform<Scalar>& T, const Eigen::Ref<const Matrix3X<Scalar>>& points) {
  return (T.rotation() * points).colwise() + T.t();
}

/// R(q̄) n, for direction vectors such as surface normals.
template <typename Scalar>
Vector3<Scalar> rotate_only(const RelativeTransform<Scalar>& T, const Vector3<Scalar>& n) {
  return T.rotation() * n;
}

/// A ∘ B with homogeneous-matrix semantics: apply(compose(A, B), p) = apply(A, apply(B, p)).
template <typename Scalar>
RelativeTransform<Scalar> compose(const RelativeTransform<Scalar>& A, const RelativeTransform<Scalar>& B) {
  const Vector4<Scalar> a = A.q().normalized();
  const Vector4<Scalar> b = B.q().normalized();
  const Eigen::Quaternion<Scalar> qa(a[0], a[1], a[2], a[3]);
  const Eigen::Quaternion<Scalar> qb(b[0], b[1], b[2], b[3]);
  Eigen::Quaternion<Scalar> qc = qa * qb;
  qc.normalize();
  Vector4<Scalar> q(qc.w(), qc.x(), qc.y(), qc.z());
  if (q[0] < Scalar(0)) q = -q;
  return RelativeTransform<Scalar>(q, A.rotation() * B.t() + A.t());
}

template <typename Scalar>
RelativeTransform<Scalar> inverse(const RelativeTransform<Scalar>& T) {
  const Vector4<Scalar> u = T.q().normalized();
  const Vector4<Scalar> conj(u[0], -u[1], -u[2], -u[3]);
  return RelativeTransform<Scalar>(conj, -(T.rotation().transpose() * T.t()));
}

/// d(R(q / |q|) p) / dq, a 3x4 matrix with columns ordered (w, x, y, z).
///
/// The derivative of the rotated point with respect to the unit quaternion
/// is chained with the normalization Jacobian (I - q̄ q̄ᵀ) / |q|, so the
/// result is orthogonal to q: scaling q never moves the point.
template <typename Scalar>
Matrix34<Scalar> rotation_jacobian_wrt_quaternion(const Vector4<Scalar>& q, const Vector3<Scalar>& p) {
  const Scalar norm = q.norm();
  if (!(norm >= kMinQuaternionNorm<Scalar>)) {
    throw DegenerateInputError("quaternion norm below 1e-12");
  }
  const Vector4<Scalar> u = q / norm;
  const Scalar w = u[0];
  const Vector3<Scalar> v = u.template tail<3>();

  // f(w, v) = (w² - vᵀv) p + 2 (vᵀp) v + 2 w (v × p)
  Matrix34<Scalar> d_unit;
  d_unit.col(0) = Scalar(2) * (w * p + v.cross(p));
  d_unit.template rightCols<3>() =
      Scalar(2) * (v.dot(p) * Matrix3<Scalar>::Identity() + v * p.transpose() - p * v.transpose() - w * skew<Scalar>(p));

  const Eigen::Matrix<Scalar, 4, 4> d_normalize = (Eigen::Matrix<Scalar, 4, 4>::Identity() - u * u.transpose()) / norm;
  return d_unit * d_normalize;
}

/// Rotation angle of a rotation matrix, acos((trace - 1) / 2) with the argument clamped to [-1, 1].
template <typename Scalar>
Scalar rotation_angle(const Matrix3<Scalar>& R) {
  const Scalar c = std::clamp((R.trace() - Scalar(1)) / Scalar(2), Scalar(-1), Scalar(1));
  return std::acos(c);
}

}  // namespace geolo
