#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "geolo/errors.hpp"
#include "geolo/geometry.hpp"

namespace geolo {

template <typename Scalar>
struct Neighbor {
  std::int64_t index = -1;
  Scalar squared_distance = std::numeric_limits<Scalar>::infinity();
};

/// Exact nearest-neighbor index over a fixed 3D point set.
///
/// Among equidistant candidates the smallest point index is returned, so
/// queries are deterministic regardless of tree layout. Immutable after
/// construction; concurrent queries are safe.
template <typename Scalar>
class KdTree {
 public:
  static constexpr int kLeafSize = 12;

  explicit KdTree(Matrix3X<Scalar> points) : points_(std::move(points)) {
    if (points_.cols() == 0) throw InvalidArgument("cannot index an empty point set");
    order_.resize(static_cast<std::size_t>(points_.cols()));
    std::iota(order_.begin(), order_.end(), std::int64_t{0});
    nodes_.reserve(2 * order_.size() / kLeafSize + 1);
    build(0, static_cast<std::int64_t>(order_.size()));
  }

  Eigen::Index size() const { return points_.cols(); }
  const Matrix3X<Scalar>& points() const { return points_; }

  Neighbor<Scalar> nearest(const Vector3<Scalar>& query) const {
    Neighbor<Scalar> best;
    search(0, query, best);
    return best;
  }

 private:
  struct Node {
    // leaf: [begin, end) into order_; inner: children and split plane
    std::int64_t begin = 0;
    std::int64_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = -1;
    Scalar split = Scalar(0);
  };

  std::int32_t build(std::int64_t begin, std::int64_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Vector3<Scalar> lo = Vector3<Scalar>::Constant(std::numeric_limits<Scalar>::max());
    Vector3<Scalar> hi = Vector3<Scalar>::Constant(std::numeric_limits<Scalar>::lowest());
    for (auto k = begin; k < end; ++k) {
      lo = lo.cwiseMin(points_.col(order_[k]));
      hi = hi.cwiseMax(points_.col(order_[k]));
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all points coincide

    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::int64_t a, std::int64_t b) { return points_(axis, a) < points_(axis, b); });
    const Scalar split = points_(axis, order_[mid]);

    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    Node& node = nodes_[static_cast<std::size_t>(id)];
    node.axis = axis;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }

  void search(std::int32_t id, const Vector3<Scalar>& query, Neighbor<Scalar>& best) const {
    const Node& node = nodes_[static_cast<std::size_t>(id)];
    if (node.axis < 0) {
      for (auto k = node.begin; k < node.end; ++k) {
        const std::int64_t idx = order_[k];
        const Scalar d = (points_.col(idx) - query).squaredNorm();
        if (d < best.squared_distance || (d == best.squared_distance && idx < best.index)) {
          best.squared_distance = d;
          best.index = idx;
        }
      }
      return;
    }
    // left subtree holds coordinates <= split, right holds >= split
    const Scalar diff = query[node.axis] - node.split;
    const auto near = diff < Scalar(0) ? node.left : node.right;
    const auto far = diff < Scalar(0) ? node.right : node.left;
    search(near, query, best);
    // <= keeps equidistant points on the far side reachable for the index tie-break
    if (diff * diff <= best.squared_distance) search(far, query, best);
  }

  Matrix3X<Scalar> points_;
  std::vector<std::int64_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace geolo
