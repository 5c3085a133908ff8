#include "geolo/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace geolo {

namespace {

void check_sizes(const PointCloudScan& source, const NormalField& source_normals, const PointCloudScan& target,
                 const NormalField& target_normals) {
  if (source_normals.size() != source.size()) throw InvalidArgument("source normals do not match the source scan");
  if (target_normals.size() != target.size()) throw InvalidArgument("target normals do not match the target scan");
}

}  // namespace

std::shared_ptr<const SpatialIndex> build_index(const PointCloudScan& target) {
  if (target.size() == 0) throw InvalidArgument("cannot build an index over an empty target scan");
  return std::make_shared<const SpatialIndex>(target.points);
}

std::size_t CorrespondenceSet::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

CorrespondenceSet find_correspondences(const Eigen::Ref<const Matrix3X<double>>& transformed_source,
                                       const SpatialIndex& index, const NormalField& source_normals,
                                       const NormalField& target_normals, std::optional<double> max_distance) {
  if (source_normals.size() != static_cast<std::size_t>(transformed_source.cols())) {
    throw InvalidArgument("source normals do not match the source points");
  }
  if (target_normals.size() != static_cast<std::size_t>(index.size())) {
    throw InvalidArgument("target normals do not match the indexed target");
  }
  CorrespondenceSet corr;
  corr.max_distance_used = max_distance;
  const auto n = static_cast<std::size_t>(transformed_source.cols());
  corr.pairs.resize(n);
  corr.valid.assign(n, 0);
  const double max_sq = max_distance ? *max_distance * *max_distance : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = index.nearest(transformed_source.col(static_cast<Eigen::Index>(i)));
    corr.pairs[i] = CorrespondencePair{static_cast<std::int64_t>(i), nb.index, std::sqrt(nb.squared_distance)};
    if (!source_normals.is_valid(i) || !target_normals.is_valid(static_cast<std::size_t>(nb.index))) {
      ++corr.normal_rejected_count;
      continue;
    }
    if (max_distance && nb.squared_distance > max_sq) {
      ++corr.rejected_count;
      continue;
    }
    corr.valid[i] = 1;
  }
  return corr;
}

LossAndGradient evaluate_loss(const PointCloudScan& source, const NormalField& source_normals,
                              const PointCloudScan& target, const NormalField& target_normals,
                              const CorrespondenceSet& corr, const RelativeTransformd& T, const LossOptions& options,
                              bool with_gradient) {
  check_sizes(source, source_normals, target, target_normals);
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  pairs.reserve(corr.pairs.size());
  for (std::size_t k = 0; k < corr.pairs.size(); ++k) {
    if (!corr.valid[k]) continue;
    const auto& p = corr.pairs[k];
    if (p.source < 0 || static_cast<std::size_t>(p.source) >= source.size() || p.target < 0 ||
        static_cast<std::size_t>(p.target) >= target.size()) {
      throw InvalidArgument("correspondence index out of range");
    }
    if (!source_normals.is_valid(static_cast<std::size_t>(p.source)) ||
        !target_normals.is_valid(static_cast<std::size_t>(p.target))) {
      throw InvalidArgument("correspondence marked valid but an endpoint has no normal");
    }
    pairs.emplace_back(p.source, p.target);
  }
  if (pairs.empty()) throw NoOverlapError("no valid correspondence pairs");

  const auto sums = accumulate_terms<double>(source.points, source_normals.normals, target.points,
                                             target_normals.normals, pairs, T, with_gradient);

  const double denom = options.strict_nk_denominator ? static_cast<double>(source.size()) : static_cast<double>(pairs.size());
  LossAndGradient out;
  LossReport& loss = out.loss;
  loss.l_p2n = sums.p2n / denom;
  loss.l_n2n = sums.n2n / denom;
  loss.lambda = options.lambda;
  loss.p2n_enabled = options.p2n;
  loss.n2n_enabled = options.n2n;
  loss.valid_pair_count = pairs.size();
  loss.total = (options.p2n ? options.lambda * loss.l_p2n : 0.0) + (options.n2n ? loss.l_n2n : 0.0);
  if (!std::isfinite(loss.total)) throw NumericalError("non-finite loss");

  out.gradient.evaluated_at = T;
  if (with_gradient) {
    if (options.p2n) {
      out.gradient.d_total_d_q += options.lambda * sums.d_p2n_d_q / denom;
      out.gradient.d_total_d_t += options.lambda * sums.d_p2n_d_t / denom;
    }
    if (options.n2n) out.gradient.d_total_d_q += sums.d_n2n_d_q / denom;
    if (!out.gradient.d_total_d_q.allFinite() || !out.gradient.d_total_d_t.allFinite()) {
      throw NumericalError("non-finite gradient");
    }
  }
  return out;
}

LossReport compute_loss(const PointCloudScan& source, const NormalField& source_normals, const PointCloudScan& target,
                        const NormalField& target_normals, const CorrespondenceSet& corr, const RelativeTransformd& T,
                        const LossOptions& options) {
  return evaluate_loss(source, source_normals, target, target_normals, corr, T, options, false).loss;
}

GradientReport compute_gradient(const PointCloudScan& source, const NormalField& source_normals,
                                const PointCloudScan& target, const NormalField& target_normals,
                                const CorrespondenceSet& corr, const RelativeTransformd& T,
                                const LossOptions& options) {
  return evaluate_loss(source, source_normals, target, target_normals, corr, T, options, true).gradient;
}

PairEvaluation evaluate_pair(const PointCloudScan& source, const NormalField& source_normals,
                             const PointCloudScan& target, const NormalField& target_normals,
                             const SpatialIndex& index, const RelativeTransformd& T, const LossOptions& options,
                             std::optional<double> max_distance, bool with_gradient) {
  PairEvaluation out;
  out.correspondences =
      find_correspondences(apply_all<double>(T, source.points), index, source_normals, target_normals, max_distance);
  out.result = evaluate_loss(source, source_normals, target, target_normals, out.correspondences, T, options, with_gradient);
  return out;
}

}  // namespace geolo
