#include "geolo/odometry.hpp"

#include <chrono>
#include <cmath>
#include <string>

namespace geolo {

namespace {

using Params = Eigen::Matrix<double, 7, 1>;

Params pack(const RelativeTransformd& T) {
  Params x;
  x << T.q(), T.t();
  return x;
}

Params pack(const GradientReport& g) {
  Params x;
  x << g.d_total_d_q, g.d_total_d_t;
  return x;
}

struct Trial {
  RelativeTransformd transform;
  double loss = 0.0;
};

}  // namespace

void OptimizerConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("max_iterations must be at least 1");
  if (!(loss_tolerance > 0.0) || !(step_tolerance > 0.0)) throw InvalidArgument("tolerances must be positive");
  if (recorrespond_every < 1) throw InvalidArgument("recorrespond_every must be at least 1");
  if (!(line_search.step > 0.0)) throw InvalidArgument("line search step must be positive");
  if (!(line_search.beta > 0.0 && line_search.beta < 1.0)) throw InvalidArgument("backtracking beta must lie in (0, 1)");
  if (!(line_search.c > 0.0 && line_search.c < 1.0)) throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (max_distance && !(*max_distance > 0.0)) throw InvalidArgument("max_distance must be positive");
}

AlignmentResult align(const PointCloudScan& source, const PointCloudScan& target, const NormalField& source_normals,
                      const NormalField& target_normals, const OptimizerConfig& cfg, const RelativeTransformd& initial,
                      const SpatialIndex* index) {
  cfg.validate();
  if (source.size() == 0 || target.size() == 0) throw InvalidArgument("align requires non-empty scans");
  std::shared_ptr<const SpatialIndex> owned;
  if (index == nullptr) {
    owned = build_index(target);
    index = owned.get();
  }

  AlignmentResult result;
  auto& trace = result.per_iteration_trace;

  auto match = [&](const RelativeTransformd& T) {
    return find_correspondences(apply_all<double>(T, source.points), *index, source_normals, target_normals,
                                cfg.max_distance);
  };
  auto evaluate = [&](const RelativeTransformd& T, const CorrespondenceSet& corr, bool with_gradient) {
    return evaluate_loss(source, source_normals, target, target_normals, corr, T, cfg.loss, with_gradient);
  };

  RelativeTransformd T = normalize(initial);
  CorrespondenceSet corr = match(T);
  if (corr.valid_count() == 0) throw NoOverlapError("no valid correspondences at the initial transform");
  LossAndGradient current = evaluate(T, corr, true);
  trace.push_back({current.loss.total, 0.0});

  // Re-matches at the current iterate. The new set is adopted only if it does
  // not raise the loss, which keeps the trace monotone; returns true if adopted.
  auto refresh = [&] {
    CorrespondenceSet fresh = match(T);
    if (fresh.valid_count() == 0) return false;
    LossAndGradient candidate = evaluate(T, fresh, true);
    if (!std::isfinite(candidate.loss.total)) return false;
    if (candidate.loss.total > current.loss.total) return false;
    corr = std::move(fresh);
    current = std::move(candidate);
    return true;
  };

  Params grad = pack(current.gradient);
  std::optional<Params> prev_x;
  std::optional<Params> prev_grad;
  bool converged = current.loss.total == 0.0 || grad.squaredNorm() == 0.0;
  bool matched_here = true;  // corr was built at the current T

  for (int it = 1; it <= cfg.max_iterations && !converged; ++it) {
    if (!matched_here && (it - 1) % cfg.recorrespond_every == 0) {
      refresh();
      matched_here = true;
      grad = pack(current.gradient);
      if (current.loss.total == 0.0 || grad.squaredNorm() == 0.0) {
        converged = true;
        break;
      }
    }

    const Params x = pack(T);
    const double f = current.loss.total;
    const double grad_sq = grad.squaredNorm();

    double alpha = cfg.line_search.step;
    if (cfg.line_search.kind == LineSearch::Kind::backtracking && cfg.line_search.barzilai_borwein && prev_x) {
      const Params s = x - *prev_x;
      const Params y = grad - *prev_grad;
      const double sy = s.dot(y);
      if (sy > 0.0) alpha = std::clamp(s.squaredNorm() / sy, 1e-10, 1e6);
    }

    auto try_step = [&](double a) -> std::optional<Trial> {
      const Params xn = x - a * grad;
      if (xn.head<4>().norm() < kMinQuaternionNorm<double>) return std::nullopt;
      Trial trial{normalize(RelativeTransformd(xn.head<4>(), xn.tail<3>())), 0.0};
      trial.loss = evaluate(trial.transform, corr, false).loss.total;
      if (!std::isfinite(trial.loss)) throw AlignmentDivergedError("non-finite loss at iteration " + std::to_string(it), trace);
      return trial;
    };

    std::optional<Trial> accepted;
    if (cfg.line_search.kind == LineSearch::Kind::fixed_step) {
      auto trial = try_step(alpha);
      if (trial && trial->loss <= f) accepted = std::move(trial);
    } else {
      for (int k = 0; k <= cfg.line_search.max_backtracks; ++k, alpha *= cfg.line_search.beta) {
        auto trial = try_step(alpha);
        if (trial && trial->loss <= f - cfg.line_search.c * alpha * grad_sq) {
          accepted = std::move(trial);
          break;
        }
      }
    }

    bool stalled = !accepted;
    if (accepted) {
      prev_x = x;
      prev_grad = grad;
      T = accepted->transform;
      current = evaluate(T, corr, true);
      grad = pack(current.gradient);
      matched_here = false;

      const double step_norm = (pack(T) - x).norm();
      trace.push_back({current.loss.total, step_norm});
      result.iterations = it;
      stalled = (f - current.loss.total) < cfg.loss_tolerance || step_norm < cfg.step_tolerance ||
                current.loss.total == 0.0;
    }
    if (stalled) {
      // stationary for these correspondences; stop unless re-matching here still helps
      const double before = current.loss.total;
      if (matched_here || !refresh() || before - current.loss.total < cfg.loss_tolerance) {
        converged = true;
      } else {
        grad = pack(current.gradient);
        prev_x.reset();
        prev_grad.reset();
      }
      matched_here = true;
    }
  }

  result.transform = T;
  result.final_loss = current.loss;
  result.converged = converged;
  return result;
}

SequenceResult run_sequence(const FrameSource& frames, const OptimizerConfig& cfg) {
  cfg.validate();
  if (frames.size() < 2) throw InvalidArgument("run_sequence needs at least 2 scans");

  SequenceResult out;
  out.poses.push_back(PoseRecord{});
  RelativeTransformd world = RelativeTransformd::identity();
  RelativeTransformd velocity = RelativeTransformd::identity();

  Frame previous = frames.load(0);
  for (std::size_t k = 1; k < frames.size(); ++k) {
    Frame current = frames.load(k);
    const auto start = std::chrono::steady_clock::now();
    AlignmentResult step;
    try {
      const auto index = build_index(previous.scan);
      const RelativeTransformd init =
          cfg.initializer == Initializer::constant_velocity ? velocity : RelativeTransformd::identity();
      step = align(current.scan, previous.scan, current.normals, previous.normals, cfg, init, index.get());
    } catch (const Error& e) {
      throw SequenceError("alignment of frame " + std::to_string(k) + " onto frame " + std::to_string(k - 1) +
                              " failed: " + e.what(),
                          k, out.poses);
    }
    const auto stop = std::chrono::steady_clock::now();
    out.step_milliseconds.push_back(std::chrono::duration<double, std::milli>(stop - start).count());

    velocity = step.transform;
    world = compose(world, step.transform);
    out.poses.push_back(PoseRecord::from_transform(world, k));
    out.steps.push_back(std::move(step));
    previous = std::move(current);
  }
  return out;
}

}  // namespace geolo
