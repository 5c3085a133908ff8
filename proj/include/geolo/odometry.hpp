#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "geolo/alignment.hpp"
#include "geolo/normals.hpp"
#include "geolo/scan_io.hpp"

namespace geolo {

enum class Initializer { identity, constant_velocity };

struct LineSearch {
  enum class Kind { fixed_step, backtracking };
  Kind kind = Kind::backtracking;
  double step = 1e-2;  ///< fixed step size, or the first trial step for backtracking
  double beta = 0.5;
  double c = 1e-4;     ///< Armijo sufficient-decrease constant
  int max_backtracks = 50;
  /// Seed each backtracking search with the Barzilai-Borwein step from the previous iterate.
  bool barzilai_borwein = true;
};

struct OptimizerConfig {
  int max_iterations = 200;
  double loss_tolerance = 1e-14;  ///< stop when an accepted step lowers the loss by less than this
  double step_tolerance = 1e-10;  ///< stop when |Δ(q, t)| falls below this
  int recorrespond_every = 1;
  Initializer initializer = Initializer::constant_velocity;
  LineSearch line_search;
  LossOptions loss;
  std::optional<double> max_distance = 2.0;

  void validate() const;
};

struct TraceEntry {
  double loss = 0.0;
  double step_norm = 0.0;
};

struct AlignmentResult {
  RelativeTransformd transform;
  LossReport final_loss;
  int iterations = 0;
  bool converged = false;
  /// Entry 0 is the initial loss; then one entry per accepted step.
  std::vector<TraceEntry> per_iteration_trace;
};

/// Non-finite loss during optimization; carries the trace up to the failure.
class AlignmentDivergedError : public NumericalError {
 public:
  AlignmentDivergedError(const std::string& what, std::vector<TraceEntry> trace)
      : NumericalError(what), trace(std::move(trace)) {}
  std::vector<TraceEntry> trace;
};

/// Estimates T such that apply(T, source) overlays target, by first-order
/// descent on the geometric loss in raw (q, t) coordinates.
///
/// Every trial point of the line search is scored with the correspondences it
/// would use, so accepted losses never increase. `index` may be passed to reuse
/// a tree over `target`.
AlignmentResult align(const PointCloudScan& source, const PointCloudScan& target, const NormalField& source_normals,
                      const NormalField& target_normals, const OptimizerConfig& cfg,
                      const RelativeTransformd& initial = RelativeTransformd::identity(),
                      const SpatialIndex* index = nullptr);

struct Frame {
  PointCloudScan scan;
  NormalField normals;
};

/// Ordered, random-access supply of scans with their normals.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t size() const = 0;
  virtual Frame load(std::size_t i) const = 0;
};

class InMemoryFrames : public FrameSource {
 public:
  explicit InMemoryFrames(std::vector<Frame> frames) : frames_(std::move(frames)) {}
  std::size_t size() const override { return frames_.size(); }
  Frame load(std::size_t i) const override { return frames_.at(i); }

 private:
  std::vector<Frame> frames_;
};

struct SequenceResult {
  std::vector<PoseRecord> poses;
  std::vector<AlignmentResult> steps;
  std::vector<double> step_milliseconds;
};

class SequenceError : public Error {
 public:
  SequenceError(const std::string& what, std::size_t frame, std::vector<PoseRecord> partial)
      : Error(what), frame(frame), partial(std::move(partial)) {}
  std::size_t frame;
  std::vector<PoseRecord> partial;
};

/// pose[0] = identity, pose[k] = pose[k-1] ∘ align(scan k onto scan k-1).
SequenceResult run_sequence(const FrameSource& frames, const OptimizerConfig& cfg);

}  // namespace geolo
