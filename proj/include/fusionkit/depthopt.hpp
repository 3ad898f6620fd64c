#pragma once

#include <optional>
#include <vector>

#include "fusionkit/errors.hpp"
#include "fusionkit/losses.hpp"
#include "fusionkit/pdr.hpp"
#include "fusionkit/types.hpp"

namespace fusionkit {

struct OptimizeOptions {
  LossConfig loss;
  int iterations = 200;
  double step = 1e-2;        // depth parameter step
  double pose_step = 1e-3;   // pose tangent step when poses are optimized
  double d_min = 0.1;        // meters
  double d_max = 100.0;
  bool optimize_poses = false;
  double pdr_confidence_threshold = 0.5;

  void validate() const;
};

/// Trace of one optimization run. depth_param holds the raw unconstrained
/// parameters; depth = d_min + (d_max - d_min) * sigmoid(param).
struct OptimizeState {
  Grid depth_param;
  std::vector<Vector6d> pose_params;  // tangent logs of the current poses
  std::vector<LossReport> history;    // one report per iteration
  int iterations_run = 0;
};

struct OptimizeResult {
  DepthMap depth;
  std::vector<Pose> poses;  // final target->neighbor poses
  OptimizeState state;
};

/// Raised when the loss stops being finite; carries the last finite state.
class DivergenceError : public NumericError {
 public:
  DivergenceError(const std::string& what, OptimizeResult last_finite)
      : NumericError(what), last_finite_(std::move(last_finite)) {}
  const OptimizeResult& last_finite() const { return last_finite_; }

 private:
  OptimizeResult last_finite_;
};

/// Directly optimizes a per-pixel depth map (and optionally the neighbor
/// poses) by first-order updates with momentum and per-parameter adaptive
/// scaling on the total loss over the frame triplet (prev, target, next).
///
/// Initialization precedence: `initial_depth` when given; otherwise the PDR
/// depth channel where its confidence exceeds the threshold with the
/// harmonic mean of the seeded values elsewhere; otherwise a constant
/// sqrt(d_min * d_max). `reference_depth` feeds the scale-invariant term on
/// its positive pixels.
OptimizeResult optimize_depth(const Image& prev, const Image& target, const Image& next,
                              const Pose& pose_target_to_prev,
                              const Pose& pose_target_to_next,
                              const CameraIntrinsics& intrinsics,
                              const OptimizeOptions& options,
                              const PDR* pdr = nullptr,
                              const DepthMap* reference_depth = nullptr,
                              const DepthMap* initial_depth = nullptr);

/// Multiplies pred by median(reference) / median(pred) over the pixels
/// where both maps are positive. Throws NumericError on empty overlap.
DepthMap median_scale(const DepthMap& pred, const DepthMap& reference);

/// Point-cloud reference: each projected point contributes its depth, and
/// pred contributes its value at the point's nearest pixel (where positive).
DepthMap median_scale(const DepthMap& pred, const PointCloud& reference,
                      const CameraIntrinsics& intrinsics);

}  // namespace fusionkit
