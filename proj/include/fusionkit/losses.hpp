#pragma once

#include <span>
#include <string>
#include <vector>

#include "fusionkit/geometry.hpp"
#include "fusionkit/types.hpp"

namespace fusionkit {

struct LossConfig {
  double gamma = 0.85;             // SSIM weight inside pe
  double alpha = 1.0;              // weight of the reprojection term
  double beta = 0.05;              // weight of the scale-invariant term
  double lambda = 1.0;             // outer scale-invariant weight
  double eta = 1.0;                // inner scale-invariant scale
  double smoothness_weight = 1e-3; // multiplier on the smoothness term
  int ssim_window = 3;             // odd window side, >= 3

  enum class Aggregate { kMin, kSum };
  Aggregate aggregate = Aggregate::kMin;  // per-pixel combination over neighbors

  void validate() const;  // throws std::invalid_argument
};

struct LossReport {
  double total = 0.0;
  double l_re = 0.0;
  double l_p = 0.0;
  double l_smooth = 0.0;
  double l_si = 0.0;
  double masked_fraction = 0.0;
};

/// Windowed SSIM map in [-1,1], averaged over channels. Stabilizers
/// c1 = 0.01^2, c2 = 0.03^2 on [0,1] intensities; window means use
/// reflected borders.
Grid ssim(const Image& a, const Image& b, int window);

/// pe = (gamma/2)(1 - SSIM(a,b)) + (1 - gamma) * mean_c |a - b|.
Grid photometric_error(const Image& a, const Image& b, double gamma, int window);

/// Gradient of sum_p weight(p) * pe(a,b)(p) with respect to b.
Image photometric_error_backward(const Image& a, const Image& b, double gamma,
                                 int window, const Grid& weight);

struct NeighborFrame {
  const Image* image = nullptr;
  Pose pose_target_to_neighbor;
};

struct ReprojectionResult {
  double l_p = 0.0;
  double masked_fraction = 0.0;  // valid pixels removed by the auto-mask
  Grid grad_depth;
  std::vector<Vector6d> grad_pose;  // one per neighbor, left-increment convention
  Mask contributing;                // valid and unmasked
};

/// Masked photometric reprojection loss. Each neighbor is warped into the
/// target view through `depth`; per-pixel errors are combined over
/// neighbors (min by default), filtered by the auto-mask
///   mu = [ min_n pe(target, warped_n) < min_n pe(target, neighbor_n) ],
/// and averaged over the surviving pixels. The mask and the min selection
/// are treated as constants by the gradient.
ReprojectionResult reprojection_loss(const Image& target,
                                     std::span<const NeighborFrame> neighbors,
                                     const DepthMap& depth,
                                     const CameraIntrinsics& intrinsics,
                                     const LossConfig& config);

struct SmoothnessResult {
  double loss = 0.0;
  Grid grad_depth;
};

/// Edge-aware smoothness on mean-normalized inverse depth: with
/// d* = (1/d) / mean(1/d),
///   loss = mean |dx d*| e^{-|dx I|} + mean |dy d*| e^{-|dy I|}
/// using forward differences; image gradients are channel means of
/// absolute differences. All depths must be positive.
SmoothnessResult smoothness_loss(const DepthMap& depth, const Image& image);

struct ScaleInvariantResult {
  double loss = 0.0;
  Grid grad_pred;
  size_t n_valid = 0;
};

/// Scale-invariant log-depth loss over the valid mask. With
/// d_i = log y_i - log y*_i over n pixels,
///   Si = (2/n) sum d_i^2 - (2/n^2) (sum d_i)^2,
///   loss = lambda * sqrt(eta * Si).
/// Si = 0 yields zero loss and zero gradient.
ScaleInvariantResult scale_invariant_loss(const DepthMap& pred,
                                          const DepthMap& reference,
                                          const Mask& valid, double lambda,
                                          double eta);

struct TotalLossResult {
  LossReport report;
  Grid grad_depth;
  std::vector<Vector6d> grad_pose;
};

/// total = alpha * (l_p + smoothness_weight * l_smooth) + beta * l_si.
/// The scale-invariant term distills toward `reference_depth` over its
/// positive pixels; pass null to disable it.
TotalLossResult total_loss(const Image& target,
                           std::span<const NeighborFrame> neighbors,
                           const DepthMap& depth, const CameraIntrinsics& intrinsics,
                           const LossConfig& config,
                           const DepthMap* reference_depth);

/// Bilinear upsampling to the target size (align-corners, exact on affine
/// ramps). Target dimensions must not be smaller than the source's.
DepthMap upsample_prediction(const DepthMap& low, int target_width, int target_height);

}  // namespace fusionkit
