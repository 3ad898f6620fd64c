#include "fusionkit/depthopt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusionkit/geometry.hpp"

namespace fusionkit {

namespace {

double median_of(std::vector<double> values) {
  if (values.empty()) throw NumericError("median: empty overlap");
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    const auto lower = std::max_element(values.begin(), values.begin() + mid);
    m = 0.5 * (m + *lower);
  }
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Inverse of depth = d_min + (d_max - d_min) * sigmoid(param), clamped away
// from the open interval's ends.
double encode_depth(double depth, double d_min, double d_max) {
  const double span = d_max - d_min;
  double s = (depth - d_min) / span;
  s = std::clamp(s, 1e-6, 1.0 - 1e-6);
  return std::log(s / (1.0 - s));
}

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int t = 0;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(const double* grad, double lr, double* param, size_t n) {
    ++t;
    const double corr1 = 1.0 - std::pow(beta1, t);
    const double corr2 = 1.0 - std::pow(beta2, t);
    for (size_t i = 0; i < n; ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / corr1;
      const double vhat = v[i] / corr2;
      param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

}  // namespace

void OptimizeOptions::validate() const {
  loss.validate();
  if (iterations < 1) throw std::invalid_argument("optimize: iterations must be >= 1");
  if (!(step > 0.0) || !(pose_step > 0.0)) {
    throw std::invalid_argument("optimize: step sizes must be positive");
  }
  if (!(d_min > 0.0) || !(d_max > d_min)) {
    throw std::invalid_argument("optimize: need 0 < d_min < d_max");
  }
}

OptimizeResult optimize_depth(const Image& prev, const Image& target, const Image& next,
                              const Pose& pose_target_to_prev,
                              const Pose& pose_target_to_next,
                              const CameraIntrinsics& intrinsics,
                              const OptimizeOptions& options,
                              const PDR* pdr,
                              const DepthMap* reference_depth,
                              const DepthMap* initial_depth) {
  options.validate();
  intrinsics.validate();
  if (!prev.same_shape(target) || !next.same_shape(target)) {
    throw std::invalid_argument("optimize: frame shapes differ");
  }
  const int width = target.width();
  const int height = target.height();
  const size_t n = static_cast<size_t>(width) * height;

  // ---- initialization ----
  DepthMap init(width, height, std::sqrt(options.d_min * options.d_max));
  if (initial_depth != nullptr) {
    if (!initial_depth->same_shape(init)) {
      throw std::invalid_argument("optimize: initial depth shape differs");
    }
    init = *initial_depth;
  } else if (pdr != nullptr) {
    if (pdr->depth.width() != width || pdr->depth.height() != height) {
      throw std::invalid_argument("optimize: PDR shape differs");
    }
    double inv_sum = 0.0;
    size_t seeded = 0;
    for (size_t i = 0; i < n; ++i) {
      if (pdr->confidence[i] > options.pdr_confidence_threshold && pdr->depth[i] > 0.0) {
        inv_sum += 1.0 / pdr->depth[i];
        ++seeded;
      }
    }
    const double fill = seeded > 0 ? static_cast<double>(seeded) / inv_sum
                                   : std::sqrt(options.d_min * options.d_max);
    for (size_t i = 0; i < n; ++i) {
      const bool confident =
          pdr->confidence[i] > options.pdr_confidence_threshold && pdr->depth[i] > 0.0;
      init[i] = confident ? pdr->depth[i] : fill;
    }
  }

  Grid param(width, height, 0.0);
  for (size_t i = 0; i < n; ++i) {
    param[i] = encode_depth(init[i], options.d_min, options.d_max);
  }

  std::vector<Pose> poses{pose_target_to_prev, pose_target_to_next};
  std::vector<NeighborFrame> neighbors(2);
  neighbors[0].image = &prev;
  neighbors[1].image = &next;

  AdamState depth_adam(n);
  std::vector<AdamState> pose_adam(2, AdamState(6));

  OptimizeResult result;
  result.state.history.reserve(options.iterations);

  DepthMap depth(width, height, 0.0);
  const double span = options.d_max - options.d_min;

  auto decode_all = [&]() {
    for (size_t i = 0; i < n; ++i) {
      depth[i] = options.d_min + span * sigmoid(param[i]);
    }
  };

  auto snapshot = [&](OptimizeResult* dst) {
    dst->depth = depth;
    dst->poses = poses;
    dst->state.depth_param = param;
    dst->state.pose_params = {poses[0].log(), poses[1].log()};
  };

  for (int iter = 0; iter < options.iterations; ++iter) {
    decode_all();
    neighbors[0].pose_target_to_neighbor = poses[0];
    neighbors[1].pose_target_to_neighbor = poses[1];

    TotalLossResult loss = total_loss(target, neighbors, depth, intrinsics,
                                      options.loss, reference_depth);
    if (!std::isfinite(loss.report.total)) {
      OptimizeResult last;
      snapshot(&last);
      last.state.history = result.state.history;
      last.state.iterations_run = iter;
      throw DivergenceError("optimize: loss became non-finite at iteration " +
                                std::to_string(iter),
                            std::move(last));
    }
    result.state.history.push_back(loss.report);

    // chain through the bounded parameterization
    std::vector<double> grad_param(n);
    for (size_t i = 0; i < n; ++i) {
      const double s = sigmoid(param[i]);
      grad_param[i] = loss.grad_depth[i] * span * s * (1.0 - s);
    }
    depth_adam.step(grad_param.data(), options.step, param.data(), n);

    if (options.optimize_poses) {
      for (int p = 0; p < 2; ++p) {
        Vector6d g = loss.grad_pose[p];
        Vector6d delta = Vector6d::Zero();
        pose_adam[p].step(g.data(), options.pose_step, delta.data(), 6);
        poses[p] = Pose::exp(delta) * poses[p];
      }
    }
    result.state.iterations_run = iter + 1;
  }

  decode_all();
  snapshot(&result);
  return result;
}

DepthMap median_scale(const DepthMap& pred, const DepthMap& reference) {
  if (!pred.same_shape(reference)) {
    throw std::invalid_argument("median_scale: shapes differ");
  }
  std::vector<double> pred_vals;
  std::vector<double> ref_vals;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] > 0.0 && reference[i] > 0.0) {
      pred_vals.push_back(pred[i]);
      ref_vals.push_back(reference[i]);
    }
  }
  if (pred_vals.empty()) throw NumericError("median_scale: empty overlap");
  const double scale = median_of(ref_vals) / median_of(pred_vals);
  DepthMap out = pred;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  return out;
}

DepthMap median_scale(const DepthMap& pred, const PointCloud& reference,
                      const CameraIntrinsics& intrinsics) {
  std::vector<double> pred_vals;
  std::vector<double> ref_vals;
  for (const ProjectedPoint& p : project(reference, intrinsics)) {
    const int x = static_cast<int>(std::lround(p.u));
    const int y = static_cast<int>(std::lround(p.v));
    if (x < 0 || y < 0 || x >= pred.width() || y >= pred.height()) continue;
    if (!(pred.at(x, y) > 0.0)) continue;
    pred_vals.push_back(pred.at(x, y));
    ref_vals.push_back(p.z);
  }
  if (pred_vals.empty()) throw NumericError("median_scale: empty overlap");
  const double scale = median_of(ref_vals) / median_of(pred_vals);
  DepthMap out = pred;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= scale;
  return out;
}

}  // namespace fusionkit
