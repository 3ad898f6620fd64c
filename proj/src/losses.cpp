#include "fusionkit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fusionkit {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

struct WindowStats {
  double mu_a, mu_b, var_a, var_b, cov;
};

WindowStats channel_stats(const Image& a, const Image& b, int c, int x, int y,
                          int window) {
  const int half = window / 2;
  const double inv_n = 1.0 / (window * window);
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  for (int dy = -half; dy <= half; ++dy) {
    const int ry = reflect101(y + dy, a.height());
    for (int dx = -half; dx <= half; ++dx) {
      const int rx = reflect101(x + dx, a.width());
      const double va = a.at(rx, ry, c);
      const double vb = b.at(rx, ry, c);
      sa += va;
      sb += vb;
      saa += va * va;
      sbb += vb * vb;
      sab += va * vb;
    }
  }
  WindowStats s;
  s.mu_a = sa * inv_n;
  s.mu_b = sb * inv_n;
  s.var_a = std::max(0.0, saa * inv_n - s.mu_a * s.mu_a);
  s.var_b = std::max(0.0, sbb * inv_n - s.mu_b * s.mu_b);
  s.cov = sab * inv_n - s.mu_a * s.mu_b;
  return s;
}

double ssim_from_stats(const WindowStats& s) {
  const double n1 = 2.0 * s.mu_a * s.mu_b + kC1;
  const double n2 = 2.0 * s.cov + kC2;
  const double d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + kC1;
  const double d2 = s.var_a + s.var_b + kC2;
  return (n1 * n2) / (d1 * d2);
}

void require_same_shape(const Image& a, const Image& b, const char* who) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(who) + ": image shapes differ");
  }
}

void check_window(int window) {
  if (window < 3 || window % 2 == 0) {
    throw std::invalid_argument("ssim: window must be odd and >= 3");
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw std::invalid_argument("loss config: gamma must lie in [0,1]");
  }
  if (alpha < 0 || beta < 0 || lambda < 0 || eta < 0 || smoothness_weight < 0) {
    throw std::invalid_argument("loss config: weights must be nonnegative");
  }
  check_window(ssim_window);
}

Grid ssim(const Image& a, const Image& b, int window) {
  require_same_shape(a, b, "ssim");
  check_window(window);
  Grid out(a.width(), a.height(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        acc += ssim_from_stats(channel_stats(a, b, c, x, y, window));
      }
      out.at(x, y) = acc / 3.0;
    }
  }
  return out;
}

Grid photometric_error(const Image& a, const Image& b, double gamma, int window) {
  require_same_shape(a, b, "photometric_error");
  check_window(window);
  Grid out(a.width(), a.height(), 0.0);
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      double ssim_acc = 0.0;
      double l1_acc = 0.0;
      for (int c = 0; c < 3; ++c) {
        if (gamma > 0.0) ssim_acc += ssim_from_stats(channel_stats(a, b, c, x, y, window));
        l1_acc += std::abs(a.at(x, y, c) - b.at(x, y, c));
      }
      const double ssim_mean = gamma > 0.0 ? ssim_acc / 3.0 : 0.0;
      out.at(x, y) = 0.5 * gamma * (1.0 - ssim_mean) + (1.0 - gamma) * (l1_acc / 3.0);
    }
  }
  return out;
}

Image photometric_error_backward(const Image& a, const Image& b, double gamma,
                                 int window, const Grid& weight) {
  require_same_shape(a, b, "photometric_error_backward");
  check_window(window);
  if (weight.width() != a.width() || weight.height() != a.height()) {
    throw std::invalid_argument("photometric_error_backward: weight shape differs");
  }

  Image grad(a.width(), a.height(), 0.0);
  const int half = window / 2;
  const double inv_n = 1.0 / (window * window);

  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      const double w = weight.at(x, y);
      if (w == 0.0) continue;

      for (int c = 0; c < 3; ++c) {
        // L1 term: d|a-b|/db = -sign(a-b)
        const double diff = a.at(x, y, c) - b.at(x, y, c);
        const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        grad.at(x, y, c) += w * (1.0 - gamma) / 3.0 * (-sgn);

        if (gamma == 0.0) continue;

        const WindowStats s = channel_stats(a, b, c, x, y, window);
        const double n1 = 2.0 * s.mu_a * s.mu_b + kC1;
        const double n2 = 2.0 * s.cov + kC2;
        const double d1 = s.mu_a * s.mu_a + s.mu_b * s.mu_b + kC1;
        const double d2 = s.var_a + s.var_b + kC2;
        const double denom = d1 * d2;
        const double ssim_val = (n1 * n2) / denom;
        const double dS_dmu_b = (2.0 * s.mu_a * n2 - ssim_val * 2.0 * s.mu_b * d2) / denom;
        const double dS_dcov = 2.0 * n1 / denom;
        const double dS_dvar_b = -ssim_val * d1 / denom;

        // pe depends on SSIM through -gamma/6 per channel
        const double up = w * (-gamma / 6.0);
        for (int dy = -half; dy <= half; ++dy) {
          const int ry = reflect101(y + dy, a.height());
          for (int dx = -half; dx <= half; ++dx) {
            const int rx = reflect101(x + dx, a.width());
            const double dvar = 2.0 * (b.at(rx, ry, c) - s.mu_b);
            const double dcov = a.at(rx, ry, c) - s.mu_a;
            grad.at(rx, ry, c) +=
                up * inv_n * (dS_dmu_b + dS_dvar_b * dvar + dS_dcov * dcov);
          }
        }
      }
    }
  }
  return grad;
}

ReprojectionResult reprojection_loss(const Image& target,
                                     std::span<const NeighborFrame> neighbors,
                                     const DepthMap& depth,
                                     const CameraIntrinsics& intrinsics,
                                     const LossConfig& config) {
  config.validate();
  if (neighbors.empty()) {
    throw std::invalid_argument("reprojection_loss: neighbor list is empty");
  }
  if (depth.width() != target.width() || depth.height() != target.height()) {
    throw std::invalid_argument("reprojection_loss: depth and image shapes differ");
  }

  const int width = target.width();
  const int height = target.height();
  const size_t n_nb = neighbors.size();
  const bool use_min = config.aggregate == LossConfig::Aggregate::kMin;

  std::vector<WarpResult> warps(n_nb);
  std::vector<WarpJacobian> jacobians(n_nb);
  std::vector<Grid> pe_warp(n_nb);
  std::vector<Grid> pe_identity(n_nb);
  for (size_t n = 0; n < n_nb; ++n) {
    require_same_shape(target, *neighbors[n].image, "reprojection_loss");
    warp_with_jacobian(*neighbors[n].image, depth, neighbors[n].pose_target_to_neighbor,
                       intrinsics, &warps[n], &jacobians[n]);
    pe_warp[n] = photometric_error(target, warps[n].image, config.gamma, config.ssim_window);
    pe_identity[n] =
        photometric_error(target, *neighbors[n].image, config.gamma, config.ssim_window);
  }

  ReprojectionResult result;
  result.grad_depth = Grid(width, height, 0.0);
  result.grad_pose.assign(n_nb, Vector6d::Zero());
  result.contributing = Mask(width, height, false);

  std::vector<int> winner(static_cast<size_t>(width) * height, -1);
  size_t usable = 0;
  size_t surviving = 0;
  double loss_sum = 0.0;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int best_n = -1;
      double best_pe = std::numeric_limits<double>::infinity();
      bool all_valid = true;
      double sum_pe = 0.0;
      for (size_t n = 0; n < n_nb; ++n) {
        if (!warps[n].valid.at(x, y)) {
          all_valid = false;
          continue;
        }
        sum_pe += pe_warp[n].at(x, y);
        if (pe_warp[n].at(x, y) < best_pe) {
          best_pe = pe_warp[n].at(x, y);
          best_n = static_cast<int>(n);
        }
      }
      const bool pixel_usable = use_min ? best_n >= 0 : all_valid;
      if (!pixel_usable) continue;
      ++usable;

      double identity_min = std::numeric_limits<double>::infinity();
      for (size_t n = 0; n < n_nb; ++n) {
        identity_min = std::min(identity_min, pe_identity[n].at(x, y));
      }
      if (!(best_pe < identity_min)) continue;  // auto-masked

      ++surviving;
      result.contributing.set(x, y, true);
      winner[static_cast<size_t>(y) * width + x] = best_n;
      loss_sum += use_min ? best_pe : sum_pe;
    }
  }

  result.l_p = surviving > 0 ? loss_sum / static_cast<double>(surviving) : 0.0;
  result.masked_fraction =
      usable > 0 ? 1.0 - static_cast<double>(surviving) / static_cast<double>(usable) : 0.0;

  if (surviving == 0) return result;

  const double inv_s = 1.0 / static_cast<double>(surviving);
  for (size_t n = 0; n < n_nb; ++n) {
    Grid pixel_weight(width, height, 0.0);
    bool any = false;
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!result.contributing.at(x, y)) continue;
        if (use_min && winner[static_cast<size_t>(y) * width + x] != static_cast<int>(n)) {
          continue;
        }
        pixel_weight.at(x, y) = inv_s;
        any = true;
      }
    }
    if (!any) continue;

    const Image grad_warped = photometric_error_backward(
        target, warps[n].image, config.gamma, config.ssim_window, pixel_weight);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        if (!jacobians[n].valid.at(x, y)) continue;
        const size_t idx = static_cast<size_t>(y) * width + x;
        for (int c = 0; c < 3; ++c) {
          const double g = grad_warped.at(x, y, c);
          if (g == 0.0) continue;
          result.grad_depth.at(x, y) += g * jacobians[n].d_depth[idx][c];
          result.grad_pose[n] += g * jacobians[n].d_pose[idx].row(c).transpose();
        }
      }
    }
  }
  return result;
}

SmoothnessResult smoothness_loss(const DepthMap& depth, const Image& image) {
  if (depth.width() != image.width() || depth.height() != image.height()) {
    throw std::invalid_argument("smoothness_loss: depth and image shapes differ");
  }
  const int width = depth.width();
  const int height = depth.height();
  const size_t n = depth.size();
  if (n == 0) throw std::invalid_argument("smoothness_loss: empty depth map");

  std::vector<double> inv_depth(n);
  double inv_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!(depth[i] > 0.0)) {
      throw std::invalid_argument("smoothness_loss: depth must be positive everywhere");
    }
    inv_depth[i] = 1.0 / depth[i];
    inv_sum += inv_depth[i];
  }
  const double mean_inv = inv_sum / static_cast<double>(n);
  std::vector<double> dstar(n);
  for (size_t i = 0; i < n; ++i) dstar[i] = inv_depth[i] / mean_inv;

  auto image_weight = [&](int x0, int y0, int x1, int y1) {
    double g = 0.0;
    for (int c = 0; c < 3; ++c) g += std::abs(image.at(x1, y1, c) - image.at(x0, y0, c));
    return std::exp(-g / 3.0);
  };

  std::vector<double> u(n, 0.0);  // dL/ddstar
  double loss = 0.0;
  const size_t count_x = static_cast<size_t>(height) * std::max(0, width - 1);
  const size_t count_y = static_cast<size_t>(width) * std::max(0, height - 1);

  if (count_x > 0) {
    const double inv_cx = 1.0 / static_cast<double>(count_x);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x + 1 < width; ++x) {
        const size_t i0 = static_cast<size_t>(y) * width + x;
        const double diff = dstar[i0 + 1] - dstar[i0];
        const double w = image_weight(x, y, x + 1, y);
        loss += std::abs(diff) * w * inv_cx;
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        u[i0 + 1] += s * w * inv_cx;
        u[i0] -= s * w * inv_cx;
      }
    }
  }
  if (count_y > 0) {
    const double inv_cy = 1.0 / static_cast<double>(count_y);
    for (int y = 0; y + 1 < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const size_t i0 = static_cast<size_t>(y) * width + x;
        const size_t i1 = i0 + width;
        const double diff = dstar[i1] - dstar[i0];
        const double w = image_weight(x, y, x, y + 1);
        loss += std::abs(diff) * w * inv_cy;
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        u[i1] += s * w * inv_cy;
        u[i0] -= s * w * inv_cy;
      }
    }
  }

  // chain through the mean normalization, then through 1/d
  double weighted = 0.0;
  for (size_t i = 0; i < n; ++i) weighted += u[i] * inv_depth[i];

  SmoothnessResult out;
  out.loss = loss;
  out.grad_depth = Grid(width, height, 0.0);
  for (size_t i = 0; i < n; ++i) {
    const double dl_dg = u[i] / mean_inv - weighted / (static_cast<double>(n) * mean_inv * mean_inv);
    out.grad_depth[i] = dl_dg * (-inv_depth[i] * inv_depth[i]);
  }
  return out;
}

ScaleInvariantResult scale_invariant_loss(const DepthMap& pred,
                                          const DepthMap& reference,
                                          const Mask& valid, double lambda,
                                          double eta) {
  if (!pred.same_shape(reference) || pred.width() != valid.width() ||
      pred.height() != valid.height()) {
    throw std::invalid_argument("scale_invariant_loss: shapes differ");
  }
  if (lambda < 0 || eta < 0) {
    throw std::invalid_argument("scale_invariant_loss: weights must be nonnegative");
  }

  const size_t n_total = pred.size();
  std::vector<double> log_diff(n_total, 0.0);
  size_t n = 0;
  double sum = 0.0;
  for (size_t i = 0; i < n_total; ++i) {
    if (!valid[i]) continue;
    if (!(pred[i] > 0.0) || !(reference[i] > 0.0)) {
      throw std::invalid_argument("scale_invariant_loss: non-positive depth on valid mask");
    }
    log_diff[i] = std::log(pred[i]) - std::log(reference[i]);
    sum += log_diff[i];
    ++n;
  }
  if (n == 0) throw std::invalid_argument("scale_invariant_loss: empty valid mask");

  const double mean = sum / static_cast<double>(n);
  double m2 = 0.0;
  for (size_t i = 0; i < n_total; ++i) {
    if (!valid[i]) continue;
    const double c = log_diff[i] - mean;
    m2 += c * c;
  }
  const double si = 2.0 * m2 / static_cast<double>(n);

  ScaleInvariantResult out;
  out.n_valid = n;
  out.grad_pred = Grid(pred.width(), pred.height(), 0.0);
  const double scaled = eta * si;
  if (lambda == 0.0 || scaled <= 0.0) return out;  // flat at the optimum

  out.loss = lambda * std::sqrt(scaled);
  const double dloss_dsi = lambda * eta / (2.0 * std::sqrt(scaled));
  for (size_t i = 0; i < n_total; ++i) {
    if (!valid[i]) continue;
    const double dsi = 4.0 / static_cast<double>(n) * (log_diff[i] - mean);
    out.grad_pred[i] = dloss_dsi * dsi / pred[i];
  }
  return out;
}

TotalLossResult total_loss(const Image& target,
                           std::span<const NeighborFrame> neighbors,
                           const DepthMap& depth, const CameraIntrinsics& intrinsics,
                           const LossConfig& config,
                           const DepthMap* reference_depth) {
  config.validate();
  ReprojectionResult rp = reprojection_loss(target, neighbors, depth, intrinsics, config);
  SmoothnessResult sm = smoothness_loss(depth, target);

  TotalLossResult out;
  out.report.l_p = rp.l_p;
  out.report.l_smooth = sm.loss;
  out.report.masked_fraction = rp.masked_fraction;
  out.report.l_re = rp.l_p + config.smoothness_weight * sm.loss;

  out.grad_depth = Grid(depth.width(), depth.height(), 0.0);
  for (size_t i = 0; i < depth.size(); ++i) {
    out.grad_depth[i] =
        config.alpha * (rp.grad_depth[i] + config.smoothness_weight * sm.grad_depth[i]);
  }
  out.grad_pose = std::move(rp.grad_pose);
  for (auto& g : out.grad_pose) g *= config.alpha;

  if (reference_depth != nullptr) {
    if (!reference_depth->same_shape(depth)) {
      throw std::invalid_argument("total_loss: reference depth shape differs");
    }
    Mask valid(depth.width(), depth.height(), false);
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        valid.set(x, y, reference_depth->at(x, y) > 0.0);
      }
    }
    ScaleInvariantResult si =
        scale_invariant_loss(depth, *reference_depth, valid, config.lambda, config.eta);
    out.report.l_si = si.loss;
    for (size_t i = 0; i < depth.size(); ++i) {
      out.grad_depth[i] += config.beta * si.grad_pred[i];
    }
  }

  out.report.total = config.alpha * out.report.l_re + config.beta * out.report.l_si;
  return out;
}

DepthMap upsample_prediction(const DepthMap& low, int target_width, int target_height) {
  if (target_width < low.width() || target_height < low.height()) {
    throw std::invalid_argument("upsample_prediction: target smaller than source");
  }
  if (low.width() == 0 || low.height() == 0) {
    throw std::invalid_argument("upsample_prediction: empty source");
  }
  if (target_width == low.width() && target_height == low.height()) return low;

  DepthMap out(target_width, target_height, 0.0);
  const double sx = target_width > 1
                        ? static_cast<double>(low.width() - 1) / (target_width - 1)
                        : 0.0;
  const double sy = target_height > 1
                        ? static_cast<double>(low.height() - 1) / (target_height - 1)
                        : 0.0;
  for (int y = 0; y < target_height; ++y) {
    const double v = y * sy;
    const int y0 = std::min(static_cast<int>(v), low.height() - 1);
    const int y1 = std::min(y0 + 1, low.height() - 1);
    const double ay = v - y0;
    for (int x = 0; x < target_width; ++x) {
      const double u = x * sx;
      const int x0 = std::min(static_cast<int>(u), low.width() - 1);
      const int x1 = std::min(x0 + 1, low.width() - 1);
      const double ax = u - x0;
      const double top = (1.0 - ax) * low.at(x0, y0) + ax * low.at(x1, y0);
      const double bot = (1.0 - ax) * low.at(x0, y1) + ax * low.at(x1, y1);
      out.at(x, y) = (1.0 - ay) * top + ay * bot;
    }
  }
  return out;
}

}  // namespace fusionkit
