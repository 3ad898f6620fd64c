#include "fusionkit/gdc.hpp"

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>

#include "fusionkit/errors.hpp"
#include "fusionkit/geometry.hpp"

namespace fusionkit {

namespace {

// Exact 3D k-nearest-neighbor tree (median split, bounded heap query).
class KdTree3 {
 public:
  explicit KdTree3(const std::vector<Eigen::Vector3d>& points) : points_(points) {
    order_.resize(points.size());
    for (size_t i = 0; i < points.size(); ++i) order_[i] = static_cast<int>(i);
    nodes_.reserve(points.size());
    root_ = build(0, static_cast<int>(points.size()), 0);
  }

  std::vector<int> knn(const Eigen::Vector3d& query, int k, int exclude) const {
    Heap heap;
    search(root_, query, k, exclude, &heap);
    std::vector<std::pair<double, int>> found;
    found.reserve(heap.size());
    while (!heap.empty()) {
      found.push_back(heap.top());
      heap.pop();
    }
    std::sort(found.begin(), found.end());
    std::vector<int> out;
    out.reserve(found.size());
    for (const auto& [d2, idx] : found) out.push_back(idx);
    return out;
  }

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
  };
  using Heap = std::priority_queue<std::pair<double, int>>;

  int build(int begin, int end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % 3;
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                       const double pa = points_[a][axis];
                       const double pb = points_[b][axis];
                       return pa < pb || (pa == pb && a < b);
                     });
    Node node;
    node.point = order_[mid];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[self].left = build(begin, mid, depth + 1);
    nodes_[self].right = build(mid + 1, end, depth + 1);
    return self;
  }

  void search(int node_id, const Eigen::Vector3d& query, int k, int exclude,
              Heap* heap) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const Eigen::Vector3d& p = points_[node.point];
    if (node.point != exclude) {
      const double d2 = (p - query).squaredNorm();
      if (static_cast<int>(heap->size()) < k) {
        heap->emplace(d2, node.point);
      } else if (d2 < heap->top().first) {
        heap->pop();
        heap->emplace(d2, node.point);
      }
    }
    const double plane_delta = query[node.axis] - p[node.axis];
    const int near = plane_delta < 0.0 ? node.left : node.right;
    const int far = plane_delta < 0.0 ? node.right : node.left;
    search(near, query, k, exclude, heap);
    if (static_cast<int>(heap->size()) < k ||
        plane_delta * plane_delta < heap->top().first) {
      search(far, query, k, exclude, heap);
    }
  }

  const std::vector<Eigen::Vector3d>& points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Constrained local reconstruction weights: minimize (sum_j w_j (z_i - z_j))^2
// + ridge |w|^2 subject to sum w = 1, via the Gram system (G + ridge I) w = 1.
std::vector<double> reconstruction_weights(double z_center,
                                           const std::vector<double>& z_neighbors,
                                           double ridge_scale) {
  const int k = static_cast<int>(z_neighbors.size());
  Eigen::VectorXd d(k);
  for (int j = 0; j < k; ++j) d[j] = z_center - z_neighbors[j];
  Eigen::MatrixXd gram = d * d.transpose();
  const double trace = gram.trace();
  if (trace > 0.0) {
    gram.diagonal().array() += ridge_scale * trace;
  } else {
    gram.setIdentity();
  }
  Eigen::VectorXd w = gram.ldlt().solve(Eigen::VectorXd::Ones(k));
  const double sum = w.sum();
  if (!(std::abs(sum) > 1e-300) || !w.allFinite()) {
    w.setConstant(1.0 / k);
  } else {
    w /= sum;
  }
  return std::vector<double>(w.data(), w.data() + k);
}

// Off-node pixels get the initial depth multiplied by the bilinearly
// interpolated per-node correction ratio; lattice cells without a node
// carry ratio 1.
DepthMap fill_full_resolution(const DepthGraph& graph, const DepthMap& initial_depth,
                              const std::vector<double>& node_depths) {
  const int stride = graph.stride;
  const int grid_w = (graph.width + stride - 1) / stride;
  const int grid_h = (graph.height + stride - 1) / stride;
  Grid ratio(grid_w, grid_h, 1.0);
  for (size_t i = 0; i < graph.nodes.size(); ++i) {
    const DepthGraph::Node& node = graph.nodes[i];
    ratio.at(node.pixel_x / stride, node.pixel_y / stride) =
        node_depths[i] / node.initial_depth;
  }

  DepthMap out(graph.width, graph.height, 0.0);
  for (int y = 0; y < graph.height; ++y) {
    const double v = static_cast<double>(y) / stride;
    const int gy0 = std::min(static_cast<int>(v), grid_h - 1);
    const int gy1 = std::min(gy0 + 1, grid_h - 1);
    const double ay = std::min(v - gy0, 1.0);
    for (int x = 0; x < graph.width; ++x) {
      const double d0 = initial_depth.at(x, y);
      if (!(d0 > 0.0)) continue;
      const double u = static_cast<double>(x) / stride;
      const int gx0 = std::min(static_cast<int>(u), grid_w - 1);
      const int gx1 = std::min(gx0 + 1, grid_w - 1);
      const double ax = std::min(u - gx0, 1.0);
      const double top = (1.0 - ax) * ratio.at(gx0, gy0) + ax * ratio.at(gx1, gy0);
      const double bot = (1.0 - ax) * ratio.at(gx0, gy1) + ax * ratio.at(gx1, gy1);
      out.at(x, y) = d0 * ((1.0 - ay) * top + ay * bot);
    }
  }
  return out;
}

}  // namespace

DepthGraph build_graph(const DepthMap& initial_depth, const CameraIntrinsics& intrinsics,
                       const PointCloud& lidar, int k, int subsample_stride,
                       double ridge_scale) {
  intrinsics.validate();
  if (k < 3) throw std::invalid_argument("build_graph: k must be >= 3");
  if (subsample_stride < 1) {
    throw std::invalid_argument("build_graph: subsample_stride must be >= 1");
  }

  DepthGraph graph;
  graph.width = initial_depth.width();
  graph.height = initial_depth.height();
  graph.stride = subsample_stride;

  const int grid_w = (graph.width + subsample_stride - 1) / subsample_stride;
  const int grid_h = (graph.height + subsample_stride - 1) / subsample_stride;
  std::vector<int> node_at(static_cast<size_t>(grid_w) * grid_h, -1);

  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = 0; gx < grid_w; ++gx) {
      const int x = gx * subsample_stride;
      const int y = gy * subsample_stride;
      const double d = initial_depth.at(x, y);
      if (!(d > 0.0)) continue;
      DepthGraph::Node node;
      node.pixel_x = x;
      node.pixel_y = y;
      node.initial_depth = d;
      node.position = Eigen::Vector3d((x - intrinsics.cx) * d / intrinsics.fx,
                                      (y - intrinsics.cy) * d / intrinsics.fy, d);
      node_at[static_cast<size_t>(gy) * grid_w + gx] = static_cast<int>(graph.nodes.size());
      graph.nodes.push_back(node);
    }
  }

  const int node_count = static_cast<int>(graph.nodes.size());
  if (node_count < k + 1) {
    throw std::invalid_argument("build_graph: fewer than k+1 usable nodes");
  }

  std::vector<Eigen::Vector3d> positions(node_count);
  for (int i = 0; i < node_count; ++i) positions[i] = graph.nodes[i].position;
  const KdTree3 tree(positions);

  graph.neighbors.resize(node_count);
  graph.weights.resize(node_count);
  std::vector<double> z_neighbors(k);
  for (int i = 0; i < node_count; ++i) {
    graph.neighbors[i] = tree.knn(positions[i], k, i);
    for (int j = 0; j < k; ++j) {
      z_neighbors[j] = graph.nodes[graph.neighbors[i][j]].position.z();
    }
    graph.weights[i] =
        reconstruction_weights(positions[i].z(), z_neighbors, ridge_scale);
  }

  // Anchor each projected LiDAR return to the node within 1 pixel, averaging
  // coinciding returns.
  std::vector<double> anchor_sum(node_count, 0.0);
  std::vector<int> anchor_count(node_count, 0);
  for (const ProjectedPoint& p : project(lidar, intrinsics)) {
    const int gx0 = static_cast<int>(std::floor(p.u / subsample_stride));
    const int gy0 = static_cast<int>(std::floor(p.v / subsample_stride));
    int best_node = -1;
    double best_d2 = 1.0 + 1e-12;  // within 1 pixel
    for (int gy = gy0; gy <= gy0 + 1; ++gy) {
      for (int gx = gx0; gx <= gx0 + 1; ++gx) {
        if (gx < 0 || gy < 0 || gx >= grid_w || gy >= grid_h) continue;
        const int node = node_at[static_cast<size_t>(gy) * grid_w + gx];
        if (node < 0) continue;
        const double du = p.u - graph.nodes[node].pixel_x;
        const double dv = p.v - graph.nodes[node].pixel_y;
        const double d2 = du * du + dv * dv;
        if (d2 < best_d2) {
          best_d2 = d2;
          best_node = node;
        }
      }
    }
    if (best_node >= 0) {
      anchor_sum[best_node] += p.z;
      anchor_count[best_node] += 1;
    }
  }
  for (int i = 0; i < node_count; ++i) {
    if (anchor_count[i] == 0) continue;
    graph.anchor_nodes.push_back(i);
    graph.anchor_depths.push_back(anchor_sum[i] / anchor_count[i]);
  }
  return graph;
}

GdcResult solve_correction(const DepthGraph& graph, const DepthMap& initial_depth,
                           const GdcOptions& options) {
  const int node_count = static_cast<int>(graph.nodes.size());
  if (node_count == 0) throw std::invalid_argument("solve_correction: empty graph");
  if (graph.anchor_nodes.empty()) throw NumericError("unanchored system");
  if (!(options.anchor_strength >= 0.0)) {
    throw std::invalid_argument("solve_correction: anchor_strength must be >= 0");
  }
  if (graph.width != initial_depth.width() || graph.height != initial_depth.height()) {
    throw std::invalid_argument("solve_correction: depth map shape differs from graph");
  }

  const bool hard = std::isinf(options.anchor_strength);
  const int anchor_count = static_cast<int>(graph.anchor_nodes.size());

  std::vector<int> anchor_of(node_count, -1);
  for (int a = 0; a < anchor_count; ++a) anchor_of[graph.anchor_nodes[a]] = a;

  GdcResult result;
  result.node_depths.assign(node_count, 0.0);

  // Reconstruction rows of (I - W), remapped below.
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<size_t>(node_count) * (graph.neighbors.empty() ? 1 : 8));
  auto for_each_row_entry = [&](auto&& emit) {
    for (int i = 0; i < node_count; ++i) {
      emit(i, i, 1.0);
      for (size_t j = 0; j < graph.neighbors[i].size(); ++j) {
        emit(i, graph.neighbors[i][j], -graph.weights[i][j]);
      }
    }
  };

  Eigen::VectorXd solution;
  Eigen::VectorXd guess;
  Eigen::SparseMatrix<double> system;
  Eigen::VectorXd rhs;

  if (hard) {
    std::vector<int> column_of(node_count, -1);
    int unknowns = 0;
    for (int i = 0; i < node_count; ++i) {
      if (anchor_of[i] < 0) column_of[i] = unknowns++;
    }
    for (int i = 0; i < node_count; ++i) {
      if (anchor_of[i] >= 0) {
        result.node_depths[i] = graph.anchor_depths[anchor_of[i]];
      }
    }
    if (unknowns > 0) {
      rhs = Eigen::VectorXd::Zero(node_count);
      for_each_row_entry([&](int row, int col, double value) {
        if (column_of[col] >= 0) {
          entries.emplace_back(row, column_of[col], value);
        } else {
          rhs[row] -= value * graph.anchor_depths[anchor_of[col]];
        }
      });
      system.resize(node_count, unknowns);
      system.setFromTriplets(entries.begin(), entries.end());

      guess.resize(unknowns);
      for (int i = 0; i < node_count; ++i) {
        if (column_of[i] >= 0) guess[column_of[i]] = graph.nodes[i].position.z();
      }

      Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> solver;
      solver.setTolerance(options.cg_tolerance);
      solver.setMaxIterations(
          std::max<int64_t>(10, static_cast<int64_t>(options.max_iterations_per_node) *
                                    node_count));
      solver.compute(system);
      solution = solver.solveWithGuess(rhs, guess);
      result.solver_iterations = static_cast<int>(solver.iterations());
      if (!solution.allFinite()) {
        throw NumericError("solve_correction: solver produced non-finite values");
      }
      for (int i = 0; i < node_count; ++i) {
        if (column_of[i] >= 0) result.node_depths[i] = solution[column_of[i]];
      }
    }
  } else {
    const double root_strength = std::sqrt(options.anchor_strength);
    for_each_row_entry([&](int row, int col, double value) {
      entries.emplace_back(row, col, value);
    });
    for (int a = 0; a < anchor_count; ++a) {
      entries.emplace_back(node_count + a, graph.anchor_nodes[a], root_strength);
    }
    system.resize(node_count + anchor_count, node_count);
    system.setFromTriplets(entries.begin(), entries.end());
    rhs = Eigen::VectorXd::Zero(node_count + anchor_count);
    for (int a = 0; a < anchor_count; ++a) {
      rhs[node_count + a] = root_strength * graph.anchor_depths[a];
    }
    guess.resize(node_count);
    for (int i = 0; i < node_count; ++i) guess[i] = graph.nodes[i].position.z();

    Eigen::LeastSquaresConjugateGradient<Eigen::SparseMatrix<double>> solver;
    solver.setTolerance(options.cg_tolerance);
    solver.setMaxIterations(
        std::max<int64_t>(10, static_cast<int64_t>(options.max_iterations_per_node) *
                                  node_count));
    solver.compute(system);
    solution = solver.solveWithGuess(rhs, guess);
    result.solver_iterations = static_cast<int>(solver.iterations());
    if (!solution.allFinite()) {
      throw NumericError("solve_correction: solver produced non-finite values");
    }
    for (int i = 0; i < node_count; ++i) result.node_depths[i] = solution[i];
  }

  if (system.rows() > 0 && solution.size() > 0) {
    // relative normal-equation residual of the solved least-squares system
    const Eigen::VectorXd normal_rhs = system.transpose() * rhs;
    const double denom = normal_rhs.norm();
    const Eigen::VectorXd normal_res =
        system.transpose() * (system * solution) - normal_rhs;
    result.solver_residual = denom > 0.0 ? normal_res.norm() / denom : normal_res.norm();
    if (result.solver_residual > std::sqrt(options.cg_tolerance)) {
      throw NumericError("solve_correction: solver did not converge, residual " +
                         std::to_string(result.solver_residual));
    }
  }

  for (double z : result.node_depths) {
    if (!(z > 0.0)) {
      // A negative or zero corrected depth cannot be lifted back to 3D.
      throw NumericError("solve_correction: corrected depth left the valid range");
    }
  }

  result.corrected = fill_full_resolution(graph, initial_depth, result.node_depths);
  return result;
}

GdcResult refine_depth(const DepthMap& initial_depth, const CameraIntrinsics& intrinsics,
                       const PointCloud& lidar, const GdcOptions& options) {
  DepthGraph graph = build_graph(initial_depth, intrinsics, lidar, options.k,
                                 options.stride, options.ridge_scale);
  return solve_correction(graph, initial_depth, options);
}

}  // namespace fusionkit
