#pragma once

#include <limits>
#include <vector>

#include "fusionkit/types.hpp"

namespace fusionkit {

/// Neighborhood graph over lifted depth pixels. Each node reconstructs its
/// depth from k neighbors with weights summing to 1; anchor nodes carry a
/// known LiDAR depth.
struct DepthGraph {
  struct Node {
    int pixel_x = 0;
    int pixel_y = 0;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // from the initial depth
    double initial_depth = 0.0;
  };

  std::vector<Node> nodes;
  std::vector<std::vector<int>> neighbors;      // k per node
  std::vector<std::vector<double>> weights;     // same shape, rows sum to 1
  std::vector<int> anchor_nodes;                // indices into nodes
  std::vector<double> anchor_depths;            // matching LiDAR depths, > 0

  int width = 0;   // raster the nodes were sampled from
  int height = 0;
  int stride = 1;
};

struct GdcOptions {
  int k = 10;
  int stride = 2;
  double ridge_scale = 1e-4;  // ridge = ridge_scale * trace of the local Gram
  double anchor_strength = std::numeric_limits<double>::infinity();  // inf = hard
  double cg_tolerance = 1e-10;
  int max_iterations_per_node = 10;  // iteration cap = this * node count
};

/// Samples the depth map on a strided grid, lifts the samples to 3D, wires
/// exact k-nearest neighbors in 3D and solves the constrained local
/// reconstruction weights. Nodes within 1 pixel of a projected LiDAR point
/// become anchors holding the LiDAR depth (averaged over coinciding points).
DepthGraph build_graph(const DepthMap& initial_depth, const CameraIntrinsics& intrinsics,
                       const PointCloud& lidar, int k, int subsample_stride,
                       double ridge_scale = 1e-4);

struct GdcResult {
  std::vector<double> node_depths;  // corrected, aligned with graph.nodes
  DepthMap corrected;               // full resolution
  int solver_iterations = 0;
  double solver_residual = 0.0;     // relative normal-equation residual
};

/// Solves min_z  sum_i (z_i - sum_j w_ij z_j)^2
///             + anchor_strength * sum_a (z_a - Z_a)^2.
/// Infinite anchor_strength pins anchors exactly via variable elimination.
/// Off-node pixels are filled by bilinearly interpolating the per-node
/// correction ratio and multiplying the initial depth. Throws NumericError
/// when the graph has no anchors or the solver fails to converge.
GdcResult solve_correction(const DepthGraph& graph, const DepthMap& initial_depth,
                           const GdcOptions& options);

/// build_graph + solve_correction with shared options.
GdcResult refine_depth(const DepthMap& initial_depth, const CameraIntrinsics& intrinsics,
                       const PointCloud& lidar, const GdcOptions& options);

}  // namespace fusionkit
