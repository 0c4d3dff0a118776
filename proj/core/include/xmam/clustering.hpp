#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xmam/tensor.hpp"

namespace xmam {

using Point = std::vector<Scalar>;

/// Symmetric n x n matrix, row-major.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<Scalar> v;

  DenseMatrix() = default;
  explicit DenseMatrix(std::size_t n_, Scalar fill = 0.0) : n(n_), v(n_ * n_, fill) {}
  Scalar& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
  Scalar operator()(std::size_t i, std::size_t j) const { return v[i * n + j]; }
};

DenseMatrix pairwise_distances(std::span<const Point> points);

/// Distance from each point to its k-th nearest neighbour, the point itself excluded.
std::vector<Scalar> core_distances(const DenseMatrix& dist, std::size_t k);

/// max(core_k(a), core_k(b), |a - b|) off the diagonal, 0 on it.
DenseMatrix mutual_reachability(std::span<const Point> points, std::size_t min_samples);

struct MstEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  Scalar weight = 0.0;
};

/// Prim's algorithm on a dense graph; edges in the order they were added.
std::vector<MstEdge> minimum_spanning_tree(const DenseMatrix& weights);

inline constexpr int kNoise = -1;

struct HdbscanOptions {
  std::size_t min_cluster_size = 2;
  std::size_t min_samples = 1;
  /// When the hierarchy never splits into two clusters of min_cluster_size,
  /// all points form one cluster except those that detached from it at a
  /// distance above this multiple of the median detachment distance.
  Scalar single_cluster_outlier_factor = 3.0;
};

struct ClusterResult {
  /// Cluster index per point, or kNoise. Index 0 is the major cluster.
  std::vector<int> labels;
  /// Member indices per cluster, ordered by size (descending), then by mean
  /// intra-cluster pairwise distance (ascending), then by smallest member.
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<MstEdge> mst;
  /// Condensed-tree nodes visited while extracting the flat clustering.
  std::size_t hierarchy_passes = 0;
  bool single_cluster = false;

  bool all_noise() const { return clusters.empty(); }
};

/// Density-based hierarchical clustering with excess-of-mass cluster
/// extraction over lambda = 1 / mutual-reachability distance.
ClusterResult hdbscan(std::span<const Point> points, const HdbscanOptions& options = {});

struct PcaOptions {
  Scalar tolerance = 1e-8;
  std::size_t max_iterations = 100000;
};

struct PcaResult {
  /// One row per input point, k coordinates each.
  std::vector<Point> coords;
  /// k unit vectors in the input space.
  std::vector<Point> components;
  /// Sample variance along each component (denominator n - 1).
  std::vector<Scalar> variances;
  Point mean;
};

/// Projects centered points onto the top-k principal directions found by
/// power iteration with deflation. Component signs are arbitrary.
PcaResult pca_project(std::span<const std::span<const Scalar>> points, std::size_t k,
                      const PcaOptions& options = {});
PcaResult pca_project(std::span<const Point> points, std::size_t k,
                      const PcaOptions& options = {});

}  // namespace xmam
