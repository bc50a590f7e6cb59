#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "gtno/tensor.hpp"

namespace gtno {

struct AxisBounds {
  double lo = 0.0;
  double hi = 1.0;
  double length() const { return hi - lo; }
  bool operator==(const AxisBounds&) const = default;
};

/// An L-point discretization of a box-shaped domain.
class PointSet {
 public:
  PointSet() = default;
  /// positions is [L x n]. Throws ConfigError for out-of-bounds or duplicate
  /// points.
  PointSet(Tensor positions, std::vector<AxisBounds> bounds);

  std::size_t size() const { return positions_.rows(); }
  std::size_t dims() const { return bounds_.size(); }
  const Tensor& positions() const { return positions_; }
  const std::vector<AxisBounds>& bounds() const { return bounds_; }
  double coord(std::size_t i, std::size_t axis) const { return positions_[i * dims() + axis]; }

  /// Positions mapped affinely onto the unit box [0,1]^n.
  PointSet to_unit_box() const;
  /// Row i of the result is row order[i] of this set.
  PointSet permuted(std::span<const std::size_t> order) const;

 private:
  Tensor positions_;
  std::vector<AxisBounds> bounds_;
};

/// Lattice nodes including the boundary, row-major with y outer and x inner.
PointSet uniform_grid(std::size_t nx, std::size_t ny, AxisBounds x_bounds = {}, AxisBounds y_bounds = {});

/// Cell centres of an nx x ny finite-volume grid, same ordering.
PointSet cell_centered_grid(std::size_t nx, std::size_t ny, AxisBounds x_bounds, AxisBounds y_bounds);

/// Neighbourhood structure plus node features h_i = theta_i || x_i.
///
/// Neighbour lists include the node itself, are sorted ascending, and are
/// stored in CSR form. A second CSR ordering of the same sets
/// (aggregation order) sorts each list by point coordinates instead of by
/// index; message-passing reductions iterate in that order so results do
/// not depend on node labelling.
class Graph {
 public:
  Graph() = default;
  Graph(PointSet points, std::vector<std::vector<std::uint32_t>> neighbors,
        std::optional<double> radius, std::optional<std::size_t> k);

  const PointSet& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::size_t edge_count() const { return indices_.size(); }
  std::optional<double> radius() const { return radius_; }
  std::optional<std::size_t> k() const { return k_; }

  std::span<const std::uint32_t> neighbors(std::size_t i) const;
  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const std::uint32_t> indices() const { return indices_; }

  /// Per-edge centre node, aligned with aggregation_indices().
  std::span<const std::uint32_t> aggregation_centers() const { return agg_centers_; }
  std::span<const std::uint32_t> aggregation_indices() const { return agg_indices_; }
  /// Canonical node order (lexicographic by coordinates) used for global
  /// reductions over all nodes.
  std::span<const std::uint32_t> canonical_order() const { return canonical_; }

  std::vector<double> inverse_degrees() const;
  std::size_t isolated_count() const;
  bool is_symmetric() const;

  bool has_features() const { return features_.defined(); }
  const Tensor& node_features() const { return features_; }
  void set_node_features(Tensor features);

 private:
  PointSet points_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> indices_;
  std::vector<std::uint32_t> agg_centers_;
  std::vector<std::uint32_t> agg_indices_;
  std::vector<std::uint32_t> canonical_;
  std::optional<double> radius_;
  std::optional<std::size_t> k_;
  Tensor features_;
};

struct RadiusGraphOptions {
  /// Throw IsolatedNodeError instead of warning when a node has no
  /// neighbours besides itself.
  bool strict_connectivity = false;
};

/// Closed-ball graph: j in N_i iff |x_i - x_j| <= r (self always included).
/// Built through a uniform bucket grid of cell size r.
Graph build_radius_graph(const PointSet& points, double r, RadiusGraphOptions opts = {});

/// Directed kNN graph: N_i = {i} plus the k nearest other points, ties to
/// the lower index.
Graph build_knn_graph(const PointSet& points, std::size_t k);

/// Returns a copy of g whose features are [theta | positions].
Graph assemble_node_features(const Graph& g, const Tensor& theta);

}  // namespace gtno
