#include "gtno/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <unordered_map>

#include "gtno/errors.hpp"

namespace gtno {

namespace {

double squared_distance(const PointSet& p, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t a = 0; a < p.dims(); ++a) {
    const double d = p.coord(i, a) - p.coord(j, a);
    s += d * d;
  }
  return s;
}

bool coord_less(const PointSet& p, std::uint32_t i, std::uint32_t j) {
  for (std::size_t a = 0; a < p.dims(); ++a) {
    const double ci = p.coord(i, a), cj = p.coord(j, a);
    if (ci != cj) return ci < cj;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// PointSet
// ---------------------------------------------------------------------------

PointSet::PointSet(Tensor positions, std::vector<AxisBounds> bounds)
    : positions_(std::move(positions)), bounds_(std::move(bounds)) {
  if (!positions_.defined() || positions_.rank() != 2) throw ConfigError("point set positions must be [L x n]");
  const std::size_t n = positions_.shape()[1];
  if (bounds_.size() != n) throw ConfigError("point set needs one bounds pair per axis");
  for (const auto& b : bounds_) {
    if (!(b.hi > b.lo)) throw ConfigError("degenerate domain bounds");
  }
  const std::size_t count = positions_.rows();
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t a = 0; a < n; ++a) {
      const double x = coord(i, a);
      if (!(x >= bounds_[a].lo && x <= bounds_[a].hi)) {
        throw ConfigError("point " + std::to_string(i) + " lies outside the domain bounds");
      }
    }
  }
  std::vector<std::uint32_t> order(count);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [this](std::uint32_t a, std::uint32_t b) { return coord_less(*this, a, b); });
  for (std::size_t k = 1; k < count; ++k) {
    if (!coord_less(*this, order[k - 1], order[k])) {
      throw ConfigError("duplicate points " + std::to_string(order[k - 1]) + " and " + std::to_string(order[k]));
    }
  }
}

PointSet PointSet::to_unit_box() const {
  std::vector<double> v(positions_.data().begin(), positions_.data().end());
  const std::size_t n = dims();
  for (std::size_t i = 0; i < size(); ++i)
    for (std::size_t a = 0; a < n; ++a) v[i * n + a] = (v[i * n + a] - bounds_[a].lo) / bounds_[a].length();
  return PointSet(Tensor::from(positions_.shape(), std::move(v)), std::vector<AxisBounds>(n, AxisBounds{0.0, 1.0}));
}

PointSet PointSet::permuted(std::span<const std::size_t> order) const {
  if (order.size() != size()) throw ConfigError("permutation length mismatch");
  const std::size_t n = dims();
  std::vector<double> v(size() * n);
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t a = 0; a < n; ++a) v[i * n + a] = coord(order[i], a);
  return PointSet(Tensor::from(positions_.shape(), std::move(v)), bounds_);
}

PointSet uniform_grid(std::size_t nx, std::size_t ny, AxisBounds xb, AxisBounds yb) {
  if (nx < 2 || ny < 2) throw ConfigError("uniform_grid needs at least 2 nodes per axis");
  std::vector<double> v;
  v.reserve(nx * ny * 2);
  for (std::size_t j = 0; j < ny; ++j) {
    // Endpoints are set exactly so boundary nodes sit on the bounds.
    const double y = j + 1 == ny ? yb.hi : yb.lo + yb.length() * static_cast<double>(j) / static_cast<double>(ny - 1);
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = i + 1 == nx ? xb.hi : xb.lo + xb.length() * static_cast<double>(i) / static_cast<double>(nx - 1);
      v.push_back(x);
      v.push_back(y);
    }
  }
  return PointSet(Tensor::from({nx * ny, 2}, std::move(v)), {xb, yb});
}

PointSet cell_centered_grid(std::size_t nx, std::size_t ny, AxisBounds xb, AxisBounds yb) {
  if (nx < 1 || ny < 1) throw ConfigError("cell_centered_grid needs at least one cell per axis");
  const double dx = xb.length() / static_cast<double>(nx);
  const double dy = yb.length() / static_cast<double>(ny);
  const double cx = 0.5 * (xb.lo + xb.hi), cy = 0.5 * (yb.lo + yb.hi);
  std::vector<double> v;
  v.reserve(nx * ny * 2);
  // Offsets from the centre are half-integers times the spacing, so mirrored
  // cells get exactly mirrored coordinates.
  for (std::size_t j = 0; j < ny; ++j) {
    const double y = cy + (static_cast<double>(j) + 0.5 - 0.5 * static_cast<double>(ny)) * dy;
    for (std::size_t i = 0; i < nx; ++i) {
      v.push_back(cx + (static_cast<double>(i) + 0.5 - 0.5 * static_cast<double>(nx)) * dx);
      v.push_back(y);
    }
  }
  return PointSet(Tensor::from({nx * ny, 2}, std::move(v)), {xb, yb});
}

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

Graph::Graph(PointSet points, std::vector<std::vector<std::uint32_t>> neighbors, std::optional<double> radius,
             std::optional<std::size_t> k)
    : points_(std::move(points)), radius_(radius), k_(k) {
  const std::size_t count = points_.size();
  if (neighbors.size() != count) throw ConfigError("neighbour list count mismatch");
  offsets_.assign(1, 0);
  for (std::size_t i = 0; i < count; ++i) {
    auto& nb = neighbors[i];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    if (nb.empty()) throw ConfigError("empty neighbourhood at node " + std::to_string(i));
    if (!std::binary_search(nb.begin(), nb.end(), static_cast<std::uint32_t>(i))) {
      throw ConfigError("neighbourhood of node " + std::to_string(i) + " lacks the node itself");
    }
    for (auto j : nb) {
      if (j >= count) throw ConfigError("neighbour index out of range");
    }
    indices_.insert(indices_.end(), nb.begin(), nb.end());
    offsets_.push_back(indices_.size());
  }

  agg_indices_ = indices_;
  agg_centers_.resize(indices_.size());
  for (std::size_t i = 0; i < count; ++i) {
    auto first = agg_indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
    auto last = agg_indices_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
    std::sort(first, last, [this](std::uint32_t a, std::uint32_t b) { return coord_less(points_, a, b); });
    std::fill(agg_centers_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]),
              agg_centers_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]), static_cast<std::uint32_t>(i));
  }
  canonical_.resize(count);
  std::iota(canonical_.begin(), canonical_.end(), 0u);
  std::sort(canonical_.begin(), canonical_.end(),
            [this](std::uint32_t a, std::uint32_t b) { return coord_less(points_, a, b); });
}

std::span<const std::uint32_t> Graph::neighbors(std::size_t i) const {
  return std::span<const std::uint32_t>(indices_).subspan(offsets_[i], offsets_[i + 1] - offsets_[i]);
}

std::vector<double> Graph::inverse_degrees() const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = 1.0 / static_cast<double>(offsets_[i + 1] - offsets_[i]);
  return out;
}

std::size_t Graph::isolated_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < size(); ++i) n += (offsets_[i + 1] - offsets_[i] == 1) ? 1 : 0;
  return n;
}

bool Graph::is_symmetric() const {
  for (std::size_t i = 0; i < size(); ++i) {
    for (auto j : neighbors(i)) {
      auto nj = neighbors(j);
      if (!std::binary_search(nj.begin(), nj.end(), static_cast<std::uint32_t>(i))) return false;
    }
  }
  return true;
}

void Graph::set_node_features(Tensor features) {
  if (features.rank() != 2 || features.rows() != size()) throw ShapeError("node feature rows must equal node count");
  features_ = std::move(features);
}

Graph build_radius_graph(const PointSet& points, double r, RadiusGraphOptions opts) {
  if (!(r > 0.0)) throw ConfigError("graph radius must be positive");
  const std::size_t count = points.size();
  const std::size_t n = points.dims();
  const double r2 = r * r;

  // Bucket cell coordinates along each axis, linearized into one key.
  std::vector<std::int64_t> extent(n);
  bool fits = true;
  double key_space = 1.0;
  for (std::size_t a = 0; a < n; ++a) {
    extent[a] = static_cast<std::int64_t>(std::floor(points.bounds()[a].length() / r)) + 1;
    key_space *= static_cast<double>(extent[a]);
  }
  fits = key_space < 4.0e18;

  std::vector<std::vector<std::uint32_t>> nbrs(count);
  if (!fits) {
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < count; ++j)
        if (i == j || squared_distance(points, i, j) <= r2) nbrs[i].push_back(static_cast<std::uint32_t>(j));
  } else {
    auto cell_of = [&](std::size_t i, std::size_t a) {
      const auto c = static_cast<std::int64_t>(std::floor((points.coord(i, a) - points.bounds()[a].lo) / r));
      return std::clamp<std::int64_t>(c, 0, extent[a] - 1);
    };
    auto linear_key = [&](const std::vector<std::int64_t>& c) {
      std::int64_t key = 0;
      for (std::size_t a = 0; a < n; ++a) key = key * extent[a] + c[a];
      return key;
    };
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> buckets;
    std::vector<std::int64_t> cell(n);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t a = 0; a < n; ++a) cell[a] = cell_of(i, a);
      buckets[linear_key(cell)].push_back(static_cast<std::uint32_t>(i));
    }
    std::size_t stencil = 1;
    for (std::size_t a = 0; a < n; ++a) stencil *= 3;
    std::vector<std::int64_t> probe(n);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t a = 0; a < n; ++a) cell[a] = cell_of(i, a);
      for (std::size_t s = 0; s < stencil; ++s) {
        std::size_t code = s;
        bool inside = true;
        for (std::size_t a = 0; a < n; ++a) {
          probe[a] = cell[a] + static_cast<std::int64_t>(code % 3) - 1;
          code /= 3;
          inside = inside && probe[a] >= 0 && probe[a] < extent[a];
        }
        if (!inside) continue;
        auto it = buckets.find(linear_key(probe));
        if (it == buckets.end()) continue;
        for (auto j : it->second) {
          if (j == i || squared_distance(points, i, j) <= r2) nbrs[i].push_back(j);
        }
      }
    }
  }

  Graph g(points, std::move(nbrs), r, std::nullopt);
  if (const std::size_t iso = g.isolated_count(); iso > 0) {
    if (opts.strict_connectivity) {
      throw IsolatedNodeError(std::to_string(iso) + " node(s) have no neighbours within radius " + std::to_string(r));
    }
    std::clog << "warning: " << iso << " isolated node(s) at radius " << r << '\n';
  }
  return g;
}

Graph build_knn_graph(const PointSet& points, std::size_t k) {
  const std::size_t count = points.size();
  if (k < 1 || k > count) throw ConfigError("knn: k must lie in [1, L]");
  std::vector<std::vector<std::uint32_t>> nbrs(count);
  std::vector<std::pair<double, std::uint32_t>> cand;
  const std::size_t take = std::min(k, count - 1);
  for (std::size_t i = 0; i < count; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < count; ++j) {
      if (j != i) cand.emplace_back(squared_distance(points, i, j), static_cast<std::uint32_t>(j));
    }
    // (distance, index) pairs order ties by lower index.
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
    nbrs[i].push_back(static_cast<std::uint32_t>(i));
    for (std::size_t t = 0; t < take; ++t) nbrs[i].push_back(cand[t].second);
  }
  return Graph(points, std::move(nbrs), std::nullopt, k);
}

Graph assemble_node_features(const Graph& g, const Tensor& theta) {
  if (theta.rank() != 2 || theta.rows() != g.size()) {
    throw ShapeError("theta has " + std::to_string(theta.rank() == 2 ? theta.rows() : 0) + " rows, graph has " +
                     std::to_string(g.size()) + " nodes");
  }
  Graph out = g;
  out.set_node_features(concat_cols({theta, g.points().positions()}));
  return out;
}

}  // namespace gtno
