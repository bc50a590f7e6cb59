#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gtno/graph.hpp"
#include "gtno/tensor.hpp"

namespace gtno {

// ---------------------------------------------------------------------------
// Darcy flow:  -div(a grad u) = beta on (0,1)^2, u = 0 on the boundary.
// ---------------------------------------------------------------------------

struct DarcyParams {
  double beta = 1.0;
  double a_low = 3.0;
  double a_high = 12.0;
  /// Spectral decay of the underlying Gaussian field:
  /// coefficient (pi^2 |k|^2 + tau^2)^(-alpha/2).
  double tau = 3.0;
  double alpha = 2.0;
  std::uint32_t modes = 16;
};

/// Two-phase coefficient on the nx*ny lattice nodes of [0,1]^2 (row-major,
/// y outer). The field is a continuous cosine series thresholded at the
/// median of its values on a fixed 64x64 reference lattice, so one seed
/// describes the same field at every resolution.
std::vector<double> gen_darcy_coefficient(std::uint64_t seed, std::size_t nx, std::size_t ny,
                                          const DarcyParams& p = {});

/// Five-point conservative stencil with harmonic-mean face coefficients,
/// solved by conjugate gradients to relative residual 1e-10. Returns u on
/// all nx*ny nodes (boundary rows are zero).
std::vector<double> solve_darcy(const std::vector<double>& a, double beta, std::size_t nx, std::size_t ny);

/// The interior system matrix as a dense row-major (n x n) array, n =
/// (nx-2)(ny-2). For symmetry checks on small grids.
std::vector<double> assemble_darcy_dense(const std::vector<double>& a, std::size_t nx, std::size_t ny);

// ---------------------------------------------------------------------------
// Diffusion-reaction (activator/inhibitor) on [-1,1]^2, no-flux walls.
// ---------------------------------------------------------------------------

struct DiffReactParams {
  double du = 1e-3;
  double dv = 5e-3;
  double k = 5e-3;
  double t_end = 5.0;
  bool reactions = true;
  /// Explicit Euler step; 0 picks 0.2 * min(dx^2 / (4 max(du,dv)), 1e-2).
  double dt = 0.0;
};

/// Frames of interleaved (u, v) per cell: frames[t] is [nx*ny x 2] at
/// t * t_end / (frames - 1).
struct Trajectory {
  std::vector<std::vector<double>> frames;
  std::size_t channels = 1;
};

/// Cell-centered field with seeded standard-normal initial u and v. The
/// initial state may also be supplied directly (2 values per cell).
Trajectory simulate_diffusion_reaction(std::uint64_t seed, std::size_t nx, std::size_t ny, std::size_t frames,
                                       const DiffReactParams& p = {},
                                       const std::vector<double>* initial = nullptr);

// ---------------------------------------------------------------------------
// Shallow water on [-2.5,2.5]^2, flat bottom, reflective walls.
// ---------------------------------------------------------------------------

struct ShallowWaterParams {
  double g = 1.0;
  double t_end = 1.0;
  double radius_low = 0.3;
  double radius_high = 0.7;
  double h_inside = 2.0;
  double h_outside = 1.0;
  double cfl = 0.4;
  /// Fixed dam radius; negative draws it uniformly per seed.
  double radius = -1.0;
};

/// First-order Rusanov finite volumes. Frames hold the depth h only.
Trajectory simulate_shallow_water(std::uint64_t seed, std::size_t nx, std::size_t ny, std::size_t frames,
                                  const ShallowWaterParams& p = {});

/// Total volume sum(h) * dx * dy of a depth frame on the default domain.
double shallow_water_volume(const std::vector<double>& h, std::size_t nx, std::size_t ny);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

enum class DatasetKind : std::uint8_t { darcy = 0, swe = 1, diffreact = 2, external = 3 };

std::string to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& s);

struct DatasetHeader {
  DatasetKind kind = DatasetKind::darcy;
  std::uint32_t nx = 0, ny = 0;  // 0 for scattered points
  std::uint32_t points = 0;      // L
  std::uint32_t in_channels = 1;
  std::uint32_t out_channels = 1;
  std::uint32_t t_in = 0;
  std::uint32_t t_out = 0;  // 0 means a steady target
  std::vector<AxisBounds> bounds;
  std::vector<std::pair<std::string, double>> params;
  std::uint64_t seed = 0;

  std::size_t frames() const { return t_out == 0 ? 1 : t_out; }
  std::optional<double> param(const std::string& name) const;
  bool operator==(const DatasetHeader&) const = default;
};

struct Sample {
  Tensor theta;                // [L x in_channels]
  std::vector<Tensor> target;  // frames() tensors of [L x out_channels]
  std::optional<PointSet> points;  // per-sample discretization
};

struct Dataset {
  DatasetHeader header;
  std::optional<PointSet> shared_points;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  const PointSet& points(std::size_t i) const;
};

/// Lossless container: magic, version, header, positions, f64 payload.
void write_dataset(const std::string& path, const Dataset& d);
Dataset read_dataset(const std::string& path);
std::vector<char> dataset_bytes(const Dataset& d);

/// A dataset file whose samples carry explicit (possibly non-uniform)
/// positions. Positions outside the declared bounds are rejected.
Dataset load_external_pointcloud_dataset(const std::string& path);

struct GenOptions {
  DatasetKind kind = DatasetKind::darcy;
  std::size_t count = 1;
  std::size_t nx = 16, ny = 16;
  std::uint64_t seed = 0;
  std::size_t t_in = 4, t_out = 10;
  DarcyParams darcy;
  DiffReactParams diffreact;
  ShallowWaterParams swe;
};

/// Sample i uses seed + i.
Dataset generate_dataset(const GenOptions& opt);

}  // namespace gtno
