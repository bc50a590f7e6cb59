#include <algorithm>
#include <cmath>
#include <random>

#include "gtno/errors.hpp"
#include "gtno/pde_data.hpp"

namespace gtno {

namespace {

// Flux-form Laplacian with zero flux through the walls: every interior face
// moves the same amount out of one cell and into its neighbour.
void laplacian(const std::vector<double>& f, std::size_t nx, std::size_t ny, double inv_dx2, double inv_dy2,
               std::vector<double>& out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i + 1 < nx; ++i) {
      const std::size_t p = j * nx + i;
      const double flux = (f[p + 1] - f[p]) * inv_dx2;
      out[p] += flux;
      out[p + 1] -= flux;
    }
  for (std::size_t j = 0; j + 1 < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t p = j * nx + i;
      const double flux = (f[p + nx] - f[p]) * inv_dy2;
      out[p] += flux;
      out[p + nx] -= flux;
    }
}

}  // namespace

Trajectory simulate_diffusion_reaction(std::uint64_t seed, std::size_t nx, std::size_t ny, std::size_t frames,
                                       const DiffReactParams& p, const std::vector<double>* initial) {
  if (nx < 2 || ny < 2) throw ConfigError("diffusion-reaction grid must be at least 2x2");
  if (frames < 2) throw ConfigError("diffusion-reaction needs at least 2 frames");
  if (!(p.t_end > 0.0) || p.du < 0.0 || p.dv < 0.0) throw ConfigError("invalid diffusion-reaction parameters");
  const std::size_t L = nx * ny;
  const double dx = 2.0 / static_cast<double>(nx), dy = 2.0 / static_cast<double>(ny);
  const double hmin = std::min(dx, dy);
  const double dmax = std::max(p.du, p.dv);
  const double stable = dmax > 0.0 ? hmin * hmin / (4.0 * dmax) : 1e-2;
  double dt_max = p.dt > 0.0 ? p.dt : 0.2 * std::min(stable, 1e-2);
  if (dt_max > stable) throw CflError("time step " + std::to_string(dt_max) + " exceeds the stability limit " +
                                      std::to_string(stable));

  std::vector<double> u(L), v(L);
  if (initial) {
    if (initial->size() != 2 * L) throw ShapeError("initial state must hold 2 values per cell");
    for (std::size_t c = 0; c < L; ++c) {
      u[c] = (*initial)[2 * c];
      v[c] = (*initial)[2 * c + 1];
    }
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t c = 0; c < L; ++c) u[c] = normal(rng);
    for (std::size_t c = 0; c < L; ++c) v[c] = normal(rng);
  }

  Trajectory tr;
  tr.channels = 2;
  auto snapshot = [&] {
    std::vector<double> f(2 * L);
    for (std::size_t c = 0; c < L; ++c) {
      f[2 * c] = u[c];
      f[2 * c + 1] = v[c];
    }
    tr.frames.push_back(std::move(f));
  };
  snapshot();

  const double interval = p.t_end / static_cast<double>(frames - 1);
  const auto substeps = static_cast<std::size_t>(std::ceil(interval / dt_max - 1e-12));
  const double dt = interval / static_cast<double>(substeps);
  const double idx2 = 1.0 / (dx * dx), idy2 = 1.0 / (dy * dy);
  std::vector<double> lu(L), lv(L);
  for (std::size_t f = 1; f < frames; ++f) {
    for (std::size_t s = 0; s < substeps; ++s) {
      laplacian(u, nx, ny, idx2, idy2, lu);
      laplacian(v, nx, ny, idx2, idy2, lv);
      for (std::size_t c = 0; c < L; ++c) {
        double ru = 0.0, rv = 0.0;
        if (p.reactions) {
          ru = u[c] - u[c] * u[c] * u[c] - p.k - v[c];
          rv = u[c] - v[c];
        }
        const double un = u[c] + dt * (p.du * lu[c] + ru);
        const double vn = v[c] + dt * (p.dv * lv[c] + rv);
        if (!std::isfinite(un) || !std::isfinite(vn)) throw NumericFault("diffusion-reaction state diverged");
        u[c] = un;
        v[c] = vn;
      }
    }
    snapshot();
  }
  return tr;
}

}  // namespace gtno
