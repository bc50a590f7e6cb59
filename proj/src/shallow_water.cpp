#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "gtno/errors.hpp"
#include "gtno/pde_data.hpp"

namespace gtno {

namespace {

constexpr double kHalfWidth = 2.5;

using State = std::array<double, 3>;  // h, hu, hv

// Physical flux along x; the y flux is the same routine with the momentum
// components swapped, which keeps the scheme exactly symmetric under x <-> y.
State flux_x(const State& q, double g) {
  const double u = q[1] / q[0];
  return {q[1], q[1] * u + 0.5 * g * q[0] * q[0], q[2] * u};
}

State rusanov(const State& l, const State& r, double g) {
  const State fl = flux_x(l, g), fr = flux_x(r, g);
  const double sl = std::abs(l[1] / l[0]) + std::sqrt(g * l[0]);
  const double sr = std::abs(r[1] / r[0]) + std::sqrt(g * r[0]);
  const double a = std::max(sl, sr);
  State f;
  for (int c = 0; c < 3; ++c) f[c] = 0.5 * (fl[c] + fr[c]) - 0.5 * a * (r[c] - l[c]);
  return f;
}

State swap_xy(const State& q) { return {q[0], q[2], q[1]}; }

}  // namespace

double shallow_water_volume(const std::vector<double>& h, std::size_t nx, std::size_t ny) {
  const double dx = 2.0 * kHalfWidth / static_cast<double>(nx), dy = 2.0 * kHalfWidth / static_cast<double>(ny);
  double s = 0.0;
  for (double v : h) s += v;
  return s * dx * dy;
}

Trajectory simulate_shallow_water(std::uint64_t seed, std::size_t nx, std::size_t ny, std::size_t frames,
                                  const ShallowWaterParams& p) {
  if (nx < 2 || ny < 2) throw ConfigError("shallow-water grid must be at least 2x2");
  if (frames < 2) throw ConfigError("shallow-water needs at least 2 frames");
  if (!(p.g > 0.0) || !(p.t_end > 0.0) || !(p.cfl > 0.0) || p.cfl > 1.0) {
    throw ConfigError("invalid shallow-water parameters");
  }
  if (!(p.h_inside > 0.0) || !(p.h_outside > 0.0)) throw ConfigError("initial depth must be positive");
  const std::size_t L = nx * ny;
  const double dx = 2.0 * kHalfWidth / static_cast<double>(nx), dy = 2.0 * kHalfWidth / static_cast<double>(ny);

  double radius = p.radius;
  if (radius < 0.0) {
    std::mt19937_64 rng(seed);
    radius = std::uniform_real_distribution<double>(p.radius_low, p.radius_high)(rng);
  }

  std::vector<State> q(L), next(L);
  for (std::size_t j = 0; j < ny; ++j) {
    const double y = (static_cast<double>(2 * j + 1) - static_cast<double>(ny)) * (0.5 * dy);
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = (static_cast<double>(2 * i + 1) - static_cast<double>(nx)) * (0.5 * dx);
      q[j * nx + i] = {x * x + y * y < radius * radius ? p.h_inside : p.h_outside, 0.0, 0.0};
    }
  }

  Trajectory tr;
  tr.channels = 1;
  auto snapshot = [&] {
    std::vector<double> h(L);
    for (std::size_t c = 0; c < L; ++c) h[c] = q[c][0];
    tr.frames.push_back(std::move(h));
  };
  snapshot();

  // Face fluxes: fx[j][i] is the face left of cell i (nx+1 per row).
  std::vector<State> fx((nx + 1) * ny), fy(nx * (ny + 1));
  const double interval = p.t_end / static_cast<double>(frames - 1);
  double t = 0.0;
  for (std::size_t f = 1; f < frames; ++f) {
    const double t_frame = interval * static_cast<double>(f);
    while (t < t_frame) {
      double smax = 0.0;
      for (const State& s : q) {
        const double c = std::sqrt(p.g * s[0]);
        smax = std::max({smax, std::abs(s[1] / s[0]) + c, std::abs(s[2] / s[0]) + c});
      }
      double dt = p.cfl * std::min(dx, dy) / smax;
      bool last = false;
      if (t + dt >= t_frame) {
        dt = t_frame - t;
        last = true;
      }

      for (std::size_t j = 0; j < ny; ++j) {
        for (std::size_t i = 0; i <= nx; ++i) {
          State l, r;
          if (i == 0) {
            r = q[j * nx];
            l = {r[0], -r[1], r[2]};
          } else if (i == nx) {
            l = q[j * nx + nx - 1];
            r = {l[0], -l[1], l[2]};
          } else {
            l = q[j * nx + i - 1];
            r = q[j * nx + i];
          }
          fx[j * (nx + 1) + i] = rusanov(l, r, p.g);
        }
      }
      for (std::size_t j = 0; j <= ny; ++j) {
        for (std::size_t i = 0; i < nx; ++i) {
          State b, a;  // below, above
          if (j == 0) {
            a = q[i];
            b = {a[0], a[1], -a[2]};
          } else if (j == ny) {
            b = q[(ny - 1) * nx + i];
            a = {b[0], b[1], -b[2]};
          } else {
            b = q[(j - 1) * nx + i];
            a = q[j * nx + i];
          }
          fy[j * nx + i] = swap_xy(rusanov(swap_xy(b), swap_xy(a), p.g));
        }
      }

      const double cx = dt / dx, cy = dt / dy;
      for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
          const std::size_t c = j * nx + i;
          const State& fw = fx[j * (nx + 1) + i];
          const State& fe = fx[j * (nx + 1) + i + 1];
          const State& fs = fy[j * nx + i];
          const State& fn = fy[(j + 1) * nx + i];
          for (int k = 0; k < 3; ++k) next[c][k] = q[c][k] - (cx * (fe[k] - fw[k]) + cy * (fn[k] - fs[k]));
          if (!(next[c][0] > 0.0)) throw DryingError("shallow-water depth became non-positive");
          if (!std::isfinite(next[c][1]) || !std::isfinite(next[c][2])) {
            throw NumericFault("shallow-water momentum diverged");
          }
        }
      std::swap(q, next);
      t = last ? t_frame : t + dt;
    }
    snapshot();
  }
  return tr;
}

}  // namespace gtno
