#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "gtno/errors.hpp"
#include "gtno/pde_data.hpp"

namespace gtno {

namespace {

constexpr std::size_t kReferenceLattice = 64;

struct CosineField {
  std::size_t modes;
  std::vector<double> coef;  // modes x modes, (k2, k1) row-major

  double eval_lattice(const std::vector<double>& cx, const std::vector<double>& cy) const {
    double s = 0.0;
    for (std::size_t k2 = 0; k2 < modes; ++k2) {
      double row = 0.0;
      for (std::size_t k1 = 0; k1 < modes; ++k1) row += coef[k2 * modes + k1] * cx[k1];
      s += row * cy[k2];
    }
    return s;
  }

  std::vector<double> sample(std::size_t nx, std::size_t ny) const {
    auto basis = [this](std::size_t n) {
      std::vector<std::vector<double>> b(n, std::vector<double>(modes));
      for (std::size_t i = 0; i < n; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(n - 1);
        for (std::size_t k = 0; k < modes; ++k) b[i][k] = std::cos(std::numbers::pi * static_cast<double>(k) * x);
      }
      return b;
    };
    const auto bx = basis(nx), by = basis(ny);
    std::vector<double> out(nx * ny);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) out[j * nx + i] = eval_lattice(bx[i], by[j]);
    return out;
  }
};

CosineField draw_field(std::uint64_t seed, const DarcyParams& p) {
  CosineField f{p.modes, std::vector<double>(p.modes * p.modes, 0.0)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  for (std::size_t k2 = 0; k2 < p.modes; ++k2) {
    for (std::size_t k1 = 0; k1 < p.modes; ++k1) {
      const double xi = normal(rng);
      if (k1 == 0 && k2 == 0) continue;
      const double lam = pi2 * static_cast<double>(k1 * k1 + k2 * k2) + p.tau * p.tau;
      f.coef[k2 * p.modes + k1] = xi * std::pow(lam, -p.alpha / 2.0);
    }
  }
  return f;
}

double median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

// Interior operator, matrix-free. Unknowns are the interior nodes in
// row-major order.
struct DarcyOperator {
  std::size_t nx, ny, mx, my;
  double ihx2, ihy2;
  std::vector<double> east, north, diag;  // face coefficients scaled by 1/h^2

  DarcyOperator(const std::vector<double>& a, std::size_t nx_, std::size_t ny_)
      : nx(nx_), ny(ny_), mx(nx_ - 2), my(ny_ - 2) {
    const double hx = 1.0 / static_cast<double>(nx - 1), hy = 1.0 / static_cast<double>(ny - 1);
    ihx2 = 1.0 / (hx * hx);
    ihy2 = 1.0 / (hy * hy);
    east.assign(nx * ny, 0.0);
    north.assign(nx * ny, 0.0);
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const std::size_t p = j * nx + i;
        if (i + 1 < nx) east[p] = harmonic(a[p], a[p + 1]) * ihx2;
        if (j + 1 < ny) north[p] = harmonic(a[p], a[p + nx]) * ihy2;
      }
    diag.assign(mx * my, 0.0);
    for (std::size_t j = 1; j + 1 < ny; ++j)
      for (std::size_t i = 1; i + 1 < nx; ++i) {
        const std::size_t p = j * nx + i;
        diag[(j - 1) * mx + (i - 1)] = east[p] + east[p - 1] + north[p] + north[p - nx];
      }
  }

  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    for (std::size_t j = 0; j < my; ++j)
      for (std::size_t i = 0; i < mx; ++i) {
        const std::size_t k = j * mx + i;
        const std::size_t p = (j + 1) * nx + (i + 1);
        double s = diag[k] * u[k];
        if (i > 0) s -= east[p - 1] * u[k - 1];
        if (i + 1 < mx) s -= east[p] * u[k + 1];
        if (j > 0) s -= north[p - nx] * u[k - mx];
        if (j + 1 < my) s -= north[p] * u[k + mx];
        out[k] = s;
      }
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_grid(const std::vector<double>& a, std::size_t nx, std::size_t ny) {
  if (nx < 3 || ny < 3) throw ConfigError("Darcy grid needs at least 3x3 nodes");
  if (a.size() != nx * ny) throw ShapeError("coefficient size does not match the grid");
  for (double v : a)
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("Darcy coefficient must be positive and finite");
}

}  // namespace

std::vector<double> gen_darcy_coefficient(std::uint64_t seed, std::size_t nx, std::size_t ny, const DarcyParams& p) {
  if (nx < 8 || ny < 8) throw ConfigError("Darcy coefficient grid must be at least 8x8");
  if (p.modes < 2) throw ConfigError("Darcy field needs at least 2 modes");
  const CosineField f = draw_field(seed, p);
  const double threshold = median(f.sample(kReferenceLattice, kReferenceLattice));
  std::vector<double> a = f.sample(nx, ny);
  for (double& v : a) v = v > threshold ? p.a_high : p.a_low;
  return a;
}

std::vector<double> assemble_darcy_dense(const std::vector<double>& a, std::size_t nx, std::size_t ny) {
  check_grid(a, nx, ny);
  DarcyOperator op(a, nx, ny);
  const std::size_t n = op.mx * op.my;
  std::vector<double> m(n * n), e(n, 0.0), col(n);
  for (std::size_t c = 0; c < n; ++c) {
    e[c] = 1.0;
    op.apply(e, col);
    e[c] = 0.0;
    for (std::size_t r = 0; r < n; ++r) m[r * n + c] = col[r];
  }
  return m;
}

std::vector<double> solve_darcy(const std::vector<double>& a, double beta, std::size_t nx, std::size_t ny) {
  check_grid(a, nx, ny);
  DarcyOperator op(a, nx, ny);
  const std::size_t n = op.mx * op.my;
  std::vector<double> u(n, 0.0), r(n, beta), p(n), ap(n);
  std::vector<double> full(nx * ny, 0.0);
  const double bnorm = std::sqrt(dot(r, r));
  if (bnorm == 0.0) return full;

  p = r;
  double rr = dot(r, r);
  const std::size_t max_iter = 10 * n + 100;
  std::size_t it = 0;
  for (; it < max_iter && std::sqrt(rr) > 1e-10 * bnorm; ++it) {
    op.apply(p, ap);
    const double alpha = rr / dot(p, ap);
    for (std::size_t k = 0; k < n; ++k) {
      u[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    const double rr_new = dot(r, r);
    const double b = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + b * p[k];
  }
  // The recurrence residual drifts; confirm against the true residual.
  op.apply(u, ap);
  double res = 0.0;
  for (std::size_t k = 0; k < n; ++k) res += (beta - ap[k]) * (beta - ap[k]);
  if (std::sqrt(res) > 1e-9 * bnorm) {
    throw ConvergenceError("Darcy CG did not converge in " + std::to_string(it) + " iterations");
  }
  for (std::size_t j = 1; j + 1 < ny; ++j)
    for (std::size_t i = 1; i + 1 < nx; ++i) full[j * nx + i] = u[(j - 1) * op.mx + (i - 1)];
  return full;
}

}  // namespace gtno
