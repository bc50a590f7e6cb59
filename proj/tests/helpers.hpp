#pragma once

// Fixtures and brute-force reference implementations shared by the unit and
// acceptance tests. The oracles (graphs, dense Darcy solve) do not call the
// library code they check.

#include <algorithm>
#include <functional>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gtno/graph.hpp"
#include "gtno/tensor.hpp"

namespace testing {

inline gtno::PointSet random_points(std::mt19937_64& rng, std::size_t L, std::size_t dims = 2, double lo = 0.0,
                                    double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(L * dims);
  for (double& x : v) x = u(rng);
  return gtno::PointSet(gtno::Tensor::from({L, dims}, std::move(v)),
                        std::vector<gtno::AxisBounds>(dims, gtno::AxisBounds{lo, hi}));
}

inline gtno::Tensor random_tensor(std::mt19937_64& rng, gtno::Shape shape, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(gtno::shape_numel(shape));
  for (double& x : v) x = n(rng);
  return gtno::Tensor::from(std::move(shape), std::move(v), grad);
}

// Weighted sum with fixed random weights so no coordinate has a degenerate
// gradient.
inline gtno::Tensor probe(const gtno::Tensor& y, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  return gtno::sum(gtno::mul(y, random_tensor(rng, y.shape())));
}

struct GradCase {
  std::string name;
  std::function<gtno::Tensor(const gtno::Tensor&)> f;
  gtno::Tensor x;
};

/// One scalar probe per primitive and differentiable argument.
inline std::vector<GradCase> primitive_grad_cases(std::uint64_t seed) {
  using namespace gtno;
  std::mt19937_64 rng(seed);
  Tensor a = random_tensor(rng, {4, 6}), b = random_tensor(rng, {4, 6});
  Tensor w = random_tensor(rng, {3, 6}), bias = random_tensor(rng, {3});
  Tensor row = random_tensor(rng, {6}), sq = random_tensor(rng, {6, 5});
  std::vector<double> pv(24);
  for (std::size_t i = 0; i < 24; ++i) pv[i] = 0.5 + std::abs(a[i]);
  Tensor pos = Tensor::from({4, 6}, pv);
  // ReLU inputs kept away from the kink.
  Tensor r = random_tensor(rng, {4, 6});
  for (double& v : r.mutable_data())
    while (std::abs(v) < 1e-3) v = std::normal_distribution<double>()(rng);
  const std::vector<double> factors{0.5, -1.0, 2.0, 3.0};
  const std::vector<std::size_t> off{0, 1, 3, 4};
  const std::vector<std::uint32_t> idx{2, 0, 3, 3, 1};
  Tensor ang = random_tensor(rng, {4, 3});
  std::vector<double> cv(12), sv(12);
  for (std::size_t i = 0; i < 12; ++i) {
    cv[i] = std::cos(ang[i]);
    sv[i] = std::sin(ang[i]);
  }
  Tensor cs = Tensor::from({4, 3}, cv), sn = Tensor::from({4, 3}, sv);
  Tensor gain = random_tensor(rng, {6}), lnb = random_tensor(rng, {6});

  return {
      {"add", [=](const Tensor& x) { return probe(add(x, b)); }, a},
      {"sub", [=](const Tensor& x) { return probe(sub(b, x)); }, a},
      {"mul", [=](const Tensor& x) { return probe(mul(x, x)); }, a},
      {"scale", [=](const Tensor& x) { return probe(scale(x, -1.7)); }, a},
      {"relu", [=](const Tensor& x) { return probe(relu(x)); }, r},
      {"sqrt", [=](const Tensor& x) { return probe(sqrt(x)); }, pos},
      {"add_row", [=](const Tensor& x) { return probe(add_row(a, x)); }, row},
      {"mul_row/x", [=](const Tensor& x) { return probe(mul_row(x, row)); }, a},
      {"mul_row/s", [=](const Tensor& x) { return probe(mul_row(a, x)); }, row},
      {"scale_rows", [=](const Tensor& x) { return probe(scale_rows(x, factors)); }, a},
      {"matmul/a", [=](const Tensor& x) { return probe(matmul(x, sq)); }, a},
      {"matmul/b", [=](const Tensor& x) { return probe(matmul(a, x)); }, sq},
      {"linear/x", [=](const Tensor& x) { return probe(linear(x, w, bias)); }, a},
      {"linear/w", [=](const Tensor& x) { return probe(linear(a, x, bias)); }, w},
      {"linear/b", [=](const Tensor& x) { return probe(linear(a, w, x)); }, bias},
      {"transpose", [=](const Tensor& x) { return probe(transpose(x)); }, a},
      {"concat_cols", [=](const Tensor& x) { return probe(concat_cols({b, x, x})); }, a},
      {"sum", [=](const Tensor& x) { return mul(sum(x), sum(x)); }, a},
      {"mean", [=](const Tensor& x) { return mul(mean(x), mean(x)); }, a},
      {"layer_norm/sumsq",
       [=](const Tensor& x) {
         Tensor y = layer_norm(x, gain, lnb, 1e-5);
         return sum(mul(y, y));
       },
       a},
      {"layer_norm/x", [=](const Tensor& x) { return probe(layer_norm(x, gain, lnb, 1e-5)); }, a},
      {"layer_norm/gain", [=](const Tensor& x) { return probe(layer_norm(a, x, lnb, 1e-5)); }, gain},
      {"layer_norm/bias", [=](const Tensor& x) { return probe(layer_norm(a, gain, x, 1e-5)); }, lnb},
      {"softmax", [=](const Tensor& x) { return probe(softmax(x)); }, a},
      {"gather_rows", [=](const Tensor& x) { return probe(gather_rows(x, idx)); }, a},
      {"segment_sum", [=](const Tensor& x) { return probe(segment_sum(x, off)); }, a},
      {"segment_softmax", [=](const Tensor& x) { return probe(segment_softmax(x, off)); }, a},
      {"group_sum_cols", [=](const Tensor& x) { return probe(group_sum_cols(x, 3)); }, a},
      {"repeat_cols", [=](const Tensor& x) { return probe(repeat_cols(x, 2)); }, a},
      {"rotate_pairs", [=](const Tensor& x) { return probe(rotate_pairs(x, cs, sn)); }, a},
  };
}

inline double sq_dist(const gtno::PointSet& p, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t a = 0; a < p.dims(); ++a) {
    const double d = p.coord(i, a) - p.coord(j, a);
    s += d * d;
  }
  return s;
}

/// All-pairs closed-ball neighbourhoods, self included, sorted.
inline std::vector<std::vector<std::uint32_t>> brute_radius(const gtno::PointSet& p, double r) {
  std::vector<std::vector<std::uint32_t>> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      if (i == j || sq_dist(p, i, j) <= r * r) out[i].push_back(static_cast<std::uint32_t>(j));
  return out;
}

/// Self plus the k closest others; equal distances go to the lower index.
inline std::vector<std::vector<std::uint32_t>> brute_knn(const gtno::PointSet& p, std::size_t k) {
  std::vector<std::vector<std::uint32_t>> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<std::uint32_t> others;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) others.push_back(static_cast<std::uint32_t>(j));
    std::stable_sort(others.begin(), others.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return sq_dist(p, i, a) < sq_dist(p, i, b); });
    others.resize(std::min(k, others.size()));
    others.push_back(static_cast<std::uint32_t>(i));
    std::sort(others.begin(), others.end());
    out[i] = others;
  }
  return out;
}

inline std::vector<std::vector<std::uint32_t>> lists(const gtno::Graph& g) {
  std::vector<std::vector<std::uint32_t>> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i].assign(g.neighbors(i).begin(), g.neighbors(i).end());
  return out;
}

/// Dense 5-point Darcy operator on the interior nodes, harmonic-mean faces,
/// solved with a pivoted LU. Returns u on every node with zero boundary.
inline std::vector<double> darcy_dense_lu(const std::vector<double>& a, double beta, std::size_t nx, std::size_t ny) {
  const std::size_t mx = nx - 2, my = ny - 2, n = mx * my;
  const double hx = 1.0 / static_cast<double>(nx - 1), hy = 1.0 / static_cast<double>(ny - 1);
  auto face = [](double p, double q) { return 2.0 * p * q / (p + q); };
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::VectorXd b = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), beta);
  auto id = [&](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>((j - 1) * mx + (i - 1)); };
  for (std::size_t j = 1; j <= my; ++j) {
    for (std::size_t i = 1; i <= mx; ++i) {
      const double c = a[j * nx + i];
      const Eigen::Index r = id(i, j);
      const int di[4] = {-1, 1, 0, 0}, dj[4] = {0, 0, -1, 1};
      for (int s = 0; s < 4; ++s) {
        const std::size_t ii = i + di[s], jj = j + dj[s];
        const double w = face(c, a[jj * nx + ii]) / (s < 2 ? hx * hx : hy * hy);
        A(r, r) += w;
        if (ii >= 1 && ii <= mx && jj >= 1 && jj <= my) A(r, id(ii, jj)) -= w;
      }
    }
  }
  const Eigen::VectorXd x = A.partialPivLu().solve(b);
  std::vector<double> u(nx * ny, 0.0);
  for (std::size_t j = 1; j <= my; ++j)
    for (std::size_t i = 1; i <= mx; ++i) u[j * nx + i] = x(id(i, j));
  return u;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::string temp_path(const std::string& name) {
  return std::string(TEST_TMP_DIR) + "/" + name;
}

}  // namespace testing
