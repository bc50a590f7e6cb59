#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "gtno/errors.hpp"
#include "gtno/pde_data.hpp"
#include "helpers.hpp"

using namespace gtno;

namespace {

double total(const std::vector<double>& f, std::size_t channels, std::size_t ch) {
  double s = 0.0;
  for (std::size_t i = ch; i < f.size(); i += channels) s += f[i];
  return s;
}

}  // namespace

TEST_SUITE("generators") {
  TEST_CASE("darcy coefficient is two-phase and resolution consistent") {
    const auto a9 = gen_darcy_coefficient(5, 9, 9), a17 = gen_darcy_coefficient(5, 17, 17);
    std::set<double> values(a17.begin(), a17.end());
    CHECK(values == std::set<double>{3.0, 12.0});
    for (std::size_t j = 0; j < 9; ++j)
      for (std::size_t i = 0; i < 9; ++i) CHECK(a9[j * 9 + i] == a17[2 * j * 17 + 2 * i]);
    CHECK(gen_darcy_coefficient(6, 9, 9) != a9);
    CHECK_THROWS_AS(gen_darcy_coefficient(5, 4, 4), ConfigError);
  }

  TEST_CASE("darcy solve matches a dense LU and the matrix is symmetric") {
    const std::size_t n = 11;
    const auto a = gen_darcy_coefficient(2, n, n);
    const auto u = solve_darcy(a, 1.0, n, n);
    const auto ref = testing::darcy_dense_lu(a, 1.0, n, n);
    CHECK(testing::max_abs_diff(u, ref) < 1e-8);
    const auto A = assemble_darcy_dense(a, n, n);
    const std::size_t m = (n - 2) * (n - 2);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < r; ++c) CHECK(A[r * m + c] == A[c * m + r]);
  }

  TEST_CASE("darcy solution is linear in beta") {
    const auto a = gen_darcy_coefficient(3, 9, 9);
    const auto u1 = solve_darcy(a, 1.0, 9, 9), u2 = solve_darcy(a, 2.0, 9, 9);
    for (std::size_t k = 0; k < u1.size(); ++k) CHECK(std::abs(u2[k] - 2.0 * u1[k]) < 1e-10);
  }

  TEST_CASE("diffusion-only dynamics conserve both masses") {
    DiffReactParams p;
    p.reactions = false;
    p.t_end = 1.0;
    Trajectory tr = simulate_diffusion_reaction(4, 16, 16, 6, p);
    REQUIRE(tr.frames.size() == 6);
    CHECK(tr.channels == 2);
    for (std::size_t ch = 0; ch < 2; ++ch) {
      const double m0 = total(tr.frames[0], 2, ch);
      for (const auto& f : tr.frames) CHECK(std::abs(total(f, 2, ch) - m0) * (4.0 / 256.0) < 1e-10);
    }
  }

  TEST_CASE("diffusion-reaction keeps a uniform field uniform and rejects unstable steps") {
    std::vector<double> init(2 * 64);
    for (std::size_t i = 0; i < 64; ++i) {
      init[2 * i] = 0.3;
      init[2 * i + 1] = -0.1;
    }
    DiffReactParams p;
    p.t_end = 0.5;
    Trajectory tr = simulate_diffusion_reaction(0, 8, 8, 3, p, &init);
    for (std::size_t i = 1; i < 64; ++i) CHECK(tr.frames.back()[2 * i] == tr.frames.back()[0]);
    p.dt = 10.0;
    CHECK_THROWS_AS(simulate_diffusion_reaction(0, 8, 8, 3, p), CflError);
  }

  TEST_CASE("shallow water conserves volume and keeps the dam-break symmetric") {
    ShallowWaterParams p;
    p.t_end = 0.5;
    const std::size_t n = 24;
    Trajectory tr = simulate_shallow_water(7, n, n, 5, p);
    const double v0 = shallow_water_volume(tr.frames[0], n, n);
    for (const auto& f : tr.frames) {
      CHECK(std::abs(shallow_water_volume(f, n, n) - v0) < 1e-10);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double h = f[j * n + i];
          CHECK(std::abs(h - f[i * n + j]) < 1e-12);
          CHECK(std::abs(h - f[j * n + (n - 1 - i)]) < 1e-12);
          CHECK(std::abs(h - f[(n - 1 - j) * n + i]) < 1e-12);
        }
    }
    CHECK(*std::max_element(tr.frames[0].begin(), tr.frames[0].end()) == 2.0);
  }

  TEST_CASE("generators are deterministic byte for byte") {
    for (DatasetKind k : {DatasetKind::darcy, DatasetKind::swe, DatasetKind::diffreact}) {
      GenOptions g;
      g.kind = k;
      g.count = 2;
      g.nx = g.ny = 10;
      g.seed = 77;
      g.t_in = 2;
      g.t_out = 3;
      g.diffreact.t_end = 0.5;
      g.swe.t_end = 0.3;
      CAPTURE(to_string(k));
      CHECK(dataset_bytes(generate_dataset(g)) == dataset_bytes(generate_dataset(g)));
    }
  }

  TEST_CASE("dataset layout") {
    GenOptions g;
    g.kind = DatasetKind::diffreact;
    g.count = 1;
    g.nx = g.ny = 6;
    g.t_in = 2;
    g.t_out = 3;
    g.diffreact.t_end = 0.2;
    Dataset d = generate_dataset(g);
    CHECK(d.header.in_channels == 4);
    CHECK(d.header.out_channels == 2);
    CHECK(d.header.frames() == 3);
    CHECK(d.samples[0].theta.shape() == Shape{36, 4});
    CHECK(d.samples[0].target.size() == 3);
    CHECK(d.points(0).coord(0, 0) == doctest::Approx(-1.0 + 1.0 / 6.0));
    CHECK(d.header.param("du").value() == 1e-3);
  }
}
