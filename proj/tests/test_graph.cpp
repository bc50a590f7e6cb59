#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "gtno/errors.hpp"
#include "gtno/graph.hpp"
#include "helpers.hpp"

using namespace gtno;

TEST_SUITE("graph") {
  TEST_CASE("point sets reject duplicates and points outside the box") {
    CHECK_THROWS_AS(PointSet(Tensor::from({2, 2}, {0.1, 0.2, 0.1, 0.2}), {{}, {}}), ConfigError);
    CHECK_THROWS_AS(PointSet(Tensor::from({1, 2}, {1.5, 0.2}), {{}, {}}), ConfigError);
    CHECK_THROWS_AS(PointSet(Tensor::from({1, 2}, {0.5, 0.2}), {{}}), ConfigError);
  }

  TEST_CASE("grids") {
    PointSet g = uniform_grid(3, 2);
    CHECK(g.size() == 6);
    CHECK(g.coord(1, 0) == 0.5);
    CHECK(g.coord(3, 1) == 1.0);
    PointSet c = cell_centered_grid(2, 2, {-1, 1}, {-1, 1});
    CHECK(c.coord(0, 0) == -0.5);
    CHECK(c.coord(3, 1) == 0.5);
    PointSet u = cell_centered_grid(4, 4, {-2.5, 2.5}, {-2.5, 2.5}).to_unit_box();
    CHECK(u.coord(0, 0) == doctest::Approx(0.125));
  }

  TEST_CASE("radius graph on a lattice includes the closed ball") {
    // Spacing 0.25: r = 0.25 reaches the four axis neighbours exactly.
    PointSet g = uniform_grid(5, 5);
    Graph gr = build_radius_graph(g, 0.25);
    CHECK(gr.neighbors(12).size() == 5);
    CHECK(gr.neighbors(0).size() == 3);
    CHECK(gr.is_symmetric());
    CHECK(testing::lists(gr) == testing::brute_radius(g, 0.25));
  }

  TEST_CASE("radius graph equals brute force on random sets") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t L = 20 + 30 * static_cast<std::size_t>(rep);
      PointSet p = testing::random_points(rng, L, 1 + rep % 3);
      const double r = 0.05 + 0.03 * rep;
      Graph g = build_radius_graph(p, r);
      CHECK(testing::lists(g) == testing::brute_radius(p, r));
    }
  }

  TEST_CASE("isolated nodes warn or throw") {
    PointSet p(Tensor::from({2, 2}, {0.0, 0.0, 1.0, 1.0}), {{}, {}});
    Graph g = build_radius_graph(p, 0.1);
    CHECK(g.isolated_count() == 2);
    CHECK(g.edge_count() == 2);
    CHECK_THROWS_AS(build_radius_graph(p, 0.1, {.strict_connectivity = true}), IsolatedNodeError);
  }

  TEST_CASE("kNN graph equals brute force, ties to the lower index") {
    PointSet line(Tensor::from({3, 1}, {0.0, 0.5, 1.0}), {{}});
    Graph g1 = build_knn_graph(line, 1);
    CHECK(testing::lists(g1)[1] == std::vector<std::uint32_t>{0, 1});
    std::mt19937_64 rng(9);
    for (std::size_t k : {1, 4, 8}) {
      PointSet p = testing::random_points(rng, 60);
      CHECK(testing::lists(build_knn_graph(p, k)) == testing::brute_knn(p, k));
    }
    PointSet grid = uniform_grid(6, 6);
    CHECK(testing::lists(build_knn_graph(grid, 6)) == testing::brute_knn(grid, 6));
  }

  TEST_CASE("aggregation order does not depend on labelling") {
    std::mt19937_64 rng(2);
    PointSet p = testing::random_points(rng, 40);
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Graph a = build_radius_graph(p, 0.25), b = build_radius_graph(p.permuted(perm), 0.25);
    REQUIRE(a.edge_count() == b.edge_count());
    // Node k of b is node perm[k] of a; its neighbours come in the same
    // coordinate order.
    const auto oa = a.offsets(), ob = b.offsets();
    for (std::size_t k = 0; k < 40; ++k) {
      const std::size_t i = perm[k];
      REQUIRE(ob[k + 1] - ob[k] == oa[i + 1] - oa[i]);
      for (std::size_t e = 0; e < ob[k + 1] - ob[k]; ++e) {
        CHECK(b.aggregation_centers()[ob[k] + e] == k);
        CHECK(perm[b.aggregation_indices()[ob[k] + e]] == a.aggregation_indices()[oa[i] + e]);
      }
    }
    for (std::size_t k = 0; k < 40; ++k) CHECK(perm[b.canonical_order()[k]] == a.canonical_order()[k]);
  }

  TEST_CASE("node features are theta followed by positions") {
    PointSet p = uniform_grid(2, 2);
    Graph g = assemble_node_features(build_radius_graph(p, 1.0), Tensor::from({4, 1}, {7, 8, 9, 10}));
    CHECK(g.node_features().shape() == Shape{4, 3});
    CHECK(g.node_features().at(3, 0) == 10.0);
    CHECK(g.node_features().at(3, 2) == 1.0);
    CHECK_THROWS_AS(assemble_node_features(g, Tensor::zeros({3, 1})), ShapeError);
  }
}
