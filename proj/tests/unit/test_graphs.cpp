#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "stnscm/error.hpp"
#include "stnscm/graphs.hpp"

using namespace stnscm;
using doctest::Approx;

namespace {

RegionTable line_regions(std::size_t n, double step_deg = 0.01) {
  RegionTable r;
  for (std::size_t i = 0; i < n; ++i) r.push_back({"r" + std::to_string(i), 40.0, -74.0 + step_deg * static_cast<double>(i)});
  return r;
}

RegionTable random_regions(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lat(40.6, 40.8), lon(-74.1, -73.9);
  RegionTable r;
  for (std::size_t i = 0; i < n; ++i) r.push_back({"r" + std::to_string(i), lat(rng), lon(rng)});
  return r;
}

}  // namespace

TEST_CASE("geo kernel values") {
  CHECK(geo_kernel(0.0, 3.0) == 1.0);
  const double sigma = 1.7;
  CHECK(geo_kernel(sigma, sigma * sigma) == Approx(0.367879).epsilon(1e-6));
}

TEST_CASE("geo graph thresholds and symmetry") {
  const RegionTable regions = line_regions(4);
  const double spacing = haversine_km(40.0, -74.0, 40.0, -73.99);
  const StaticGraph g = build_geo_graph(regions, spacing * 1.5);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(g.adjacency(i, i) == 0.0);
    for (std::size_t j = 0; j < 4; ++j) CHECK(g.adjacency(i, j) == g.adjacency(j, i));
  }
  CHECK(g.adjacency(0, 1) > 0.0);
  CHECK(g.adjacency(0, 2) == 0.0);
  CHECK(g.adjacency(0, 1) == Approx(std::exp(-spacing * spacing / g.sigma2)).epsilon(1e-9));

  const StaticGraph far = build_geo_graph(regions, spacing * 1.5, true);
  CHECK(far.adjacency(0, 1) == 0.0);
  CHECK(far.adjacency(0, 2) > 0.0);
}

TEST_CASE("geo variance is over all pairwise distances") {
  const RegionTable regions = line_regions(3);
  std::vector<double> d;
  for (const auto& a : regions)
    for (const auto& b : regions) d.push_back(&a == &b ? 0.0 : haversine_km(a.lat, a.lon, b.lat, b.lon));
  const double mu = std::accumulate(d.begin(), d.end(), 0.0) / 9.0;
  double var = 0.0;
  for (double v : d) var += (v - mu) * (v - mu);
  var /= 9.0;
  CHECK(build_geo_graph(regions, 100.0).sigma2 == Approx(var).epsilon(1e-9));
}

TEST_CASE("co-located regions are degenerate") {
  RegionTable regions{{"a", 40.0, -74.0}, {"b", 40.0, -74.0}};
  CHECK_THROWS_AS(build_geo_graph(regions), DegenerateInputError);
}

TEST_CASE("transition graph rows") {
  RegionTable regions = line_regions(4);
  std::vector<Trip> trips{{"r0", "r1", 2}, {"r0", "r2", 2}, {"r0", "r3", 4}, {"r1", "r2", 5}};
  const StaticGraph g = build_trans_graph(regions, trips);
  CHECK(g.adjacency(0, 1) == 0.25);
  CHECK(g.adjacency(0, 2) == 0.25);
  CHECK(g.adjacency(0, 3) == 0.5);
  CHECK(g.adjacency(1, 2) == 1.0);
  REQUIRE(g.isolated.size() == 2);
  CHECK(g.isolated[0] == 2);
  CHECK(g.isolated[1] == 3);
  for (std::size_t j = 0; j < 4; ++j) CHECK(g.adjacency(2, j) == 0.0);

  CHECK_THROWS_AS(build_trans_graph(regions, {{"r0", "zz", 1}}), ValidationError);
  CHECK_THROWS_AS(build_trans_graph(regions, {{"r0", "r1", -1}}), ValidationError);
}

TEST_CASE("transition graph is permutation equivariant") {
  std::mt19937_64 rng(5);
  const RegionTable regions = random_regions(6, rng);
  std::vector<Trip> trips;
  std::uniform_int_distribution<int> pick(0, 5), count(0, 9);
  for (int i = 0; i < 30; ++i) trips.push_back({regions[pick(rng)].id, regions[pick(rng)].id, double(count(rng))});
  std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  RegionTable permuted;
  for (std::size_t i : perm) permuted.push_back(regions[i]);
  const StaticGraph a = build_trans_graph(regions, trips);
  const StaticGraph b = build_trans_graph(permuted, trips);
  const StaticGraph ga = build_geo_graph(regions, 5.0);
  const StaticGraph gb = build_geo_graph(permuted, 5.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(b.adjacency(i, j) == a.adjacency(perm[i], perm[j]));
      CHECK(gb.adjacency(i, j) == Approx(ga.adjacency(perm[i], perm[j])).epsilon(1e-12));
    }
  }
}

TEST_CASE("row normalization of square matrices") {
  SquareMatrix m(2);
  m(0, 0) = 1;
  m(0, 1) = 3;
  const SquareMatrix r = row_normalize(m);
  CHECK(r(0, 0) == 0.25);
  CHECK(r(0, 1) == 0.75);
  CHECK(r(1, 0) == 0.0);
  CHECK(r(1, 1) == 0.0);

  const SquareMatrix twice = row_normalize(r);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(twice.data[i] - r.data[i]) <= 1e-12);

  m(1, 0) = -1;
  CHECK_THROWS_AS(row_normalize(m), ValidationError);
}

TEST_CASE("graph set rows are stochastic or zero") {
  std::mt19937_64 rng(9);
  const RegionTable regions = random_regions(7, rng);
  std::vector<Trip> trips{{"r0", "r1", 3}, {"r1", "r0", 1}, {"r2", "r5", 4}, {"r6", "r6", 2}};
  const GraphSet set = make_graph_set(build_geo_graph(regions, 6.0), build_trans_graph(regions, trips));
  for (const Tensor* g : {&set.geo_fwd, &set.geo_bwd, &set.trans_fwd, &set.trans_bwd}) {
    for (std::size_t i = 0; i < 7; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 7; ++j) s += g->at({i, j});
      CHECK((s == 0.0 || std::abs(s - 1.0) <= 1e-12));
    }
  }
}

TEST_CASE("region validation") {
  CHECK_THROWS_AS(validate_regions({{"a", 0, 0}, {"a", 1, 1}}), ValidationError);
  CHECK_THROWS_AS(validate_regions({{"a", 91, 0}}), ValidationError);
  CHECK(region_index({{"a", 0, 0}, {"b", 1, 1}}, "b") == 1);
}
