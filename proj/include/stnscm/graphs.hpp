#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stnscm/tensor.hpp"

namespace stnscm {

struct Region {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
};

// Ordered regions; order defines node indices everywhere else.
using RegionTable = std::vector<Region>;

struct Trip {
  std::string from;
  std::string to;
  double count = 0.0;
};

// Dense row-major N x N matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> data;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size, double fill = 0.0) : n(size), data(size * size, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
  SquareMatrix transposed() const;
  Tensor to_tensor() const;
};

enum class GraphKind { Geo, Trans };

struct StaticGraph {
  GraphKind kind = GraphKind::Geo;
  SquareMatrix adjacency;
  // geo only
  double sigma2 = 0.0;
  double epsilon_km = 0.0;
  // trans only: nodes with zero total outgoing flow
  std::vector<std::size_t> isolated;
};

void validate_regions(const RegionTable& regions);
std::size_t region_index(const RegionTable& regions, const std::string& id);

double haversine_km(double lat1, double lon1, double lat2, double lon2);
// exp(-dis^2 / sigma2)
double geo_kernel(double dis_km, double sigma2);

// Keeps pairs with dis <= epsilon (or dis > epsilon when connect_far).
StaticGraph build_geo_graph(const RegionTable& regions, double epsilon_km = 2.0, bool connect_far = false);
StaticGraph build_trans_graph(const RegionTable& regions, const std::vector<Trip>& trips);

// D^-1 A; zero-degree rows stay zero. Negative entries are rejected.
SquareMatrix row_normalize(const SquareMatrix& a);

// Normalized propagation matrices for both diffusion directions:
// forward = D^-1 A, backward = D_in^-1 A^T.
struct GraphSet {
  SquareMatrix geo_raw;
  SquareMatrix trans_raw;
  Tensor geo_fwd, geo_bwd;
  Tensor trans_fwd, trans_bwd;
  std::size_t num_nodes() const { return geo_raw.n; }
};

GraphSet make_graph_set(const StaticGraph& geo, const StaticGraph& trans);

RegionTable read_regions_csv(const std::filesystem::path& path);
std::vector<Trip> read_trips_csv(const std::filesystem::path& path);
std::string regions_to_csv(const RegionTable& regions);
std::string trips_to_csv(const std::vector<Trip>& trips);
// Header row of region ids, then one row per source region.
std::string matrix_to_csv(const SquareMatrix& m, const std::vector<std::string>& ids);

}  // namespace stnscm
