#include "stnscm/graphs.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {
constexpr double kEarthRadiusKm = 6371.0088;
}

SquareMatrix SquareMatrix::transposed() const {
  SquareMatrix t(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

Tensor SquareMatrix::to_tensor() const { return Tensor::from({n, n}, data); }

void validate_regions(const RegionTable& regions) {
  std::unordered_set<std::string> seen;
  for (const auto& r : regions) {
    if (!seen.insert(r.id).second) throw ValidationError("duplicate region id '" + r.id + "'");
    if (!(r.lat >= -90.0 && r.lat <= 90.0)) throw ValidationError("latitude out of range for region '" + r.id + "'");
    if (!(r.lon >= -180.0 && r.lon <= 180.0)) throw ValidationError("longitude out of range for region '" + r.id + "'");
  }
}

std::size_t region_index(const RegionTable& regions, const std::string& id) {
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].id == id) return i;
  }
  throw ValidationError("unknown region id '" + id + "'");
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double dlat = (lat2 - lat1) * deg;
  const double dlon = (lon2 - lon1) * deg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * deg) * std::cos(lat2 * deg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double geo_kernel(double dis_km, double sigma2) { return std::exp(-(dis_km * dis_km) / sigma2); }

StaticGraph build_geo_graph(const RegionTable& regions, double epsilon_km, bool connect_far) {
  validate_regions(regions);
  if (regions.size() < 2) throw ValidationError("geo graph needs at least 2 regions");
  if (!(epsilon_km > 0)) throw ConfigError("epsilon_km must be positive");
  const std::size_t n = regions.size();
  SquareMatrix dist(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      dist(k, l) = k == l ? 0.0 : haversine_km(regions[k].lat, regions[k].lon, regions[l].lat, regions[l].lon);
    }
  }
  // Symmetrize exactly; haversine is symmetric up to rounding.
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = k + 1; l < n; ++l) dist(l, k) = dist(k, l);
  }
  double mu = 0.0;
  for (double v : dist.data) mu += v;
  mu /= static_cast<double>(dist.data.size());
  double var = 0.0;
  for (double v : dist.data) var += (v - mu) * (v - mu);
  var /= static_cast<double>(dist.data.size());
  if (!(var > 0)) throw DegenerateInputError("all regions are co-located; distance variance is zero");

  StaticGraph g;
  g.kind = GraphKind::Geo;
  g.sigma2 = var;
  g.epsilon_km = epsilon_km;
  g.adjacency = SquareMatrix(n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t l = 0; l < n; ++l) {
      if (k == l) continue;
      const bool keep = connect_far ? dist(k, l) > epsilon_km : dist(k, l) <= epsilon_km;
      if (keep) g.adjacency(k, l) = geo_kernel(dist(k, l), var);
    }
  }
  return g;
}

StaticGraph build_trans_graph(const RegionTable& regions, const std::vector<Trip>& trips) {
  validate_regions(regions);
  const std::size_t n = regions.size();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(regions[i].id, i);
  SquareMatrix counts(n);
  for (const auto& t : trips) {
    const auto from = index.find(t.from);
    const auto to = index.find(t.to);
    if (from == index.end()) throw ValidationError("trip references unknown region '" + t.from + "'");
    if (to == index.end()) throw ValidationError("trip references unknown region '" + t.to + "'");
    if (!(t.count >= 0)) throw ValidationError("negative trip count " + t.from + "->" + t.to);
    counts(from->second, to->second) += t.count;
  }
  StaticGraph g;
  g.kind = GraphKind::Trans;
  g.adjacency = SquareMatrix(n);
  for (std::size_t k = 0; k < n; ++k) {
    double total = 0.0;
    for (std::size_t c = 0; c < n; ++c) total += counts(k, c);
    if (total > 0) {
      for (std::size_t l = 0; l < n; ++l) g.adjacency(k, l) = counts(k, l) / total;
    } else {
      g.isolated.push_back(k);
    }
  }
  return g;
}

SquareMatrix row_normalize(const SquareMatrix& a) {
  SquareMatrix out(a.n);
  for (std::size_t i = 0; i < a.n; ++i) {
    double degree = 0.0;
    for (std::size_t j = 0; j < a.n; ++j) {
      if (a(i, j) < 0) throw ValidationError("row_normalize: negative entry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      degree += a(i, j);
    }
    if (degree > 0) {
      for (std::size_t j = 0; j < a.n; ++j) out(i, j) = a(i, j) / degree;
    }
  }
  return out;
}

GraphSet make_graph_set(const StaticGraph& geo, const StaticGraph& trans) {
  if (geo.adjacency.n != trans.adjacency.n) throw DimensionError("geo and trans graphs differ in node count");
  GraphSet set;
  set.geo_raw = geo.adjacency;
  set.trans_raw = trans.adjacency;
  set.geo_fwd = row_normalize(geo.adjacency).to_tensor();
  set.geo_bwd = row_normalize(geo.adjacency.transposed()).to_tensor();
  set.trans_fwd = row_normalize(trans.adjacency).to_tensor();
  set.trans_bwd = row_normalize(trans.adjacency.transposed()).to_tensor();
  return set;
}

RegionTable read_regions_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t ci = t.column("region_id");
  const std::size_t clat = t.column("lat");
  const std::size_t clon = t.column("lon");
  RegionTable regions;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path.string() + ":" + std::to_string(t.lines[r]);
    regions.push_back({t.rows[r][ci], parse_double(t.rows[r][clat], ctx), parse_double(t.rows[r][clon], ctx)});
  }
  validate_regions(regions);
  return regions;
}

std::vector<Trip> read_trips_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  const std::size_t cf = t.column("from");
  const std::size_t ct = t.column("to");
  const std::size_t cc = t.column("count");
  std::vector<Trip> trips;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = path.string() + ":" + std::to_string(t.lines[r]);
    const double count = parse_double(t.rows[r][cc], ctx);
    if (count < 0) throw ValidationError(ctx + ": negative trip count");
    trips.push_back({t.rows[r][cf], t.rows[r][ct], count});
  }
  return trips;
}

std::string regions_to_csv(const RegionTable& regions) {
  std::ostringstream os;
  os << "region_id,lat,lon\n";
  for (const auto& r : regions) os << r.id << ',' << format_double(r.lat) << ',' << format_double(r.lon) << '\n';
  return os.str();
}

std::string trips_to_csv(const std::vector<Trip>& trips) {
  std::ostringstream os;
  os << "from,to,count\n";
  for (const auto& t : trips) os << t.from << ',' << t.to << ',' << format_double(t.count) << '\n';
  return os.str();
}

std::string matrix_to_csv(const SquareMatrix& m, const std::vector<std::string>& ids) {
  std::ostringstream os;
  os << "region_id";
  for (const auto& id : ids) os << ',' << id;
  os << '\n';
  for (std::size_t i = 0; i < m.n; ++i) {
    os << (i < ids.size() ? ids[i] : std::to_string(i));
    for (std::size_t j = 0; j < m.n; ++j) os << ',' << format_double(m(i, j));
    os << '\n';
  }
  return os.str();
}

}  // namespace stnscm
