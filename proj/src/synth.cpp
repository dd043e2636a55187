#include "stnscm/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {

constexpr double kKmPerDegree = 111.195;

struct RegionProfile {
  double amplitude = 0.0;
  double morning = 0.5;  // share of the morning peak in departures
};

double bump(double hour, double centre, double width) {
  double d = std::abs(hour - centre);
  d = std::min(d, 24.0 - d);
  return std::exp(-0.5 * d * d / (width * width));
}

// Weather-free departure and own-arrival intensity at a clock hour.
double departures(const RegionProfile& r, double hour) {
  return r.amplitude * (0.25 + r.morning * bump(hour, 8.0, 1.5) + (1.0 - r.morning) * bump(hour, 18.0, 2.0));
}
double arrivals(const RegionProfile& r, double hour) {
  return r.amplitude * (0.25 + (1.0 - r.morning) * bump(hour, 8.5, 1.5) + r.morning * bump(hour, 18.5, 2.0));
}

std::vector<RegionProfile> region_profiles(const SynthScenario& s) {
  std::mt19937_64 rng(s.seed * 0x9e3779b97f4a7c15ULL + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RegionProfile> out(s.num_regions());
  for (auto& r : out) {
    r.amplitude = s.base_scale * (0.6 + 0.8 * u(rng));
    r.morning = 0.2 + 0.6 * u(rng);
  }
  return out;
}

double hour_of(const Timeline& time, std::size_t t) { return minute_of_day(time.at(t)) / 60.0; }
double hour_before(const Timeline& time, std::size_t t) {
  const double h = hour_of(time, t) - time.interval_minutes / 60.0;
  return h < 0 ? h + 24.0 : h;
}

Timeline scenario_timeline(const SynthScenario& s) {
  Timeline time;
  time.start = parse_timestamp(s.start);
  time.interval_minutes = s.interval_minutes;
  time.steps = s.weeks * 7 * 1440 / static_cast<std::size_t>(s.interval_minutes);
  return time;
}

// (region, step, channel) weather-free expectation.
std::vector<double> base_flows(const SynthScenario& s, const Timeline& time,
                               const std::vector<std::vector<std::size_t>>& nbrs) {
  const auto prof = region_profiles(s);
  const std::size_t N = s.num_regions(), T = time.steps;
  std::vector<double> base(N * T * 2, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double h = hour_of(time, t), hp = hour_before(time, t);
    for (std::size_t n = 0; n < N; ++n) {
      base[(n * T + t) * 2 + 1] = departures(prof[n], h);
      double in = arrivals(prof[n], h);
      for (std::size_t m : nbrs[n]) in += s.coupling * departures(prof[m], hp) / static_cast<double>(nbrs[m].size());
      base[(n * T + t) * 2 + 0] = in;
    }
  }
  return base;
}

std::vector<double> weather_series(const SynthScenario& s, const Timeline& time) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u(s.weather_min, s.weather_max);
  std::vector<double> w(time.steps, 1.0);
  for (std::size_t t = 0; t < time.steps; ++t) {
    if (s.fixed_weather) {
      w[t] = *s.fixed_weather;
    } else if (t % s.weather_block == 0) {
      w[t] = u(rng);
    } else {
      w[t] = w[t - 1];
    }
  }
  const std::size_t spd = time.steps_per_day();
  for (const auto& [day, m] : s.day_weather) {
    for (std::size_t t = day * spd; t < (day + 1) * spd && t < time.steps; ++t) w[t] = m;
  }
  return w;
}

}  // namespace

void SynthScenario::validate() const {
  if (rows == 0 || cols == 0 || rows * cols < 2) throw ConfigError("synthetic grid needs at least two cells");
  if (weeks < 2) throw ConfigError("synthetic duration must be at least 2 weeks, got " + std::to_string(weeks));
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0) {
    throw ConfigError("interval_minutes must divide a day");
  }
  if (weather_block == 0) throw ConfigError("synth_weather_block must be positive");
  if (!(weather_min >= 0) || weather_max < weather_min) throw ConfigError("invalid weather multiplier range");
  if (!(spacing_km > 0)) throw ConfigError("synth_spacing_km must be positive");
  if (!(base_scale > 0)) throw ConfigError("synth_base_scale must be positive");
  if (coupling < 0) throw ConfigError("synth_coupling must be non-negative");
  if (fixed_weather && *fixed_weather < 0) throw ConfigError("weather multiplier must be non-negative");
  const std::size_t days = weeks * 7;
  for (const auto& [day, m] : day_weather) {
    if (day >= days) throw ConfigError("weather override day " + std::to_string(day) + " is outside the series");
    if (m < 0) throw ConfigError("weather multiplier must be non-negative");
  }
}

SynthScenario synth_scenario_from(const Config& cfg) {
  SynthScenario s;
  s.rows = cfg.get_size("synth_rows");
  s.cols = cfg.get_size("synth_cols");
  s.weeks = cfg.get_size("synth_weeks");
  s.seed = static_cast<std::uint64_t>(cfg.get_int("synth_seed"));
  s.spacing_km = cfg.get_double("synth_spacing_km");
  s.base_scale = cfg.get_double("synth_base_scale");
  s.coupling = cfg.get_double("synth_coupling");
  s.weather_block = cfg.get_size("synth_weather_block");
  s.weather_min = cfg.get_double("synth_weather_min");
  s.weather_max = cfg.get_double("synth_weather_max");
  s.start = cfg.get_string("synth_start");
  s.interval_minutes = static_cast<int>(cfg.get_int("interval_minutes"));
  s.validate();
  return s;
}

std::vector<std::vector<std::size_t>> grid_neighbours(const SynthScenario& s) {
  std::vector<std::vector<std::size_t>> out(s.num_regions());
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      auto& v = out[r * s.cols + c];
      if (r > 0) v.push_back((r - 1) * s.cols + c);
      if (c > 0) v.push_back(r * s.cols + c - 1);
      if (c + 1 < s.cols) v.push_back(r * s.cols + c + 1);
      if (r + 1 < s.rows) v.push_back((r + 1) * s.cols + c);
    }
  }
  return out;
}

SynthOutput generate(const SynthScenario& s) {
  s.validate();
  const std::size_t N = s.num_regions();
  const Timeline time = scenario_timeline(s);
  const std::size_t T = time.steps;
  const auto nbrs = grid_neighbours(s);

  SynthOutput out;
  Dataset& d = out.data;
  const double lat0 = 40.70, lon0 = -74.00;
  const double lon_km = kKmPerDegree * std::cos(lat0 * std::numbers::pi / 180.0);
  for (std::size_t r = 0; r < s.rows; ++r) {
    for (std::size_t c = 0; c < s.cols; ++c) {
      d.regions.push_back({"r" + std::to_string(r * s.cols + c), lat0 + r * s.spacing_km / kKmPerDegree,
                           lon0 + c * s.spacing_km / lon_km});
    }
  }

  out.base = base_flows(s, time, nbrs);
  out.weather = weather_series(s, time);
  out.expected.resize(out.base.size());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t c = 0; c < 2; ++c) {
        const std::size_t i = (n * T + t) * 2 + c;
        out.expected[i] = out.weather[t] * out.base[i];
      }
    }
  }

  std::mt19937_64 rng(s.noise_seed.value_or(s.seed) ^ 0xa5a5a5a5a5a5a5a5ULL);
  d.flow.time = time;
  for (const auto& r : d.regions) d.flow.region_ids.push_back(r.id);
  d.flow.values.resize(out.expected.size());
  for (std::size_t i = 0; i < out.expected.size(); ++i) {
    d.flow.values[i] = static_cast<double>(std::poisson_distribution<long long>(out.expected[i])(rng));
  }

  // Movements: the coupled share of each departure picks a neighbour uniformly.
  std::vector<double> moves(N * N, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t n = 0; n < N; ++n) {
      const double lambda = s.coupling * out.expected[(n * T + t) * 2 + 1];
      long long k = std::poisson_distribution<long long>(lambda)(rng);
      std::uniform_int_distribution<std::size_t> pick(0, nbrs[n].size() - 1);
      for (; k > 0; --k) moves[n * N + nbrs[n][pick(rng)]] += 1.0;
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t j = 0; j < N; ++j) {
      if (moves[i * N + j] > 0) d.trips.push_back({d.regions[i].id, d.regions[j].id, moves[i * N + j]});
    }
  }

  ContextSeries& ctx = d.context;
  ctx.time = time;
  ctx.num_regions = N;
  ctx.citywide = true;
  ctx.features = {"tod_sin", "tod_cos"};
  for (int k = 0; k < 7; ++k) ctx.features.push_back("dow_" + std::to_string(k));
  ctx.features.push_back("holiday");
  ctx.features.push_back("weather");
  const std::size_t F = ctx.features.size();
  ctx.values.assign(N * T * F, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double angle = 2.0 * std::numbers::pi * minute_of_day(time.at(t)) / 1440.0;
    std::vector<double> row(F, 0.0);
    row[0] = std::sin(angle);
    row[1] = std::cos(angle);
    row[2 + static_cast<std::size_t>(day_of_week(time.at(t)))] = 1.0;
    row[F - 1] = out.weather[t];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t f = 0; f < F; ++f) ctx.at(n, t, f) = row[f];
    }
  }
  return out;
}

double oracle_effect(const SynthScenario& s, std::size_t day, double multiplier) {
  s.validate();
  const Timeline time = scenario_timeline(s);
  const std::size_t spd = time.steps_per_day();
  if (day >= s.weeks * 7) throw ConfigError("day index " + std::to_string(day) + " is outside the series");
  const auto base = base_flows(s, time, grid_neighbours(s));
  double total = 0.0;
  for (std::size_t n = 0; n < s.num_regions(); ++n) {
    for (std::size_t t = day * spd; t < (day + 1) * spd; ++t) {
      total += base[(n * time.steps + t) * 2] + base[(n * time.steps + t) * 2 + 1];
    }
  }
  return (multiplier - 1.0) * total;
}

double day_total(const FlowSeries& layout, const std::vector<double>& values, std::size_t day) {
  const std::size_t spd = layout.time.steps_per_day(), T = layout.num_steps();
  if ((day + 1) * spd > T) throw ConfigError("day index " + std::to_string(day) + " is outside the series");
  double total = 0.0;
  for (std::size_t n = 0; n < layout.num_regions(); ++n) {
    for (std::size_t t = day * spd; t < (day + 1) * spd; ++t) total += values[(n * T + t) * 2] + values[(n * T + t) * 2 + 1];
  }
  return total;
}

std::string expected_flows_csv(const SynthOutput& out) {
  FlowSeries f = out.data.flow;
  f.values = out.expected;
  return flows_to_csv(f);
}

}  // namespace stnscm
