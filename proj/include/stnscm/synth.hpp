#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stnscm/config.hpp"
#include "stnscm/data.hpp"

namespace stnscm {

struct SynthScenario {
  std::size_t rows = 3;
  std::size_t cols = 2;
  std::size_t weeks = 4;
  std::uint64_t seed = 11;
  // Reseeds only the Poisson draws, keeping profiles and weather fixed.
  std::optional<std::uint64_t> noise_seed;
  double spacing_km = 1.0;
  double base_scale = 100.0;
  double coupling = 0.3;
  std::size_t weather_block = 6;
  double weather_min = 0.2;
  double weather_max = 1.2;
  std::string start = "2024-01-01T00:00:00";
  int interval_minutes = 30;
  // Constant multiplier for the whole series (replaces the random blocks).
  std::optional<double> fixed_weather;
  // day index -> multiplier held for that whole day
  std::map<std::size_t, double> day_weather;

  std::size_t num_regions() const { return rows * cols; }
  void validate() const;
};

SynthScenario synth_scenario_from(const Config& cfg);

struct SynthOutput {
  Dataset data;
  // Same layout as data.flow.values.
  std::vector<double> expected;
  // Weather-free expected flow, same layout.
  std::vector<double> base;
  std::vector<double> weather;
};

SynthOutput generate(const SynthScenario& scenario);

// Grid neighbours (4-connectivity) of every region, in region order.
std::vector<std::vector<std::size_t>> grid_neighbours(const SynthScenario& scenario);

// Expected change of total flow (all regions, both channels) over `day`
// when its multiplier is `multiplier` instead of 1.
double oracle_effect(const SynthScenario& scenario, std::size_t day, double multiplier);

// Sum over all regions and channels of `values` (flow layout) on `day`.
double day_total(const FlowSeries& layout, const std::vector<double>& values, std::size_t day);

std::string expected_flows_csv(const SynthOutput& out);

}  // namespace stnscm
