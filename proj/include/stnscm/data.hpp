#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stnscm/graphs.hpp"

namespace stnscm {

// Minutes since 1970-01-01T00:00 (UTC, no leap seconds).
using Minutes = std::int64_t;

Minutes parse_timestamp(const std::string& text);
std::string format_timestamp(Minutes t);
// 0 = Monday ... 6 = Sunday
int day_of_week(Minutes t);
int minute_of_day(Minutes t);

struct Timeline {
  Minutes start = 0;
  int interval_minutes = 30;
  std::size_t steps = 0;

  Minutes at(std::size_t step) const { return start + static_cast<Minutes>(step) * interval_minutes; }
  std::size_t steps_per_day() const;
  std::size_t steps_per_week() const { return 7 * steps_per_day(); }
};

// Inflow/outflow counts, stored region-major: (region, step, channel).
struct FlowSeries {
  static constexpr std::size_t kChannels = 2;

  Timeline time;
  std::vector<std::string> region_ids;
  std::vector<double> values;

  std::size_t num_regions() const { return region_ids.size(); }
  std::size_t num_steps() const { return time.steps; }
  double& at(std::size_t n, std::size_t t, std::size_t c) { return values[(n * time.steps + t) * kChannels + c]; }
  double at(std::size_t n, std::size_t t, std::size_t c) const { return values[(n * time.steps + t) * kChannels + c]; }
};

// Exogenous features, (region, step, feature).
struct ContextSeries {
  Timeline time;
  std::vector<std::string> features;
  std::size_t num_regions = 0;
  // True when the source had one row per timestamp broadcast to all regions.
  bool citywide = true;
  std::vector<double> values;

  std::size_t num_features() const { return features.size(); }
  double& at(std::size_t n, std::size_t t, std::size_t f) { return values[(n * time.steps + t) * features.size() + f]; }
  double at(std::size_t n, std::size_t t, std::size_t f) const { return values[(n * time.steps + t) * features.size() + f]; }
  std::size_t feature_index(const std::string& name) const;
};

struct Dataset {
  RegionTable regions;
  std::vector<Trip> trips;
  FlowSeries flow;
  ContextSeries context;
};

struct LoadOptions {
  int interval_minutes = 30;
  std::vector<std::string> onehot_groups{"dow_"};
};

FlowSeries parse_flows(const std::string& csv_text, const std::vector<std::string>& region_ids,
                       int interval_minutes, const std::string& source = "flows.csv");
ContextSeries parse_context(const std::string& csv_text, const FlowSeries& flow, const LoadOptions& options,
                            const std::string& source = "context.csv");
Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options = {});

std::string flows_to_csv(const FlowSeries& flow);
std::string context_to_csv(const ContextSeries& ctx, const std::vector<std::string>& region_ids);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

// One training example anchored at step t (last observed step).
struct Sample {
  std::size_t anchor = 0;
  std::size_t num_regions = 0;
  std::size_t P = 0;
  std::size_t Q = 0;
  std::size_t c2 = 0;
  // (region, step, channel) blocks.
  std::vector<double> x_hour, x_day, x_week;  // N x P x 2
  std::vector<double> c_hour, c_day, c_week;  // N x P x c2
  std::vector<double> c_future;               // N x Q x c2
  std::vector<double> y;                      // N x Q x 2
};

struct SampleOptions {
  std::size_t P = 8;
  std::size_t Q = 4;
  bool use_week = true;
  bool use_day = true;
};

// First step of the day/week slice for anchor t; slices end at the clock
// time of step t + Q one day / one week earlier.
std::size_t first_valid_anchor(const Timeline& time, const SampleOptions& options);
std::vector<Sample> make_samples(const FlowSeries& flow, const ContextSeries& ctx, const SampleOptions& options);

struct Splits {
  std::vector<Sample> train, val, test;
};
Splits split_chronological(std::vector<Sample> samples, double train_frac = 0.6, double val_frac = 0.2);
inline Splits split_60_20_20(std::vector<Sample> samples) { return split_chronological(std::move(samples), 0.6, 0.2); }

enum class NormKind { MinMax, ZScore };

// Per-channel affine flow normalization.
struct Normalizer {
  NormKind kind = NormKind::MinMax;
  std::vector<double> offset;
  std::vector<double> scale;

  // Statistics from steps [0, end_step) only.
  static Normalizer fit(const FlowSeries& flow, std::size_t end_step, NormKind kind = NormKind::MinMax);
  double forward(double x, std::size_t channel) const { return (x - offset[channel]) / scale[channel]; }
  double inverse(double x, std::size_t channel) const { return x * scale[channel] + offset[channel]; }
};

NormKind parse_norm_kind(const std::string& name);

}  // namespace stnscm
