#include "stnscm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

void check_onehot_groups(const ContextSeries& ctx, const std::vector<std::string>& prefixes, const std::string& source) {
  for (const auto& prefix : prefixes) {
    std::vector<std::size_t> cols;
    for (std::size_t f = 0; f < ctx.features.size(); ++f) {
      if (ctx.features[f].rfind(prefix, 0) == 0) cols.push_back(f);
    }
    if (cols.empty()) continue;
    for (std::size_t n = 0; n < ctx.num_regions; ++n) {
      for (std::size_t t = 0; t < ctx.time.steps; ++t) {
        double total = 0.0;
        for (std::size_t f : cols) total += ctx.at(n, t, f);
        if (std::fabs(total - 1.0) > 1e-9) {
          throw ValidationError(source + ": one-hot group '" + prefix + "' does not sum to 1 at " +
                                format_timestamp(ctx.time.at(t)));
        }
      }
    }
  }
}

}  // namespace

Minutes parse_timestamp(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  int consumed = 0;
  const int got = std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d%n", &y, &mo, &d, &sep, &h, &mi, &consumed);
  if (got < 6 || (sep != 'T' && sep != ' ')) throw ValidationError("malformed timestamp '" + text + "'");
  std::string rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == ':') {
    int used = 0;
    if (std::sscanf(rest.c_str(), ":%2d%n", &s, &used) != 1) throw ValidationError("malformed timestamp '" + text + "'");
    rest = rest.substr(static_cast<std::size_t>(used));
  }
  if (!(rest.empty() || rest == "Z")) throw ValidationError("malformed timestamp '" + text + "'");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s != 0) {
    throw ValidationError("timestamp out of range or not minute-aligned: '" + text + "'");
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 1440 + h * 60 + mi;
}

std::string format_timestamp(Minutes t) {
  const std::int64_t days = floor_div(t, 1440);
  const std::int64_t mod = t - days * 1440;
  std::int64_t y = 0;
  unsigned m = 0, d = 0;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:00", static_cast<long long>(y), m, d,
                static_cast<long long>(mod / 60), static_cast<long long>(mod % 60));
  return buf;
}

int day_of_week(Minutes t) {
  // 1970-01-01 was a Thursday (index 3).
  const std::int64_t days = floor_div(t, 1440);
  return static_cast<int>(((days % 7) + 7 + 3) % 7);
}

int minute_of_day(Minutes t) { return static_cast<int>(t - floor_div(t, 1440) * 1440); }

std::size_t Timeline::steps_per_day() const {
  if (interval_minutes <= 0 || 1440 % interval_minutes != 0) {
    throw ConfigError("interval_minutes must divide one day, got " + std::to_string(interval_minutes));
  }
  return static_cast<std::size_t>(1440 / interval_minutes);
}

std::size_t ContextSeries::feature_index(const std::string& name) const {
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i] == name) return i;
  }
  throw ValidationError("unknown context feature '" + name + "'");
}

FlowSeries parse_flows(const std::string& csv_text, const std::vector<std::string>& region_ids, int interval_minutes,
                       const std::string& source) {
  if (interval_minutes <= 0) throw ConfigError("interval_minutes must be positive");
  const CsvTable t = parse_csv(csv_text, source);
  const std::size_t cts = t.column("timestamp");
  const std::size_t creg = t.column("region_id");
  const std::size_t cin = t.column("inflow");
  const std::size_t cout = t.column("outflow");
  std::unordered_map<std::string, std::size_t> region_pos;
  for (std::size_t i = 0; i < region_ids.size(); ++i) region_pos.emplace(region_ids[i], i);

  std::vector<Minutes> stamps(t.rows.size());
  std::set<Minutes> unique;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    stamps[r] = parse_timestamp(t.rows[r][cts]);
    unique.insert(stamps[r]);
  }
  if (unique.empty()) throw ValidationError(source + ": no flow rows");
  const std::vector<Minutes> steps(unique.begin(), unique.end());
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (steps[i] - steps[i - 1] != interval_minutes) {
      throw AlignmentError(source + ": timestamps not spaced by " + std::to_string(interval_minutes) +
                           " minutes at " + format_timestamp(steps[i]));
    }
  }

  FlowSeries flow;
  flow.time = {steps.front(), interval_minutes, steps.size()};
  flow.region_ids = region_ids;
  flow.values.assign(region_ids.size() * steps.size() * FlowSeries::kChannels, 0.0);
  std::vector<char> filled(region_ids.size() * steps.size(), 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = source + ":" + std::to_string(t.lines[r]);
    const auto it = region_pos.find(t.rows[r][creg]);
    if (it == region_pos.end()) throw ValidationError(ctx + ": unknown region id '" + t.rows[r][creg] + "'");
    const std::size_t step = static_cast<std::size_t>((stamps[r] - steps.front()) / interval_minutes);
    const double in = parse_double(t.rows[r][cin], ctx);
    const double out = parse_double(t.rows[r][cout], ctx);
    if (!(in >= 0) || !(out >= 0) || !std::isfinite(in) || !std::isfinite(out)) {
      throw ValidationError(ctx + ": flow counts must be finite and non-negative");
    }
    char& f = filled[it->second * steps.size() + step];
    if (f) throw ValidationError(ctx + ": duplicate row for region '" + t.rows[r][creg] + "'");
    f = 1;
    flow.at(it->second, step, 0) = in;
    flow.at(it->second, step, 1) = out;
  }
  for (std::size_t step = 0; step < steps.size(); ++step) {
    for (std::size_t n = 0; n < region_ids.size(); ++n) {
      if (!filled[n * steps.size() + step]) {
        throw AlignmentError(source + ": missing flow for region '" + region_ids[n] + "' at " +
                             format_timestamp(steps[step]));
      }
    }
  }
  return flow;
}

ContextSeries parse_context(const std::string& csv_text, const FlowSeries& flow, const LoadOptions& options,
                            const std::string& source) {
  const CsvTable t = parse_csv(csv_text, source);
  const std::size_t cts = t.column("timestamp");
  const bool per_region = t.has_column("region_id");
  const std::size_t creg = per_region ? t.column("region_id") : 0;
  std::vector<std::size_t> feature_cols;
  ContextSeries ctx;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == cts || (per_region && c == creg)) continue;
    feature_cols.push_back(c);
    ctx.features.push_back(t.header[c]);
  }
  const std::size_t N = flow.num_regions();
  const std::size_t T = flow.num_steps();
  ctx.time = flow.time;
  ctx.num_regions = N;
  ctx.citywide = !per_region;
  ctx.values.assign(N * T * feature_cols.size(), 0.0);

  std::unordered_map<std::string, std::size_t> region_pos;
  for (std::size_t i = 0; i < N; ++i) region_pos.emplace(flow.region_ids[i], i);

  // Earliest offending instant across extra and missing timestamps.
  Minutes first_bad = 0;
  bool bad = false;
  auto note_bad = [&](Minutes m) {
    if (!bad || m < first_bad) first_bad = m;
    bad = true;
  };
  const std::size_t slots = per_region ? N : 1;
  std::vector<char> filled(slots * T, 0);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = source + ":" + std::to_string(t.lines[r]);
    const Minutes m = parse_timestamp(t.rows[r][cts]);
    const Minutes offset = m - flow.time.start;
    if (offset < 0 || offset % flow.time.interval_minutes != 0 ||
        static_cast<std::size_t>(offset / flow.time.interval_minutes) >= T) {
      note_bad(m);
      continue;
    }
    const std::size_t step = static_cast<std::size_t>(offset / flow.time.interval_minutes);
    std::size_t slot = 0;
    if (per_region) {
      const auto it = region_pos.find(t.rows[r][creg]);
      if (it == region_pos.end()) throw ValidationError(where + ": unknown region id '" + t.rows[r][creg] + "'");
      slot = it->second;
    }
    if (filled[slot * T + step]) throw ValidationError(where + ": duplicate context row");
    filled[slot * T + step] = 1;
    for (std::size_t f = 0; f < feature_cols.size(); ++f) {
      const double v = parse_double(t.rows[r][feature_cols[f]], where);
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite context value");
      if (per_region) {
        ctx.at(slot, step, f) = v;
      } else {
        for (std::size_t n = 0; n < N; ++n) ctx.at(n, step, f) = v;
      }
    }
  }
  for (std::size_t s = 0; s < slots; ++s) {
    for (std::size_t step = 0; step < T; ++step) {
      if (!filled[s * T + step]) note_bad(flow.time.at(step));
    }
  }
  if (bad) throw AlignmentError(source + ": context timestamps do not align with flows; first offending instant " +
                                format_timestamp(first_bad));
  check_onehot_groups(ctx, options.onehot_groups, source);
  return ctx;
}

Dataset load_dataset(const std::filesystem::path& dir, const LoadOptions& options) {
  Dataset data;
  data.regions = read_regions_csv(dir / "regions.csv");
  data.trips = read_trips_csv(dir / "trips.csv");
  std::vector<std::string> ids;
  for (const auto& r : data.regions) ids.push_back(r.id);
  data.flow = parse_flows(read_file(dir / "flows.csv"), ids, options.interval_minutes, (dir / "flows.csv").string());
  data.context = parse_context(read_file(dir / "context.csv"), data.flow, options, (dir / "context.csv").string());
  return data;
}

std::string flows_to_csv(const FlowSeries& flow) {
  std::ostringstream os;
  os << "timestamp,region_id,inflow,outflow\n";
  for (std::size_t t = 0; t < flow.num_steps(); ++t) {
    const std::string ts = format_timestamp(flow.time.at(t));
    for (std::size_t n = 0; n < flow.num_regions(); ++n) {
      os << ts << ',' << flow.region_ids[n] << ',' << format_double(flow.at(n, t, 0)) << ','
         << format_double(flow.at(n, t, 1)) << '\n';
    }
  }
  return os.str();
}

std::string context_to_csv(const ContextSeries& ctx, const std::vector<std::string>& region_ids) {
  std::ostringstream os;
  os << "timestamp";
  if (!ctx.citywide) os << ",region_id";
  for (const auto& f : ctx.features) os << ',' << f;
  os << '\n';
  for (std::size_t t = 0; t < ctx.time.steps; ++t) {
    const std::string ts = format_timestamp(ctx.time.at(t));
    const std::size_t rows = ctx.citywide ? 1 : ctx.num_regions;
    for (std::size_t n = 0; n < rows; ++n) {
      os << ts;
      if (!ctx.citywide) os << ',' << region_ids.at(n);
      for (std::size_t f = 0; f < ctx.num_features(); ++f) os << ',' << format_double(ctx.at(n, t, f));
      os << '\n';
    }
  }
  return os.str();
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  write_file_atomic(dir / "regions.csv", regions_to_csv(data.regions));
  write_file_atomic(dir / "trips.csv", trips_to_csv(data.trips));
  write_file_atomic(dir / "flows.csv", flows_to_csv(data.flow));
  write_file_atomic(dir / "context.csv", context_to_csv(data.context, data.flow.region_ids));
}

std::size_t first_valid_anchor(const Timeline& time, const SampleOptions& o) {
  using I = long long;
  I need = static_cast<I>(o.P) - 1;
  if (o.use_day) need = std::max(need, static_cast<I>(time.steps_per_day() + o.P) - static_cast<I>(o.Q) - 1);
  if (o.use_week) need = std::max(need, static_cast<I>(time.steps_per_week() + o.P) - static_cast<I>(o.Q) - 1);
  return static_cast<std::size_t>(std::max<I>(0, need));
}

std::vector<Sample> make_samples(const FlowSeries& flow, const ContextSeries& ctx, const SampleOptions& o) {
  if (o.P == 0 || o.Q == 0) throw ConfigError("P and Q must be positive");
  if (ctx.time.steps != flow.time.steps || ctx.num_regions != flow.num_regions()) {
    throw DimensionError("context and flow series differ in shape");
  }
  const std::size_t N = flow.num_regions();
  const std::size_t T = flow.num_steps();
  const std::size_t c2 = ctx.num_features();
  const std::size_t c1 = FlowSeries::kChannels;
  const std::size_t spd = flow.time.steps_per_day();
  const std::size_t spw = flow.time.steps_per_week();
  const std::size_t first = first_valid_anchor(flow.time, o);

  std::vector<Sample> samples;
  if (T < o.Q + 1 || first + o.Q + 1 > T) return samples;
  for (std::size_t t = first; t + o.Q <= T - 1; ++t) {
    Sample s;
    s.anchor = t;
    s.num_regions = N;
    s.P = o.P;
    s.Q = o.Q;
    s.c2 = c2;
    auto fill_flow = [&](std::vector<double>& dst, std::size_t start, std::size_t len, bool present) {
      dst.assign(N * len * c1, 0.0);
      if (!present) return;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < len; ++p)
          for (std::size_t c = 0; c < c1; ++c) dst[(n * len + p) * c1 + c] = flow.at(n, start + p, c);
    };
    auto fill_ctx = [&](std::vector<double>& dst, std::size_t start, std::size_t len, bool present) {
      dst.assign(N * len * c2, 0.0);
      if (!present) return;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t p = 0; p < len; ++p)
          for (std::size_t f = 0; f < c2; ++f) dst[(n * len + p) * c2 + f] = ctx.at(n, start + p, f);
    };
    const std::size_t hour_start = t + 1 - o.P;
    const std::size_t day_start = o.use_day ? t + o.Q + 1 - spd - o.P : 0;
    const std::size_t week_start = o.use_week ? t + o.Q + 1 - spw - o.P : 0;
    fill_flow(s.x_hour, hour_start, o.P, true);
    fill_flow(s.x_day, day_start, o.P, o.use_day);
    fill_flow(s.x_week, week_start, o.P, o.use_week);
    fill_ctx(s.c_hour, hour_start, o.P, true);
    fill_ctx(s.c_day, day_start, o.P, o.use_day);
    fill_ctx(s.c_week, week_start, o.P, o.use_week);
    fill_ctx(s.c_future, t + 1, o.Q, true);
    fill_flow(s.y, t + 1, o.Q, true);
    samples.push_back(std::move(s));
  }
  return samples;
}

Splits split_chronological(std::vector<Sample> samples, double train_frac, double val_frac) {
  if (samples.size() < 5) throw ConfigError("need at least 5 samples to split, got " + std::to_string(samples.size()));
  if (!(train_frac > 0 && val_frac > 0 && train_frac + val_frac < 1)) throw ConfigError("invalid split fractions");
  const std::size_t n = samples.size();
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_frac + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * val_frac + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) throw ConfigError("split leaves an empty partition");
  Splits s;
  auto first = std::make_move_iterator(samples.begin());
  s.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(first + static_cast<std::ptrdiff_t>(n_train), first + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(samples.end()));
  return s;
}

Normalizer Normalizer::fit(const FlowSeries& flow, std::size_t end_step, NormKind kind) {
  end_step = std::min(end_step, flow.num_steps());
  if (end_step == 0) throw ValidationError("normalizer needs at least one training step");
  Normalizer norm;
  norm.kind = kind;
  for (std::size_t c = 0; c < FlowSeries::kChannels; ++c) {
    double lo = flow.at(0, 0, c), hi = lo, total = 0.0, total_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t n = 0; n < flow.num_regions(); ++n) {
      for (std::size_t t = 0; t < end_step; ++t) {
        const double v = flow.at(n, t, c);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        total += v;
        total_sq += v * v;
        ++count;
      }
    }
    if (kind == NormKind::MinMax) {
      norm.offset.push_back(lo);
      norm.scale.push_back(hi > lo ? hi - lo : 1.0);
    } else {
      const double mu = total / static_cast<double>(count);
      const double var = std::max(0.0, total_sq / static_cast<double>(count) - mu * mu);
      norm.offset.push_back(mu);
      norm.scale.push_back(var > 0 ? std::sqrt(var) : 1.0);
    }
  }
  return norm;
}

NormKind parse_norm_kind(const std::string& name) {
  if (name == "minmax") return NormKind::MinMax;
  if (name == "zscore") return NormKind::ZScore;
  throw ConfigError("unknown normalization '" + name + "'");
}

}  // namespace stnscm
