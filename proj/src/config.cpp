#include "stnscm/config.hpp"

#include <algorithm>
#include <sstream>

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

const Config::KeyInfo* find_key(const std::string& key) {
  for (const auto& k : Config::schema()) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

}  // namespace

const std::vector<Config::KeyInfo>& Config::schema() {
  static const std::vector<KeyInfo> keys = {
      // data
      {"data_dir", "data", "directory holding flows.csv, context.csv, regions.csv, trips.csv"},
      {"out_dir", "out", "directory for artifacts"},
      {"checkpoint", "", "checkpoint path (default <out_dir>/checkpoint.json)"},
      {"interval_minutes", "30", "time step length in minutes"},
      {"P", "8", "history length in steps"},
      {"Q", "4", "forecast horizon in steps"},
      {"use_week_branch", "true", "build the previous-week periodic slice"},
      {"use_day_branch", "true", "build the previous-day periodic slice"},
      {"train_frac", "0.6", "chronological training fraction"},
      {"val_frac", "0.2", "chronological validation fraction"},
      {"normalization", "minmax", "flow normalization: minmax | zscore"},
      {"onehot_groups", "dow_", "comma list of context column prefixes forming one-hot groups"},
      {"mape_threshold", "1.0", "targets with |y| below this are excluded from MAPE"},
      // graphs
      {"epsilon_km", "2.0", "geo graph distance threshold in km"},
      {"geo_connect_far", "false", "keep geo edges with dis > epsilon instead of dis <= epsilon"},
      // model
      {"d", "32", "hidden width"},
      {"depth", "2", "graph propagation depth n"},
      {"layers", "1", "stacked recurrent layers"},
      {"leaky_causal", "false", "leaky ReLU instead of ReLU on the dynamic graph"},
      {"seed", "1", "random seed"},
      // ablation
      {"use_geo", "true", "use the geographic graph"},
      {"use_trans", "true", "use the transition graph"},
      {"use_dyn", "true", "use the dynamic causal graph"},
      {"use_se", "true", "squeeze-excitation inside the dynamic graph generator"},
      {"use_h_in_generator", "true", "previous state feeds the dynamic graph generator"},
      {"use_x_in_generator", "true", "gated features feed the dynamic graph generator"},
      {"use_counterfactual", "true", "attention-based decoder initialization"},
      {"input_gate", "glu", "input gate variant: glu | fc | none"},
      // training
      {"epochs", "300", "epoch cap"},
      {"batch_size", "16", "samples per mini-batch"},
      {"lr", "0.001", "Adam learning rate"},
      {"clip_norm", "5.0", "global gradient-norm clipping threshold"},
      {"patience", "15", "early-stopping patience in epochs"},
      {"loss", "l1", "training loss: l1 | l2"},
      {"teacher_forcing_fraction", "0.5", "fraction of epochs over which teacher forcing decays 1 -> 0"},
      // synthetic generator
      {"synth_rows", "3", "synthetic grid rows"},
      {"synth_cols", "2", "synthetic grid columns"},
      {"synth_weeks", "4", "synthetic duration in weeks"},
      {"synth_seed", "11", "synthetic generator seed"},
      {"synth_spacing_km", "1.0", "distance between neighbouring grid cells"},
      {"synth_base_scale", "100", "scale of the mean expected outflow per region and step"},
      {"synth_coupling", "0.3", "fraction of outflow arriving at grid neighbours next step"},
      {"synth_weather_block", "6", "steps per constant-weather block"},
      {"synth_weather_min", "0.2", "lowest weather multiplier"},
      {"synth_weather_max", "1.2", "highest weather multiplier"},
      {"synth_start", "2024-01-01T00:00:00", "first timestamp (a Monday)"},
  };
  return keys;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return from_text(text, path.string());
}

Config Config::from_text(const std::string& text, const std::string& source) {
  Config cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    try {
      cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const KeyInfo* info = find_key(key);
  if (!info) throw ConfigError("unknown config key '" + key + "'");
  return info->default_value;
}

double Config::get_double(const std::string& key) const {
  try {
    return parse_double(get_string(key), key);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

long long Config::get_int(const std::string& key) const {
  try {
    return parse_int(get_string(key), key);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
}

std::size_t Config::get_size(const std::string& key) const {
  const long long v = get_int(key);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key) const {
  std::string v = get_string(key);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream is(get_string(key));
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string Config::echo() const {
  std::ostringstream os;
  for (const auto& k : schema()) os << k.key << " = " << get_string(k.key) << '\n';
  return os.str();
}

}  // namespace stnscm
