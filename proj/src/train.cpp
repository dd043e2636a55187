#include "stnscm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::string fmt(double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); }

nlohmann::json metric_json(const MetricTriple& m) {
  nlohmann::json j;
  j["mae"] = m.mae;
  j["rmse"] = m.rmse;
  j["mape"] = std::isfinite(m.mape) ? nlohmann::json(m.mape) : nlohmann::json(nullptr);
  return j;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["average"] = metric_json(m.average);
  j["horizon"] = nlohmann::json::array();
  for (const auto& h : m.horizon) j["horizon"].push_back(metric_json(h));
  return j;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                                    std::size_t begin, std::size_t end) {
  std::vector<const Sample*> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(&samples[order[i]]);
  return out;
}

std::vector<double> clamped(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x = std::max(0.0, x);
  return out;
}

}  // namespace

MetricAccumulator::MetricAccumulator(std::size_t Q, std::size_t c1, double mape_threshold)
    : q_(Q), c1_(c1), threshold_(mape_threshold), per_h_(Q) {
  if (Q == 0 || c1 == 0) throw DimensionError("metrics need Q > 0 and c1 > 0");
}

void MetricAccumulator::add(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) {
    throw DimensionError("prediction has " + std::to_string(pred.size()) + " entries, target has " +
                         std::to_string(truth.size()));
  }
  if (pred.size() % (q_ * c1_) != 0) throw DimensionError("metric inputs are not a multiple of Q x c1");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Sums& s = per_h_[(i / c1_) % q_];
    const double e = pred[i] - truth[i];
    s.abs += std::abs(e);
    s.sq += e * e;
    ++s.count;
    if (std::abs(truth[i]) >= threshold_) {
      s.pct += std::abs(e) / std::abs(truth[i]);
      ++s.pct_count;
    }
  }
}

Metrics MetricAccumulator::result() const {
  Metrics m;
  Sums total;
  for (const auto& s : per_h_) {
    MetricTriple t;
    if (s.count > 0) {
      t.mae = s.abs / static_cast<double>(s.count);
      t.rmse = std::sqrt(s.sq / static_cast<double>(s.count));
    }
    t.mape = s.pct_count > 0 ? 100.0 * s.pct / static_cast<double>(s.pct_count) : nan_value();
    m.horizon.push_back(t);
    total.abs += s.abs;
    total.sq += s.sq;
    total.pct += s.pct;
    total.count += s.count;
    total.pct_count += s.pct_count;
  }
  if (total.count > 0) {
    m.average.mae = total.abs / static_cast<double>(total.count);
    m.average.rmse = std::sqrt(total.sq / static_cast<double>(total.count));
  }
  m.average.mape = total.pct_count > 0 ? 100.0 * total.pct / static_cast<double>(total.pct_count) : nan_value();
  return m;
}

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth, std::size_t Q, std::size_t c1,
                        double mape_threshold) {
  MetricAccumulator acc(Q, c1, mape_threshold);
  acc.add(pred, truth);
  return acc.result();
}

LossKind parse_loss_kind(const std::string& name) {
  if (name == "l1") return LossKind::L1;
  if (name == "l2") return LossKind::L2;
  throw ConfigError("unknown loss '" + name + "' (expected l1 or l2)");
}

Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("loss shapes differ: " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
  }
  const Tensor diff = sub(pred, target);
  return kind == LossKind::L1 ? mean_all(abs(diff)) : mean_all(square(diff));
}

void Adam::step(ParamRegistry& params) {
  auto& entries = params.entries();
  if (m_.empty()) {
    for (const auto& [name, t] : entries) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw ValidationError("optimizer state does not match the parameter registry");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& p = entries[k].second;
    auto value = p.mutable_values();
    auto grad = p.grad();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_grad_norm(ParamRegistry& params, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params.entries()) {
      for (double& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.epochs = cfg.get_size("epochs");
  t.batch_size = cfg.get_size("batch_size");
  t.lr = cfg.get_double("lr");
  t.clip_norm = cfg.get_double("clip_norm");
  t.patience = cfg.get_size("patience");
  t.loss = parse_loss_kind(cfg.get_string("loss"));
  t.teacher_forcing_fraction = cfg.get_double("teacher_forcing_fraction");
  t.mape_threshold = cfg.get_double("mape_threshold");
  t.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  if (t.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (t.lr < 0) throw ConfigError("lr must be non-negative");
  if (t.teacher_forcing_fraction < 0 || t.teacher_forcing_fraction > 1) {
    throw ConfigError("teacher_forcing_fraction must lie in [0, 1]");
  }
  return t;
}

FitResult fit(Model& model, const GraphSet& graphs, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& config, Instrumentation* instr) {
  if (train.empty() || val.empty()) throw ConfigError("training and validation splits must be non-empty");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  const ModelConfig& mc = model.config();
  const Normalizer& norm = model.normalizer();
  ParamRegistry& params = model.params();

  FitResult result;
  result.alpha_names = model.alpha_names();
  Adam adam(config.lr);
  std::mt19937_64 rng(config.seed ^ 0x5deece66dULL);
  ParamRegistry best = params.clone();
  ParamRegistry last_good = params.clone();
  std::size_t since_best = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const double decay_epochs = std::max(1.0, config.teacher_forcing_fraction * static_cast<double>(config.epochs));

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.teacher_forcing = std::max(0.0, 1.0 - static_cast<double>(epoch - 1) / decay_epochs);
    if (config.teacher_forcing_fraction == 0.0) log.teacher_forcing = 0.0;
    std::shuffle(order.begin(), order.end(), rng);

    MetricAccumulator acc(mc.Q, mc.c1, config.mape_threshold);
    bool diverged = false;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch batch = make_batch(pointers(train, order, begin, end), norm);
      ForwardOptions opts;
      opts.teacher_forcing = log.teacher_forcing;
      opts.rng = &rng;
      opts.instr = instr;
      ForwardResult out;
      try {
        out = model.forward(batch, graphs, opts);
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
      const Tensor l = loss(out.pred, batch.y_raw, config.loss);
      if (!std::isfinite(l.item())) {
        diverged = true;
        break;
      }
      params.zero_grads();
      l.backward();
      const double gnorm = clip_grad_norm(params, config.clip_norm);
      if (!std::isfinite(gnorm)) {
        diverged = true;
        break;
      }
      adam.step(params);
      acc.add(clamped(out.pred.values()), batch.y_raw.values());
    }
    if (diverged) {
      params.assign_values(last_good);
      result.diverged = true;
      result.stop_reason = "non-finite loss at epoch " + std::to_string(epoch);
      break;
    }
    log.train = acc.result().average;
    log.val = evaluate(model, graphs, val, config.batch_size, config.mape_threshold).average;
    for (const auto& name : result.alpha_names) log.alphas.push_back(params.get(name).values()[0]);
    last_good.assign_values(params);
    result.log.push_back(log);
    if (config.on_epoch) config.on_epoch(log);

    if (log.val.mae < result.best_val_mae) {
      result.best_val_mae = log.val.mae;
      result.best_epoch = epoch;
      best.assign_values(params);
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stop_reason = "early stop after " + std::to_string(config.patience) + " epochs without improvement";
      break;
    }
  }
  if (result.stop_reason.empty()) result.stop_reason = "epoch cap reached";
  if (result.best_epoch > 0) params.assign_values(best);
  return result;
}

Metrics evaluate(const Model& model, const GraphSet& graphs, const std::vector<Sample>& samples,
                 std::size_t batch_size, double mape_threshold, std::vector<PredictionRecord>* records,
                 Instrumentation* instr) {
  if (samples.empty()) throw ConfigError("evaluation split is empty");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  const ModelConfig& mc = model.config();
  MetricAccumulator acc(mc.Q, mc.c1, mape_threshold);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t block = mc.num_nodes * mc.Q * mc.c1;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    const std::size_t end = std::min(samples.size(), begin + batch_size);
    const Batch batch = make_batch(pointers(samples, order, begin, end), model.normalizer());
    ForwardOptions opts;
    opts.instr = instr;
    const ForwardResult out = model.forward(batch, graphs, opts);
    const std::vector<double> pred = clamped(out.pred.values());
    const auto truth = batch.y_raw.values();
    acc.add(pred, truth);
    if (records) {
      for (std::size_t b = 0; b < batch.size; ++b) {
        PredictionRecord r;
        r.anchor = batch.anchors[b];
        r.pred.assign(pred.begin() + b * block, pred.begin() + (b + 1) * block);
        r.truth.assign(truth.begin() + b * block, truth.begin() + (b + 1) * block);
        records->push_back(std::move(r));
      }
    }
  }
  return acc.result();
}

Metrics historical_average_baseline(const FlowSeries& flow, std::size_t end_step, const std::vector<Sample>& samples,
                                    double mape_threshold) {
  if (samples.empty()) throw ConfigError("baseline needs at least one sample");
  const std::size_t N = flow.num_regions(), C = FlowSeries::kChannels;
  const std::size_t spw = flow.time.steps_per_week();
  end_step = std::min(end_step, flow.num_steps());
  std::vector<double> sum(N * spw * C, 0.0);
  std::vector<std::size_t> cnt(spw, 0);
  for (std::size_t t = 0; t < end_step; ++t) {
    ++cnt[t % spw];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t c = 0; c < C; ++c) sum[(n * spw + t % spw) * C + c] += flow.at(n, t, c);
    }
  }
  double overall = 0.0;
  for (double v : sum) overall += v;
  overall /= std::max<double>(1.0, static_cast<double>(end_step * N * C));

  const std::size_t Q = samples.front().Q;
  MetricAccumulator acc(Q, C, mape_threshold);
  for (const auto& s : samples) {
    std::vector<double> pred(N * Q * C);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t q = 0; q < Q; ++q) {
        const std::size_t slot = (s.anchor + 1 + q) % spw;
        for (std::size_t c = 0; c < C; ++c) {
          pred[(n * Q + q) * C + c] = cnt[slot] > 0 ? sum[(n * spw + slot) * C + c] / cnt[slot] : overall;
        }
      }
    }
    acc.add(pred, s.y);
  }
  return acc.result();
}

std::vector<AblationVariant> ablation_variants() {
  std::vector<AblationVariant> v;
  auto add = [&](const std::string& cat, const std::string& name, auto tweak) {
    AblationSwitches s;
    tweak(s);
    v.push_back({cat, name, s});
  };
  add("full", "STNSCM", [](AblationSwitches&) {});
  add("graph", "w/o A^geo", [](AblationSwitches& s) { s.use_geo = false; });
  add("graph", "w/o A^trans", [](AblationSwitches& s) { s.use_trans = false; });
  add("graph", "w/o A^dyn", [](AblationSwitches& s) { s.use_dyn = false; });
  add("generator", "EGG w/o SE", [](AblationSwitches& s) { s.use_se = false; });
  add("generator", "EGG w/o H", [](AblationSwitches& s) { s.use_h_in_generator = false; });
  add("generator", "EGG w/o X", [](AblationSwitches& s) { s.use_x_in_generator = false; });
  add("reasoning", "w/o CR", [](AblationSwitches& s) { s.use_counterfactual = false; });
  add("input_gate", "IG w/ FC", [](AblationSwitches& s) { s.input_gate = InputGateMode::Fc; });
  add("input_gate", "w/o IG", [](AblationSwitches& s) { s.input_gate = InputGateMode::None; });
  return v;
}

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const ModelConfig& model_config,
                                      const Normalizer& norm, const GraphSet& graphs, const Splits& splits,
                                      const TrainConfig& config) {
  if (splits.train.empty() || splits.val.empty() || splits.test.empty()) {
    throw ConfigError("ablation needs non-empty train, val and test splits");
  }
  for (const auto& v : variants) v.switches.validate();
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    AblationRow row;
    row.variant = v;
    Model model(model_config, v.switches, norm, &row.counters);
    row.fit = fit(model, graphs, splits.train, splits.val, config, &row.counters);
    row.test = evaluate(model, graphs, splits.test, config.batch_size, config.mape_threshold, nullptr, &row.counters);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string check_ablation_wiring(const AblationRow& row) {
  const AblationSwitches& s = row.variant.switches;
  const Instrumentation& c = row.counters;
  std::vector<std::string> bad;
  auto expect_zero = [&](bool disabled, std::size_t count, const char* what) {
    if (disabled && count != 0) bad.push_back(std::string(what) + "=" + std::to_string(count));
  };
  expect_zero(!s.use_geo, c.geo_terms, "geo_terms");
  expect_zero(!s.use_trans, c.trans_terms, "trans_terms");
  expect_zero(!s.use_dyn, c.dyn_generators_built, "dyn_generators_built");
  expect_zero(!s.use_dyn, c.dyn_graph_calls, "dyn_graph_calls");
  expect_zero(!s.use_dyn, c.dyn_terms, "dyn_terms");
  expect_zero(!s.use_se || !s.use_dyn, c.se_calls, "se_calls");
  expect_zero(!s.use_h_in_generator || !s.use_dyn, c.generator_used_h, "generator_used_h");
  expect_zero(!s.use_x_in_generator || !s.use_dyn, c.generator_used_x, "generator_used_x");
  expect_zero(!s.use_counterfactual, c.counterfactual_calls, "counterfactual_calls");
  expect_zero(s.input_gate != InputGateMode::Glu, c.glu_calls, "glu_calls");
  expect_zero(s.input_gate != InputGateMode::Fc, c.fc_gate_calls, "fc_gate_calls");

  auto expect_used = [&](bool enabled, std::size_t count, const char* what) {
    if (enabled && count == 0) bad.push_back(std::string(what) + " never ran");
  };
  expect_used(s.use_geo, c.geo_terms, "geo_terms");
  expect_used(s.use_trans, c.trans_terms, "trans_terms");
  expect_used(s.use_dyn, c.dyn_graph_calls, "dyn_graph_calls");
  expect_used(s.use_dyn && s.use_se, c.se_calls, "se_calls");
  expect_used(s.use_counterfactual, c.counterfactual_calls, "counterfactual_calls");
  expect_used(s.input_gate == InputGateMode::Glu, c.glu_calls, "glu_calls");
  expect_used(s.input_gate == InputGateMode::Fc, c.fc_gate_calls, "fc_gate_calls");
  expect_used(s.input_gate == InputGateMode::None, c.flow_only_inputs, "flow_only_inputs");

  std::string out;
  for (const auto& b : bad) out += (out.empty() ? "" : "; ") + b;
  return out;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "category,variant,mae,rmse,mape";
  if (!rows.empty()) {
    for (const auto& [name, value] : rows.front().counters.fields()) os << ',' << name;
  }
  os << '\n';
  for (const auto& r : rows) {
    os << r.variant.category << ',' << r.variant.name << ',' << fmt(r.test.average.mae) << ','
       << fmt(r.test.average.rmse) << ',' << fmt(r.test.average.mape);
    for (const auto& [name, value] : r.counters.fields()) os << ',' << value;
    os << '\n';
  }
  return os.str();
}

std::string training_log_csv(const FitResult& result) {
  std::ostringstream os;
  os << "epoch,teacher_forcing,train_mae,train_rmse,train_mape,val_mae,val_rmse,val_mape";
  for (const auto& a : result.alpha_names) os << ',' << a;
  os << '\n';
  for (const auto& e : result.log) {
    os << e.epoch << ',' << fmt(e.teacher_forcing) << ',' << fmt(e.train.mae) << ',' << fmt(e.train.rmse) << ','
       << fmt(e.train.mape) << ',' << fmt(e.val.mae) << ',' << fmt(e.val.rmse) << ',' << fmt(e.val.mape);
    for (double a : e.alphas) os << ',' << fmt(a);
    os << '\n';
  }
  return os.str();
}

std::string alpha_log_csv(const FitResult& result) {
  std::ostringstream os;
  os << "epoch,name,value\n";
  for (const auto& e : result.log) {
    for (std::size_t i = 0; i < e.alphas.size(); ++i) {
      os << e.epoch << ',' << result.alpha_names[i] << ',' << fmt(e.alphas[i]) << '\n';
    }
  }
  return os.str();
}

std::string metrics_json(const Metrics& test, const Metrics* baseline) {
  nlohmann::json j;
  j["test"] = metrics_to_json(test);
  if (baseline) j["historical_average"] = metrics_to_json(*baseline);
  return j.dump(2) + "\n";
}

}  // namespace stnscm
