#include "stnscm/model.hpp"

#include <cmath>
#include "json.hpp"

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"

namespace stnscm {

namespace {

constexpr const char* kCheckpointFormat = "stnscm-checkpoint";
constexpr int kCheckpointVersion = 1;

Tensor stack_steps(const std::vector<Tensor>& steps) {
  // each [B, N, F] -> [B, N, S, F]
  std::vector<Tensor> expanded;
  expanded.reserve(steps.size());
  for (const auto& s : steps) {
    Shape shape = s.shape();
    shape.insert(shape.end() - 1, 1);
    expanded.push_back(reshape(s, shape));
  }
  return concat(expanded, 2);
}

}  // namespace

void ModelConfig::validate() const {
  if (num_nodes == 0 || P == 0 || Q == 0 || d == 0 || c1 == 0 || c2 == 0 || depth == 0 || layers == 0) {
    throw ConfigError("model config entries N, P, Q, d, c1, c2, depth, layers must all be positive");
  }
}

void AblationSwitches::validate() const {
  if (!use_geo && !use_trans && !use_dyn) throw ConfigError("all graphs disabled; enable at least one of geo, trans, dyn");
  if (use_dyn && !use_h_in_generator && !use_x_in_generator) {
    throw ConfigError("dynamic generator needs X' or H as input");
  }
}

ModelConfig model_config_from(const Config& cfg, std::size_t num_nodes, std::size_t c2) {
  ModelConfig m;
  m.num_nodes = num_nodes;
  m.P = cfg.get_size("P");
  m.Q = cfg.get_size("Q");
  m.d = cfg.get_size("d");
  m.c2 = c2;
  m.depth = cfg.get_size("depth");
  m.layers = cfg.get_size("layers");
  m.leaky_causal = cfg.get_bool("leaky_causal");
  m.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  m.validate();
  return m;
}

AblationSwitches switches_from(const Config& cfg) {
  AblationSwitches s;
  s.use_geo = cfg.get_bool("use_geo");
  s.use_trans = cfg.get_bool("use_trans");
  s.use_dyn = cfg.get_bool("use_dyn");
  s.use_se = cfg.get_bool("use_se");
  s.use_h_in_generator = cfg.get_bool("use_h_in_generator");
  s.use_x_in_generator = cfg.get_bool("use_x_in_generator");
  s.use_counterfactual = cfg.get_bool("use_counterfactual");
  s.input_gate = parse_input_gate_mode(cfg.get_string("input_gate"));
  s.validate();
  return s;
}

Batch make_batch(const std::vector<const Sample*>& samples, const Normalizer& norm) {
  if (samples.empty()) throw ValidationError("empty batch");
  const Sample& s0 = *samples.front();
  const std::size_t B = samples.size(), N = s0.num_regions, P = s0.P, Q = s0.Q, c2 = s0.c2;
  const std::size_t c1 = FlowSeries::kChannels;
  Batch b;
  b.size = B;
  auto gather = [&](auto member, std::size_t len, std::size_t width, bool normalize) {
    std::vector<double> out;
    out.reserve(B * N * len * width);
    for (const Sample* s : samples) {
      const std::vector<double>& src = s->*member;
      if (src.size() != N * len * width) throw DimensionError("batch: samples differ in shape");
      for (std::size_t i = 0; i < src.size(); ++i) {
        out.push_back(normalize ? norm.forward(src[i], i % width) : src[i]);
      }
    }
    return Tensor::from({B, N, len, width}, std::move(out));
  };
  for (const Sample* s : samples) {
    if (s->num_regions != N || s->P != P || s->Q != Q || s->c2 != c2) throw DimensionError("batch: samples differ in shape");
    b.anchors.push_back(s->anchor);
  }
  b.x_hour = gather(&Sample::x_hour, P, c1, true);
  b.x_day = gather(&Sample::x_day, P, c1, true);
  b.x_week = gather(&Sample::x_week, P, c1, true);
  b.c_hour = gather(&Sample::c_hour, P, c2, false);
  b.c_day = gather(&Sample::c_day, P, c2, false);
  b.c_week = gather(&Sample::c_week, P, c2, false);
  b.c_future = gather(&Sample::c_future, Q, c2, false);
  b.y_norm = gather(&Sample::y, Q, c1, true);
  b.y_raw = gather(&Sample::y, Q, c1, false);
  return b;
}

Batch make_batch(const std::vector<Sample>& samples, const Normalizer& norm) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(ptrs, norm);
}

Batch with_future_feature(const Batch& batch, std::size_t feature, double value) {
  const std::size_t c2 = batch.c_future.shape().back();
  if (feature >= c2) throw ValidationError("override feature index out of range");
  std::vector<double> v(batch.c_future.values().begin(), batch.c_future.values().end());
  for (std::size_t i = feature; i < v.size(); i += c2) v[i] = value;
  Batch out = batch;
  out.c_future = Tensor::from(batch.c_future.shape(), std::move(v));
  return out;
}

Model::Model(const ModelConfig& config, const AblationSwitches& switches, const Normalizer& norm,
             Instrumentation* instr)
    : config_(config), switches_(switches), norm_(norm) {
  config_.validate();
  switches_.validate();
  if (norm_.offset.size() != config_.c1 || norm_.scale.size() != config_.c1) {
    throw DimensionError("normalizer channel count does not match c1");
  }
  std::mt19937_64 rng(config_.seed);
  const std::size_t d = config_.d;

  input_gate_ = InputGate::create(params_, "enc.input", switches_.input_gate, config_.c1, config_.c2, d, rng);

  CellOptions cell;
  cell.num_nodes = config_.num_nodes;
  cell.d = d;
  cell.depth = config_.depth;
  cell.terms = {switches_.use_geo, switches_.use_trans, switches_.use_dyn};
  cell.dyn.use_se = switches_.use_se;
  cell.dyn.use_h = switches_.use_h_in_generator;
  cell.dyn.use_x = switches_.use_x_in_generator;
  cell.dyn.leaky = config_.leaky_causal;

  for (std::size_t l = 0; l < config_.layers; ++l) {
    encoder_.push_back(StnscuCell::create(params_, "enc.cell" + std::to_string(l), cell, rng, instr));
  }
  if (switches_.use_counterfactual) {
    reasoner_ = CounterfactualReasoner::create(params_, "cf", config_.c2, d, config_.Q, config_.layers, rng);
  }
  dec_in_w_ = params_.add_glorot("dec.input.w", config_.c1 + config_.c2, d, rng);
  dec_in_b_ = params_.add_zeros("dec.input.b", {d});
  for (std::size_t l = 0; l < config_.layers; ++l) {
    decoder_.push_back(StnscuCell::create(params_, "dec.cell" + std::to_string(l), cell, rng, instr));
  }
  head_w_ = params_.add_glorot("head.w", d, config_.c1, rng);
  head_b_ = params_.add_zeros("head.b", {config_.c1});

  norm_offset_ = Tensor::from({config_.c1}, norm_.offset);
  norm_scale_ = Tensor::from({config_.c1}, norm_.scale);
}

Tensor Model::denormalize(const Tensor& x) const { return add(mul(x, norm_scale_), norm_offset_); }

std::vector<std::string> Model::alpha_names() const {
  std::vector<std::string> names;
  for (const auto& [name, t] : params_) {
    if (name.find(".alpha") != std::string::npos) names.push_back(name);
  }
  return names;
}

ForwardResult Model::forward(const Batch& batch, const GraphSet& graphs, const ForwardOptions& options) const {
  const std::size_t B = batch.size, N = config_.num_nodes, P = config_.P, Q = config_.Q, d = config_.d;
  const Shape expect_hist{B, N, P, config_.c1};
  if (batch.x_hour.shape() != expect_hist || batch.c_future.shape() != Shape{B, N, Q, config_.c2}) {
    throw DimensionError("batch shapes " + shape_str(batch.x_hour.shape()) + " / " +
                         shape_str(batch.c_future.shape()) + " do not match the model");
  }
  if (graphs.num_nodes() != N) throw DimensionError("graph node count does not match the model");
  Instrumentation* instr = options.instr;
  ForwardResult out;

  // Encoder.
  std::vector<Tensor> h(config_.layers, Tensor::zeros({B, N, d}));
  for (std::size_t p = 0; p < P; ++p) {
    const Tensor week = concat_lastdim({select(batch.x_week, 2, p), select(batch.c_week, 2, p)});
    const Tensor day = concat_lastdim({select(batch.x_day, 2, p), select(batch.c_day, 2, p)});
    const Tensor hour = concat_lastdim({select(batch.x_hour, 2, p), select(batch.c_hour, 2, p)});
    Tensor x = input_gate_->forward(week, day, hour, instr);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      CellStep s = encoder_[l].step(x, h[l], graphs, instr);
      if (s.dyn_graph.defined() && l + 1 == config_.layers) out.dyn_graphs.push_back(s.dyn_graph.detach());
      h[l] = s.h;
      x = s.h;
    }
    out.encoder_states.push_back(h.back());
  }

  // Decoder initialization.
  std::vector<Tensor> dec_h(config_.layers);
  if (reasoner_) {
    const Tensor c_hist = concat_lastdim({batch.c_week, batch.c_day, batch.c_hour});
    const auto r = reasoner_->reason(batch.c_future, c_hist, stack_steps(out.encoder_states), instr);
    out.attention = r.attention;
    for (std::size_t l = 0; l < config_.layers; ++l) dec_h[l] = reasoner_->init_decoder(r.h_pred, l);
  } else {
    if (instr) ++instr->copy_init_calls;
    dec_h = h;
  }
  out.decoder_init = dec_h.back();

  // Decoder.
  Tensor prev = select(batch.x_hour, 2, P - 1);
  std::vector<Tensor> preds;
  for (std::size_t q = 0; q < Q; ++q) {
    if (q > 0) {
      bool force = false;
      if (options.teacher_forcing > 0 && options.rng) {
        force = std::uniform_real_distribution<double>(0.0, 1.0)(*options.rng) < options.teacher_forcing;
      }
      prev = force ? select(batch.y_norm, 2, q - 1) : preds.back();
    }
    Tensor x = affine(concat_lastdim({prev, select(batch.c_future, 2, q)}), dec_in_w_, dec_in_b_);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      CellStep s = decoder_[l].step(x, dec_h[l], graphs, instr);
      if (s.dyn_graph.defined() && l + 1 == config_.layers) out.dyn_graphs.push_back(s.dyn_graph.detach());
      dec_h[l] = s.h;
      x = s.h;
    }
    const Tensor y = affine(dec_h.back(), head_w_, head_b_);
    for (double v : y.values()) {
      if (!std::isfinite(v)) throw NumericError("non-finite prediction at horizon step " + std::to_string(q + 1));
    }
    preds.push_back(y);
  }
  out.pred_norm = stack_steps(preds);
  out.pred = denormalize(out.pred_norm);
  return out;
}

std::pair<ForwardResult, ForwardResult> Model::predict_counterfactual_pair(const Batch& batch, const GraphSet& graphs,
                                                                          const Tensor& c_future_override) const {
  if (c_future_override.shape() != batch.c_future.shape()) {
    throw ValidationError("future-context override " + shape_str(c_future_override.shape()) +
                          " does not match schema " + shape_str(batch.c_future.shape()));
  }
  Batch alt = batch;
  alt.c_future = c_future_override;
  return {forward(batch, graphs), forward(alt, graphs)};
}

std::string checkpoint_to_json(const Model& model, const std::string& config_echo) {
  using nlohmann::json;
  const ModelConfig& c = model.config();
  const AblationSwitches& s = model.switches();
  json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = config_echo;
  j["model"] = {{"num_nodes", c.num_nodes}, {"P", c.P},         {"Q", c.Q},
                {"d", c.d},                 {"c1", c.c1},       {"c2", c.c2},
                {"depth", c.depth},         {"layers", c.layers}, {"leaky_causal", c.leaky_causal},
                {"seed", c.seed}};
  j["switches"] = {{"use_geo", s.use_geo},
                   {"use_trans", s.use_trans},
                   {"use_dyn", s.use_dyn},
                   {"use_se", s.use_se},
                   {"use_h_in_generator", s.use_h_in_generator},
                   {"use_x_in_generator", s.use_x_in_generator},
                   {"use_counterfactual", s.use_counterfactual},
                   {"input_gate", to_string(s.input_gate)}};
  j["normalizer"] = {{"kind", model.normalizer().kind == NormKind::MinMax ? "minmax" : "zscore"},
                     {"offset", model.normalizer().offset},
                     {"scale", model.normalizer().scale}};
  json params = json::array();
  for (const auto& [name, t] : model.params()) {
    params.push_back({{"name", name},
                      {"shape", t.shape()},
                      {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  j["params"] = std::move(params);
  return j.dump(1);
}

Checkpoint checkpoint_from_json(const std::string& text) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) throw ValidationError("not a checkpoint file");
    if (j.at("version").get<int>() != kCheckpointVersion) throw ValidationError("unsupported checkpoint version");
    Checkpoint ck;
    const json& m = j.at("model");
    ck.model.num_nodes = m.at("num_nodes");
    ck.model.P = m.at("P");
    ck.model.Q = m.at("Q");
    ck.model.d = m.at("d");
    ck.model.c1 = m.at("c1");
    ck.model.c2 = m.at("c2");
    ck.model.depth = m.at("depth");
    ck.model.layers = m.at("layers");
    ck.model.leaky_causal = m.at("leaky_causal");
    ck.model.seed = m.at("seed");
    const json& s = j.at("switches");
    ck.switches.use_geo = s.at("use_geo");
    ck.switches.use_trans = s.at("use_trans");
    ck.switches.use_dyn = s.at("use_dyn");
    ck.switches.use_se = s.at("use_se");
    ck.switches.use_h_in_generator = s.at("use_h_in_generator");
    ck.switches.use_x_in_generator = s.at("use_x_in_generator");
    ck.switches.use_counterfactual = s.at("use_counterfactual");
    ck.switches.input_gate = parse_input_gate_mode(s.at("input_gate").get<std::string>());
    const json& n = j.at("normalizer");
    ck.norm.kind = parse_norm_kind(n.at("kind").get<std::string>());
    ck.norm.offset = n.at("offset").get<std::vector<double>>();
    ck.norm.scale = n.at("scale").get<std::vector<double>>();
    ck.config_echo = j.at("config").get<std::string>();
    for (const json& p : j.at("params")) {
      ck.params.add(p.at("name").get<std::string>(),
                    Tensor::from(p.at("shape").get<Shape>(), p.at("values").get<std::vector<double>>(), true));
    }
    return ck;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_echo) {
  write_file_atomic(path, checkpoint_to_json(model, config_echo));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_file(path)); }

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, Instrumentation* instr) {
  auto model = std::make_unique<Model>(ckpt.model, ckpt.switches, ckpt.norm, instr);
  model->params().assign_values(ckpt.params);
  return model;
}

}  // namespace stnscm
