#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stnscm/cell.hpp"
#include "stnscm/config.hpp"
#include "stnscm/counterfactual.hpp"
#include "stnscm/data.hpp"
#include "stnscm/input_gate.hpp"

namespace stnscm {

struct ModelConfig {
  std::size_t num_nodes = 0;
  std::size_t P = 8;
  std::size_t Q = 4;
  std::size_t d = 32;
  std::size_t c1 = 2;
  std::size_t c2 = 0;
  std::size_t depth = 2;
  std::size_t layers = 1;
  bool leaky_causal = false;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AblationSwitches {
  bool use_geo = true;
  bool use_trans = true;
  bool use_dyn = true;
  bool use_se = true;
  bool use_h_in_generator = true;
  bool use_x_in_generator = true;
  bool use_counterfactual = true;
  InputGateMode input_gate = InputGateMode::Glu;

  void validate() const;
};

ModelConfig model_config_from(const Config& cfg, std::size_t num_nodes, std::size_t c2);
AblationSwitches switches_from(const Config& cfg);

// Stacked samples. Flows are normalized; contexts are used as given.
struct Batch {
  std::size_t size = 0;
  std::vector<std::size_t> anchors;
  Tensor x_hour, x_day, x_week;  // [B, N, P, c1]
  Tensor c_hour, c_day, c_week;  // [B, N, P, c2]
  Tensor c_future;               // [B, N, Q, c2]
  Tensor y_norm;                 // [B, N, Q, c1]
  Tensor y_raw;                  // [B, N, Q, c1]
};

Batch make_batch(const std::vector<const Sample*>& samples, const Normalizer& norm);
Batch make_batch(const std::vector<Sample>& samples, const Normalizer& norm);
// Copy of `batch` with one future-context feature set to `value` everywhere.
Batch with_future_feature(const Batch& batch, std::size_t feature, double value);

struct ForwardOptions {
  // Probability of feeding the ground truth to the next decoder step.
  double teacher_forcing = 0.0;
  std::mt19937_64* rng = nullptr;
  Instrumentation* instr = nullptr;
};

struct ForwardResult {
  Tensor pred_norm;                    // [B, N, Q, c1]
  Tensor pred;                         // denormalized, unclamped
  std::vector<Tensor> encoder_states;  // top layer H_1..H_P, each [B, N, d]
  Tensor attention;                    // [B, N, Q, P] (counterfactual only)
  Tensor decoder_init;                 // top-layer decoder initial state
  std::vector<Tensor> dyn_graphs;      // raw A_dyn per encoder then decoder step
};

// Encoder-decoder forecaster built from the gated input, the recurrent
// graph cells, and the counterfactual decoder initialization.
class Model {
 public:
  Model(const ModelConfig& config, const AblationSwitches& switches, const Normalizer& norm,
        Instrumentation* instr = nullptr);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  const AblationSwitches& switches() const { return switches_; }
  const Normalizer& normalizer() const { return norm_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }

  ForwardResult forward(const Batch& batch, const GraphSet& graphs, const ForwardOptions& options = {}) const;
  // Forward pass with the given future contexts swapped in.
  std::pair<ForwardResult, ForwardResult> predict_counterfactual_pair(const Batch& batch, const GraphSet& graphs,
                                                                      const Tensor& c_future_override) const;

  // Names of the learnable contribution coefficients.
  std::vector<std::string> alpha_names() const;

 private:
  Tensor denormalize(const Tensor& x) const;

  ModelConfig config_;
  AblationSwitches switches_;
  Normalizer norm_;
  ParamRegistry params_;
  std::optional<InputGate> input_gate_;
  std::vector<StnscuCell> encoder_;
  std::optional<CounterfactualReasoner> reasoner_;
  Tensor dec_in_w_, dec_in_b_;
  std::vector<StnscuCell> decoder_;
  Tensor head_w_, head_b_;
  Tensor norm_offset_, norm_scale_;
};

// Structured-text checkpoint: format tag, config echo, model shape,
// normalizer, and every parameter as name -> shape -> values.
struct Checkpoint {
  ModelConfig model;
  AblationSwitches switches;
  Normalizer norm;
  std::string config_echo;
  ParamRegistry params;
};

std::string checkpoint_to_json(const Model& model, const std::string& config_echo);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const Model& model, const std::string& config_echo);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, Instrumentation* instr = nullptr);

}  // namespace stnscm
