#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "stnscm/model.hpp"

namespace stnscm {

struct MetricTriple {
  double mae = 0.0;
  double rmse = 0.0;
  // Percentage; NaN when every target was masked.
  double mape = std::numeric_limits<double>::quiet_NaN();
};

struct Metrics {
  std::vector<MetricTriple> horizon;
  MetricTriple average;
};

// Streaming accumulator over [..., Q, c1]-shaped prediction/target blocks.
class MetricAccumulator {
 public:
  MetricAccumulator(std::size_t Q, std::size_t c1, double mape_threshold = 1.0);
  void add(std::span<const double> pred, std::span<const double> truth);
  Metrics result() const;

 private:
  struct Sums {
    double abs = 0.0, sq = 0.0, pct = 0.0;
    std::size_t count = 0, pct_count = 0;
  };
  std::size_t q_, c1_;
  double threshold_;
  std::vector<Sums> per_h_;
};

Metrics compute_metrics(std::span<const double> pred, std::span<const double> truth, std::size_t Q, std::size_t c1,
                        double mape_threshold = 1.0);

enum class LossKind { L1, L2 };
LossKind parse_loss_kind(const std::string& name);
Tensor loss(const Tensor& pred, const Tensor& target, LossKind kind = LossKind::L1);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamRegistry& params);
  std::size_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(ParamRegistry& params, double max_norm);

struct EpochLog {
  std::size_t epoch = 0;
  double teacher_forcing = 0.0;
  MetricTriple train;
  MetricTriple val;
  std::vector<double> alphas;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  double lr = 1e-3;
  double clip_norm = 5.0;
  std::size_t patience = 15;
  LossKind loss = LossKind::L1;
  double teacher_forcing_fraction = 0.5;
  double mape_threshold = 1.0;
  std::uint64_t seed = 1;
  std::function<void(const EpochLog&)> on_epoch;
};

TrainConfig train_config_from(const Config& cfg);

struct FitResult {
  std::vector<EpochLog> log;
  std::vector<std::string> alpha_names;
  std::size_t best_epoch = 0;
  double best_val_mae = std::numeric_limits<double>::infinity();
  bool diverged = false;
  std::string stop_reason;
};

// Mini-batch Adam with clipping, scheduled sampling and early stopping on
// validation MAE. On return the model holds the best-validation parameters.
FitResult fit(Model& model, const GraphSet& graphs, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& config, Instrumentation* instr = nullptr);

struct PredictionRecord {
  std::size_t anchor = 0;
  // [N, Q, c1] denormalized, clamped at zero.
  std::vector<double> pred;
  std::vector<double> truth;
};

Metrics evaluate(const Model& model, const GraphSet& graphs, const std::vector<Sample>& samples,
                 std::size_t batch_size, double mape_threshold, std::vector<PredictionRecord>* records = nullptr,
                 Instrumentation* instr = nullptr);

// Per (region, slot-of-week, channel) mean over steps [0, end_step),
// evaluated on the targets of `samples`.
Metrics historical_average_baseline(const FlowSeries& flow, std::size_t end_step, const std::vector<Sample>& samples,
                                    double mape_threshold);

struct AblationVariant {
  std::string category;
  std::string name;
  AblationSwitches switches;
};

// The full model followed by the nine single-component variants.
std::vector<AblationVariant> ablation_variants();

struct AblationRow {
  AblationVariant variant;
  Metrics test;
  Instrumentation counters;
  FitResult fit;
};

std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants, const ModelConfig& model_config,
                                      const Normalizer& norm, const GraphSet& graphs, const Splits& splits,
                                      const TrainConfig& config);
// Empty when every disabled component stayed idle; otherwise the reason.
std::string check_ablation_wiring(const AblationRow& row);
std::string ablation_csv(const std::vector<AblationRow>& rows);

std::string training_log_csv(const FitResult& result);
std::string alpha_log_csv(const FitResult& result);
std::string metrics_json(const Metrics& test, const Metrics* baseline = nullptr);

}  // namespace stnscm
