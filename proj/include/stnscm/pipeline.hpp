#pragma once

#include <memory>

#include "stnscm/gradcheck.hpp"
#include "stnscm/train.hpp"

namespace stnscm {

// Everything derived from a dataset and a config before training starts.
struct Prepared {
  Dataset data;
  GraphSet graphs;
  StaticGraph geo;
  StaticGraph trans;
  SampleOptions sample_options;
  Splits splits;
  // Steps [0, fit_end) feed the normalizer and the historical baseline.
  std::size_t fit_end = 0;
  Normalizer norm;
  ModelConfig model;
  AblationSwitches switches;
  TrainConfig train;
};

LoadOptions load_options_from(const Config& cfg);
Prepared prepare(Dataset data, const Config& cfg);
Prepared prepare_from_dir(const Config& cfg);


// Randomly initialized model, graphs and batch for gradient and
// equivariance checks.
struct TinySpec {
  std::size_t N = 4;
  std::size_t P = 3;
  std::size_t Q = 2;
  std::size_t d = 8;
  std::size_t c2 = 3;
  std::size_t depth = 2;
  std::size_t batch = 2;
  std::uint64_t seed = 3;
  AblationSwitches switches;
};

struct TinyProblem {
  std::unique_ptr<Model> model;
  GraphSet graphs;
  Batch batch;
  // Fixed random weights so the probe loss is smooth in the prediction.
  Tensor probe;
};

TinyProblem make_tiny_problem(const TinySpec& spec);
Tensor tiny_probe_loss(const TinyProblem& problem);
GradCheckReport grad_check_tiny(TinyProblem& problem, const GradCheckOptions& options = {});

}  // namespace stnscm
