#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace stnscm {

// Execution counters used to verify ablation wiring.
struct Instrumentation {
  std::size_t glu_calls = 0;
  std::size_t fc_gate_calls = 0;
  std::size_t flow_only_inputs = 0;
  std::size_t dyn_generators_built = 0;
  std::size_t dyn_graph_calls = 0;
  std::size_t se_calls = 0;
  std::size_t generator_used_x = 0;
  std::size_t generator_used_h = 0;
  std::size_t geo_terms = 0;
  std::size_t trans_terms = 0;
  std::size_t dyn_terms = 0;
  std::size_t counterfactual_calls = 0;
  std::size_t copy_init_calls = 0;

  std::vector<std::pair<std::string, std::size_t>> fields() const {
    return {{"glu_calls", glu_calls},
            {"fc_gate_calls", fc_gate_calls},
            {"flow_only_inputs", flow_only_inputs},
            {"dyn_generators_built", dyn_generators_built},
            {"dyn_graph_calls", dyn_graph_calls},
            {"se_calls", se_calls},
            {"generator_used_x", generator_used_x},
            {"generator_used_h", generator_used_h},
            {"geo_terms", geo_terms},
            {"trans_terms", trans_terms},
            {"dyn_terms", dyn_terms},
            {"counterfactual_calls", counterfactual_calls},
            {"copy_init_calls", copy_init_calls}};
  }
};

}  // namespace stnscm
