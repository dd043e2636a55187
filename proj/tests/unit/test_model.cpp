#include <cmath>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "stnscm/error.hpp"
#include "stnscm/pipeline.hpp"

using namespace stnscm;

TEST_CASE("output shape") {
  TinyProblem p = make_tiny_problem({});
  const ForwardResult out = p.model->forward(p.batch, p.graphs);
  CHECK(out.pred.shape() == Shape{2, 4, 2, 2});
  CHECK(out.pred_norm.shape() == Shape{2, 4, 2, 2});
  CHECK(out.encoder_states.size() == 3);
  CHECK(out.attention.shape() == Shape{2, 4, 2, 3});
  CHECK(out.dyn_graphs.size() == 3 + 2);
}

TEST_CASE("all-zero parameters give the output-head bias") {
  TinyProblem p = make_tiny_problem({});
  for (auto& [name, t] : p.model->params().entries())
    for (double& v : t.mutable_values()) v = 0.0;
  auto bias = p.model->params().get("head.b").mutable_values();
  bias[0] = 0.3;
  bias[1] = -0.7;
  const ForwardResult out = p.model->forward(p.batch, p.graphs);
  const auto v = out.pred_norm.values();
  for (std::size_t i = 0; i < v.size(); i += 2) {
    CHECK(v[i] == 0.3);
    CHECK(v[i + 1] == -0.7);
  }
}

TEST_CASE("end-to-end gradient on the tiny configuration") {
  TinyProblem p = make_tiny_problem({});
  GradCheckOptions opts;
  opts.max_elements = 600;
  const GradCheckReport r = grad_check_tiny(p, opts);
  CHECK(r.checked >= 600);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("counterfactual pair") {
  TinyProblem p = make_tiny_problem({});
  const auto same = p.model->predict_counterfactual_pair(p.batch, p.graphs, p.batch.c_future);
  CHECK(testing::max_abs_diff(same.first.pred, same.second.pred) == 0.0);

  std::mt19937_64 rng(3);
  const Tensor other = testing::random_tensor(p.batch.c_future.shape(), rng, 0, 1);
  const auto pair = p.model->predict_counterfactual_pair(p.batch, p.graphs, other);
  for (std::size_t i = 0; i < pair.first.encoder_states.size(); ++i)
    CHECK(testing::max_abs_diff(pair.first.encoder_states[i], pair.second.encoder_states[i]) == 0.0);
  CHECK(testing::max_abs_diff(pair.first.pred, pair.second.pred) > 0.0);
  CHECK_THROWS_AS(p.model->predict_counterfactual_pair(p.batch, p.graphs, Tensor::zeros({1, 4, 2, 3})),
                  ValidationError);
}

TEST_CASE("forward is deterministic for a fixed seed") {
  TinyProblem a = make_tiny_problem({});
  TinyProblem b = make_tiny_problem({});
  CHECK(testing::max_abs_diff(a.model->forward(a.batch, a.graphs).pred, b.model->forward(b.batch, b.graphs).pred) ==
        0.0);
}

TEST_CASE("checkpoint round trip is exact") {
  TinyProblem p = make_tiny_problem({});
  const std::string text = checkpoint_to_json(*p.model, "d = 8\n");
  const Checkpoint ck = checkpoint_from_json(text);
  CHECK(ck.config_echo == "d = 8\n");
  const auto restored = model_from_checkpoint(ck);
  REQUIRE(restored->params().size() == p.model->params().size());
  for (std::size_t i = 0; i < restored->params().size(); ++i) {
    const auto& [na, ta] = restored->params().entries()[i];
    const auto& [nb, tb] = p.model->params().entries()[i];
    CHECK(na == nb);
    CHECK(std::equal(ta.values().begin(), ta.values().end(), tb.values().begin()));
  }
  CHECK(testing::max_abs_diff(restored->forward(p.batch, p.graphs).pred, p.model->forward(p.batch, p.graphs).pred) ==
        0.0);
  CHECK_THROWS_AS(checkpoint_from_json("{"), ValidationError);
  CHECK_THROWS_AS(checkpoint_from_json("{\"format\": \"other\"}"), ValidationError);
}

TEST_CASE("ablation switches change the parameter set") {
  TinySpec spec;
  spec.switches.use_counterfactual = false;
  spec.switches.use_se = false;
  spec.switches.input_gate = InputGateMode::Fc;
  TinyProblem p = make_tiny_problem(spec);
  CHECK_FALSE(p.model->params().contains("cf.wq"));
  CHECK_FALSE(p.model->params().contains("enc.cell0.dyn.theta_ex1"));
  CHECK(p.model->params().contains("enc.input.fc.w"));
  Instrumentation instr;
  ForwardOptions opts;
  opts.instr = &instr;
  p.model->forward(p.batch, p.graphs, opts);
  CHECK(instr.counterfactual_calls == 0);
  CHECK(instr.copy_init_calls == 1);
  CHECK(instr.se_calls == 0);
  CHECK(instr.glu_calls == 0);
  CHECK(instr.fc_gate_calls == 3);

  AblationSwitches none;
  none.use_geo = none.use_trans = none.use_dyn = false;
  CHECK_THROWS_AS(none.validate(), ConfigError);
}

TEST_CASE("batch shape mismatch is a dimension error") {
  TinyProblem p = make_tiny_problem({});
  TinySpec other;
  other.Q = 3;
  TinyProblem q = make_tiny_problem(other);
  CHECK_THROWS_AS(p.model->forward(q.batch, p.graphs), DimensionError);
}
