#include "stnscm/pipeline.hpp"

#include <random>

#include "stnscm/error.hpp"

namespace stnscm {

LoadOptions load_options_from(const Config& cfg) {
  LoadOptions o;
  o.interval_minutes = static_cast<int>(cfg.get_int("interval_minutes"));
  o.onehot_groups = cfg.get_list("onehot_groups");
  return o;
}

Prepared prepare(Dataset data, const Config& cfg) {
  Prepared p;
  p.data = std::move(data);
  p.geo = build_geo_graph(p.data.regions, cfg.get_double("epsilon_km"), cfg.get_bool("geo_connect_far"));
  p.trans = build_trans_graph(p.data.regions, p.data.trips);
  p.graphs = make_graph_set(p.geo, p.trans);

  p.sample_options.P = cfg.get_size("P");
  p.sample_options.Q = cfg.get_size("Q");
  p.sample_options.use_week = cfg.get_bool("use_week_branch");
  p.sample_options.use_day = cfg.get_bool("use_day_branch");
  p.splits = split_chronological(make_samples(p.data.flow, p.data.context, p.sample_options),
                                 cfg.get_double("train_frac"), cfg.get_double("val_frac"));
  p.fit_end = p.splits.train.back().anchor + 1;
  p.norm = Normalizer::fit(p.data.flow, p.fit_end, parse_norm_kind(cfg.get_string("normalization")));
  p.model = model_config_from(cfg, p.data.regions.size(), p.data.context.num_features());
  p.switches = switches_from(cfg);
  p.train = train_config_from(cfg);
  return p;
}

Prepared prepare_from_dir(const Config& cfg) {
  return prepare(load_dataset(cfg.get_string("data_dir"), load_options_from(cfg)), cfg);
}

TinyProblem make_tiny_problem(const TinySpec& s) {
  std::mt19937_64 rng(s.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_matrix = [&](bool symmetric) {
    SquareMatrix m(s.N);
    for (std::size_t i = 0; i < s.N; ++i) {
      for (std::size_t j = 0; j < s.N; ++j) {
        if (i != j) m(i, j) = u(rng);
      }
    }
    if (symmetric) {
      for (std::size_t i = 0; i < s.N; ++i) {
        for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
      }
    }
    return m;
  };
  StaticGraph geo, trans;
  geo.kind = GraphKind::Geo;
  geo.adjacency = random_matrix(true);
  trans.kind = GraphKind::Trans;
  trans.adjacency = row_normalize(random_matrix(false));

  TinyProblem p;
  p.graphs = make_graph_set(geo, trans);

  ModelConfig mc;
  mc.num_nodes = s.N;
  mc.P = s.P;
  mc.Q = s.Q;
  mc.d = s.d;
  mc.c2 = s.c2;
  mc.depth = s.depth;
  mc.seed = s.seed;
  Normalizer norm;
  norm.offset = {0.5, 0.25};
  norm.scale = {2.0, 3.0};
  p.model = std::make_unique<Model>(mc, s.switches, norm);

  auto random_tensor = [&](Shape shape) {
    std::vector<double> v(numel_of(shape));
    for (double& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v));
  };
  Batch& b = p.batch;
  b.size = s.batch;
  for (std::size_t i = 0; i < s.batch; ++i) b.anchors.push_back(i);
  b.x_hour = random_tensor({s.batch, s.N, s.P, 2});
  b.x_day = random_tensor({s.batch, s.N, s.P, 2});
  b.x_week = random_tensor({s.batch, s.N, s.P, 2});
  b.c_hour = random_tensor({s.batch, s.N, s.P, s.c2});
  b.c_day = random_tensor({s.batch, s.N, s.P, s.c2});
  b.c_week = random_tensor({s.batch, s.N, s.P, s.c2});
  b.c_future = random_tensor({s.batch, s.N, s.Q, s.c2});
  b.y_norm = random_tensor({s.batch, s.N, s.Q, 2});
  b.y_raw = b.y_norm;
  p.probe = random_tensor({s.batch, s.N, s.Q, 2});
  return p;
}

Tensor tiny_probe_loss(const TinyProblem& p) {
  const ForwardResult out = p.model->forward(p.batch, p.graphs);
  return mean_all(mul(out.pred_norm, p.probe));
}

GradCheckReport grad_check_tiny(TinyProblem& p, const GradCheckOptions& options) {
  return grad_check([&] { return tiny_probe_loss(p); }, p.model->params(), options);
}

}  // namespace stnscm
