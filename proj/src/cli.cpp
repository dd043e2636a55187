#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "stnscm/csv.hpp"
#include "stnscm/error.hpp"
#include "stnscm/pipeline.hpp"
#include "stnscm/synth.hpp"

namespace fs = std::filesystem;

namespace stnscm {

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
      return kExitConfig;
    case ErrorKind::Numeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("-s,--set", args.sets, "override a config key, e.g. --set epochs=50 (repeatable)")
      ->allow_extra_args(false);
}

Config load_config(const CommonArgs& args) {
  Config cfg = args.config_path.empty() ? Config{} : Config::from_file(args.config_path);
  for (const auto& s : args.sets) cfg.set_assignment(s);
  return cfg;
}

fs::path out_dir(const Config& cfg) {
  fs::path dir = cfg.get_string("out_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

fs::path checkpoint_path(const Config& cfg) {
  const std::string explicit_path = cfg.get_string("checkpoint");
  return explicit_path.empty() ? fs::path(cfg.get_string("out_dir")) / "checkpoint.json" : fs::path(explicit_path);
}

std::string predictions_csv(const std::vector<PredictionRecord>& records, const FlowSeries& flow, std::size_t Q) {
  std::ostringstream os;
  os << "timestamp,region_id,horizon,inflow_pred,outflow_pred,inflow_true,outflow_true\n";
  const std::size_t N = flow.num_regions();
  for (const auto& r : records) {
    for (std::size_t q = 0; q < Q; ++q) {
      const std::string ts = format_timestamp(flow.time.at(r.anchor + 1 + q));
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t i = (n * Q + q) * 2;
        os << ts << ',' << flow.region_ids[n] << ',' << q + 1 << ',' << format_double(r.pred[i]) << ','
           << format_double(r.pred[i + 1]) << ',' << format_double(r.truth[i]) << ',' << format_double(r.truth[i + 1])
           << '\n';
      }
    }
  }
  return os.str();
}

// Warm start from the checkpoint written by `train`.
std::unique_ptr<Model> load_model(const Config& cfg, const Prepared& prep) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path(cfg));
  if (ckpt.model.num_nodes != prep.model.num_nodes || ckpt.model.c2 != prep.model.c2 || ckpt.model.P != prep.model.P ||
      ckpt.model.Q != prep.model.Q) {
    throw ValidationError("checkpoint shape (N, c2, P, Q) does not match the dataset and config");
  }
  return model_from_checkpoint(ckpt);
}

void print_metrics(const char* label, const Metrics& m) {
  std::cout << label << " mae=" << m.average.mae << " rmse=" << m.average.rmse << " mape="
            << (std::isfinite(m.average.mape) ? std::to_string(m.average.mape) : std::string("nan")) << '\n';
}

int cmd_synth_gen(const Config& cfg) {
  const SynthScenario scenario = synth_scenario_from(cfg);
  const SynthOutput out = generate(scenario);
  const fs::path dir = cfg.get_string("data_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create data directory " + dir.string() + ": " + ec.message());
  save_dataset(out.data, dir);
  write_file_atomic(dir / "flows_expected.csv", expected_flows_csv(out));
  std::cout << "wrote " << scenario.num_regions() << " regions x " << out.data.flow.num_steps() << " steps to "
            << dir.string() << '\n';
  return 0;
}

int cmd_build_graphs(const Config& cfg) {
  const Dataset data = load_dataset(cfg.get_string("data_dir"), load_options_from(cfg));
  const StaticGraph geo = build_geo_graph(data.regions, cfg.get_double("epsilon_km"), cfg.get_bool("geo_connect_far"));
  const StaticGraph trans = build_trans_graph(data.regions, data.trips);
  const fs::path dir = out_dir(cfg);
  std::vector<std::string> ids;
  for (const auto& r : data.regions) ids.push_back(r.id);
  write_file_atomic(dir / "geo_graph.csv", matrix_to_csv(geo.adjacency, ids));
  write_file_atomic(dir / "trans_graph.csv", matrix_to_csv(trans.adjacency, ids));
  std::cout << "geo sigma2=" << geo.sigma2 << " isolated_trans_rows=" << trans.isolated.size() << '\n';
  return 0;
}

int cmd_train(const Config& cfg, bool quiet) {
  Prepared prep = prepare_from_dir(cfg);
  const fs::path dir = out_dir(cfg);
  Model model(prep.model, prep.switches, prep.norm);
  TrainConfig tc = prep.train;
  if (!quiet) {
    tc.on_epoch = [](const EpochLog& e) {
      std::cerr << "epoch " << e.epoch << " train_mae=" << e.train.mae << " val_mae=" << e.val.mae << '\n';
    };
  }
  const FitResult result = fit(model, prep.graphs, prep.splits.train, prep.splits.val, tc);
  save_checkpoint(checkpoint_path(cfg), model, cfg.echo());
  write_file_atomic(dir / "training_log.csv", training_log_csv(result));
  write_file_atomic(dir / "alpha_log.csv", alpha_log_csv(result));

  std::vector<PredictionRecord> records;
  const Metrics test =
      evaluate(model, prep.graphs, prep.splits.test, tc.batch_size, tc.mape_threshold, &records);
  const Metrics ha = historical_average_baseline(prep.data.flow, prep.fit_end, prep.splits.test, tc.mape_threshold);
  write_file_atomic(dir / "metrics.json", metrics_json(test, &ha));
  write_file_atomic(dir / "predictions.csv", predictions_csv(records, prep.data.flow, prep.model.Q));
  std::cout << "best_epoch=" << result.best_epoch << " stop=\"" << result.stop_reason << "\"\n";
  print_metrics("test", test);
  print_metrics("historical_average", ha);
  if (result.diverged) throw NumericError("training diverged: " + result.stop_reason);
  return 0;
}

int cmd_evaluate(const Config& cfg) {
  Prepared prep = prepare_from_dir(cfg);
  const auto model = load_model(cfg, prep);
  const fs::path dir = out_dir(cfg);
  std::vector<PredictionRecord> records;
  const Metrics test =
      evaluate(*model, prep.graphs, prep.splits.test, prep.train.batch_size, prep.train.mape_threshold, &records);
  const Metrics ha =
      historical_average_baseline(prep.data.flow, prep.fit_end, prep.splits.test, prep.train.mape_threshold);
  write_file_atomic(dir / "metrics.json", metrics_json(test, &ha));
  write_file_atomic(dir / "predictions.csv", predictions_csv(records, prep.data.flow, prep.model.Q));
  print_metrics("test", test);
  print_metrics("historical_average", ha);
  return 0;
}

int cmd_ablate(const Config& cfg) {
  Prepared prep = prepare_from_dir(cfg);
  const fs::path dir = out_dir(cfg);
  const auto rows = run_ablation(ablation_variants(), prep.model, prep.norm, prep.graphs, prep.splits, prep.train);
  write_file_atomic(dir / "ablation.csv", ablation_csv(rows));
  bool wiring_ok = true;
  for (const auto& r : rows) {
    const std::string why = check_ablation_wiring(r);
    std::cout << r.variant.name << " mae=" << r.test.average.mae << (why.empty() ? "" : " WIRING: " + why) << '\n';
    wiring_ok = wiring_ok && why.empty();
  }
  if (!wiring_ok) throw ValidationError("ablation wiring check failed");
  return 0;
}

int cmd_whatif(const Config& cfg, const std::vector<std::string>& overrides) {
  if (overrides.empty()) throw ConfigError("whatif needs at least one --override feature=value");
  Prepared prep = prepare_from_dir(cfg);
  const auto model = load_model(cfg, prep);
  const ContextSeries& ctx = prep.data.context;
  std::vector<std::pair<std::size_t, double>> changes;
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not feature=value");
    const std::string name = o.substr(0, eq);
    bool known = false;
    for (const auto& f : ctx.features) known = known || f == name;
    if (!known) throw ValidationError("override feature '" + name + "' is not in the context schema");
    changes.emplace_back(ctx.feature_index(name), parse_double(o.substr(eq + 1), "override " + name));
  }

  const std::size_t N = prep.model.num_nodes, Q = prep.model.Q;
  const auto& samples = prep.splits.test;
  std::ostringstream os;
  os << "timestamp,region_id,horizon,inflow_base,outflow_base,inflow_override,outflow_override\n";
  double total_base = 0.0, total_override = 0.0;
  const std::size_t bs = prep.train.batch_size;
  for (std::size_t begin = 0; begin < samples.size(); begin += bs) {
    std::vector<const Sample*> chunk;
    for (std::size_t i = begin; i < std::min(samples.size(), begin + bs); ++i) chunk.push_back(&samples[i]);
    const Batch batch = make_batch(chunk, prep.norm);
    Batch alt = batch;
    for (const auto& [f, v] : changes) alt = with_future_feature(alt, f, v);
    const auto [base, over] = model->predict_counterfactual_pair(batch, prep.graphs, alt.c_future);
    const auto pb = base.pred.values(), po = over.pred.values();
    for (std::size_t b = 0; b < batch.size; ++b) {
      for (std::size_t q = 0; q < Q; ++q) {
        const std::string ts = format_timestamp(prep.data.flow.time.at(batch.anchors[b] + 1 + q));
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = ((b * N + n) * Q + q) * 2;
          const double ib = std::max(0.0, pb[i]), ob = std::max(0.0, pb[i + 1]);
          const double io = std::max(0.0, po[i]), oo = std::max(0.0, po[i + 1]);
          total_base += ib + ob;
          total_override += io + oo;
          os << ts << ',' << prep.data.flow.region_ids[n] << ',' << q + 1 << ',' << format_double(ib) << ','
             << format_double(ob) << ',' << format_double(io) << ',' << format_double(oo) << '\n';
        }
      }
    }
  }
  write_file_atomic(out_dir(cfg) / "whatif.csv", os.str());
  std::cout << "total_base=" << total_base << " total_override=" << total_override << '\n';
  return 0;
}

int cmd_gradcheck(const std::string& size, std::uint64_t seed, double eps) {
  TinySpec spec;
  spec.seed = seed;
  if (size == "small") {
    spec.N = 6;
    spec.P = 4;
    spec.Q = 3;
    spec.d = 12;
  } else if (size != "tiny") {
    throw ConfigError("unknown gradcheck size '" + size + "' (tiny or small)");
  }
  TinyProblem problem = make_tiny_problem(spec);
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckOptions opts;
  opts.eps = eps;
  const GradCheckReport r = grad_check_tiny(problem, opts);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "max_rel_error=" << r.max_rel_error << " checked=" << r.checked << " worst=" << r.worst_param << "["
            << r.worst_index << "] analytic=" << r.worst_analytic << " numeric=" << r.worst_numeric << " seconds=" << secs << '\n';
  if (!(r.max_rel_error < 1e-4)) throw NumericError("gradient check failed: max relative error " +
                                                    std::to_string(r.max_rel_error) + " at " + r.worst_param);
  return 0;
}

int cmd_dump_dyn_graph(const Config& cfg, std::size_t sample_index) {
  Prepared prep = prepare_from_dir(cfg);
  if (!prep.switches.use_dyn) throw ConfigError("dynamic graph is disabled (use_dyn=false)");
  const auto model = load_model(cfg, prep);
  const auto& samples = prep.splits.test;
  if (sample_index >= samples.size()) {
    throw ConfigError("sample index " + std::to_string(sample_index) + " out of range (test split has " +
                      std::to_string(samples.size()) + ")");
  }
  const Batch batch = make_batch(std::vector<const Sample*>{&samples[sample_index]}, prep.norm);
  const ForwardResult out = model->forward(batch, prep.graphs);
  const fs::path dir = out_dir(cfg);
  const std::size_t N = prep.model.num_nodes, P = prep.model.P;
  const std::size_t anchor = samples[sample_index].anchor;
  for (std::size_t k = 0; k < out.dyn_graphs.size(); ++k) {
    // encoder steps cover t-P+1..t, decoder steps t+1..t+Q
    const std::size_t step = anchor + 1 + k - P;
    SquareMatrix m(N);
    const auto v = out.dyn_graphs[k].values();
    std::copy(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(N * N), m.data.begin());
    write_file_atomic(dir / ("dyn_graph_" + std::to_string(step) + ".csv"), matrix_to_csv(m, prep.data.flow.region_ids));
  }
  std::cout << "wrote " << out.dyn_graphs.size() << " graphs for anchor " << format_timestamp(prep.data.flow.time.at(anchor))
            << '\n';
  return 0;
}

}  // namespace

}  // namespace stnscm

int run_cli(int argc, char** argv) {
  using namespace stnscm;
  CLI::App app{"Spatio-temporal bike-flow forecasting with context-conditioned counterfactual decoding"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  CommonArgs common;
  bool quiet = false;
  std::vector<std::string> overrides;
  std::string grad_size = "tiny";
  std::uint64_t grad_seed = 3;
  double grad_eps = 1e-5;
  std::size_t sample_index = 0;

  auto* synth = app.add_subcommand("synth-gen", "generate the synthetic grid dataset into data_dir");
  auto* graphs = app.add_subcommand("build-graphs", "write geo and transition adjacency CSVs to out_dir");
  auto* train = app.add_subcommand("train", "train, checkpoint, and evaluate on the test split");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  auto* ablate = app.add_subcommand("ablate", "train and evaluate every ablation variant");
  auto* whatif = app.add_subcommand("whatif", "paired base/override predictions on the test split");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the full model gradient");
  auto* dump = app.add_subcommand("dump-dyn-graph", "write the dynamic graph of every step for one test sample");
  for (auto* cmd : {synth, graphs, train, evaluate_cmd, ablate, whatif, dump}) add_common(cmd, common);
  train->add_flag("-q,--quiet", quiet, "no per-epoch progress on stderr");
  whatif->add_option("-o,--override", overrides, "future-context override feature=value (repeatable)")->required();
  gradcheck->add_option("--size", grad_size, "problem size: tiny (N=4 P=3 Q=2 d=8) or small")->capture_default_str();
  gradcheck->add_option("--seed", grad_seed, "initialization seed")->capture_default_str();
  gradcheck->add_option("--eps", grad_eps, "finite-difference step, within [1e-7, 1e-4]")->capture_default_str();
  dump->add_option("--sample", sample_index, "index into the test split")->capture_default_str();

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      std::cerr << "error: UsageError: " << one_line(e.what()) << '\n';
      return kExitConfig;
    }
    if (gradcheck->parsed()) return cmd_gradcheck(grad_size, grad_seed, grad_eps);
    const Config cfg = load_config(common);
    if (synth->parsed()) return cmd_synth_gen(cfg);
    if (graphs->parsed()) return cmd_build_graphs(cfg);
    if (train->parsed()) return cmd_train(cfg, quiet);
    if (evaluate_cmd->parsed()) return cmd_evaluate(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg);
    if (whatif->parsed()) return cmd_whatif(cfg, overrides);
    if (dump->parsed()) return cmd_dump_dyn_graph(cfg, sample_index);
  } catch (const Error& e) {
    std::cerr << "error: " << error_class_name(e.kind()) << ": " << one_line(e.what()) << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: InternalError: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 0;
}
