#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch() {
  const fs::path dir = fs::temp_directory_path() / "stnscm_test_cli";
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& args) {
  const char* exe = std::getenv("STNSCM_CLI");
  REQUIRE_MESSAGE(exe != nullptr, "STNSCM_CLI is not set");
  const fs::path out = scratch() / "stdout.txt", err = scratch() / "stderr.txt";
  const std::string cmd = std::string(exe) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

bool single_error_line(const std::string& err, const std::string& cls) {
  return err.rfind("error: " + cls + ": ", 0) == 0 && err.find('\n') == err.size() - 1;
}

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  const RunResult none = run("");
  CHECK(none.code == 2);
  const RunResult unknown = run("train --no-such-flag");
  CHECK(unknown.code == 2);
  CHECK(single_error_line(unknown.err, "UsageError"));
}

TEST_CASE("bad configuration exits with the config code") {
  const RunResult r = run("synth-gen --set no_such_key=1");
  CHECK(r.code == 2);
  CHECK(single_error_line(r.err, "ConfigError"));
  const RunResult bad = run("synth-gen --set synth_weeks=1 --set data_dir=" + (scratch() / "never").string());
  CHECK(bad.code == 2);
  const RunResult eps = run("gradcheck --eps 1");
  CHECK(eps.code == 2);
}

TEST_CASE("missing or malformed data exits with the data code") {
  const fs::path empty = scratch() / "empty_data";
  fs::remove_all(empty);
  fs::create_directories(empty);
  const RunResult r = run("build-graphs --set data_dir=" + empty.string() + " --set out_dir=" + (scratch() / "o").string());
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(r.err.find('\n') == r.err.size() - 1);
}

TEST_CASE("gradcheck passes on the tiny problem") {
  const RunResult r = run("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.find("max_rel_error=") != std::string::npos);
}

TEST_CASE("generate, build graphs, train, evaluate, whatif, dump") {
  const fs::path root = scratch() / "pipeline";
  fs::remove_all(root);
  const std::string common = " --set data_dir=" + (root / "data").string() + " --set out_dir=" + (root / "out").string() +
                             " --set synth_weeks=2 --set P=4 --set Q=2 --set d=4 --set epochs=2";

  REQUIRE(run("synth-gen" + common).code == 0);
  for (const char* f : {"regions.csv", "flows.csv", "trips.csv", "context.csv", "flows_expected.csv"})
    CHECK_MESSAGE(fs::exists(root / "data" / f), f);

  REQUIRE(run("build-graphs" + common).code == 0);
  CHECK(fs::exists(root / "out" / "geo_graph.csv"));
  CHECK(fs::exists(root / "out" / "trans_graph.csv"));

  const RunResult tr = run("train -q" + common);
  REQUIRE_MESSAGE(tr.code == 0, tr.err);
  for (const char* f : {"checkpoint.json", "training_log.csv", "alpha_log.csv", "metrics.json", "predictions.csv"})
    CHECK_MESSAGE(fs::exists(root / "out" / f), f);
  const std::string trained_metrics = slurp(root / "out" / "metrics.json");

  const RunResult ev = run("evaluate" + common);
  REQUIRE_MESSAGE(ev.code == 0, ev.err);
  CHECK(slurp(root / "out" / "metrics.json") == trained_metrics);
  CHECK(slurp(root / "out" / "predictions.csv")
            .rfind("timestamp,region_id,horizon,inflow_pred,outflow_pred,inflow_true,outflow_true\n", 0) == 0);

  const RunResult wi = run("whatif --override weather=0.2" + common);
  REQUIRE_MESSAGE(wi.code == 0, wi.err);
  CHECK(slurp(root / "out" / "whatif.csv")
            .rfind("timestamp,region_id,horizon,inflow_base,outflow_base,inflow_override,outflow_override\n", 0) == 0);
  const RunResult unknown_feature = run("whatif --override rain=1" + common);
  CHECK(unknown_feature.code == 3);

  const RunResult dump = run("dump-dyn-graph --sample 0" + common);
  REQUIRE_MESSAGE(dump.code == 0, dump.err);
  std::size_t graphs = 0;
  for (const auto& e : fs::directory_iterator(root / "out"))
    graphs += e.path().filename().string().rfind("dyn_graph_", 0) == 0;
  CHECK(graphs == 4 + 2);

  // no temporary files left behind by atomic writes
  for (const auto& e : fs::recursive_directory_iterator(root))
    CHECK_MESSAGE(e.path().filename().string().find(".tmp") == std::string::npos, e.path().string());

  const RunResult mismatch = run("evaluate" + common + " --set P=5");
  CHECK(mismatch.code == 3);
}

TEST_CASE("two processes with the same seed write identical metrics") {
  const fs::path root = scratch() / "repro";
  fs::remove_all(root);
  const std::string data = " --set data_dir=" + (root / "data").string() + " --set synth_weeks=2";
  const std::string model = " --set P=4 --set Q=2 --set d=4 --set epochs=2";
  REQUIRE(run("synth-gen" + data).code == 0);
  REQUIRE(run("train -q" + data + model + " --set out_dir=" + (root / "a").string()).code == 0);
  REQUIRE(run("train -q" + data + model + " --set out_dir=" + (root / "b").string()).code == 0);
  const std::string a = slurp(root / "a" / "metrics.json");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(root / "b" / "metrics.json"));
  CHECK(slurp(root / "a" / "training_log.csv") == slurp(root / "b" / "training_log.csv"));
}
