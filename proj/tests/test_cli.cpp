#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "memse/cli.hpp"

using namespace memse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("memse_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  // Small conv net plus a batch of inputs and a config next to them.
  fs::path write_case(double sigma, json extra = json::object(), NetworkSpec spec = {}, InputBatch batch = {}) {
    if (spec.layers.empty()) spec = fixtures::paper_cnn({2, 4}, 3, ActivationKind::softplus, {3, 8, 8}, 4);
    if (batch.samples.empty()) batch = fixtures::random_inputs(spec.input_shape, 6, 5, 4);
    write_network(spec, dir / "network.json");
    write_inputs(batch, dir / "inputs.json");
    json cfg{{"network", "network.json"},
             {"inputs", "inputs.json"},
             {"output", "out"},
             {"seed", 7},
             {"trials", 40},
             {"crossbar", {{"g_max", 1.0}, {"sigma_v", sigma}, {"levels", 128}}},
             {"optimize", {{"population", 8}, {"generations", 6}}}};
    cfg.merge_patch(extra);
    detail::write_json(dir / "config.json", cfg);
    return dir / "config.json";
  }

  int run(std::vector<std::string> args) {
    std::vector<const char*> argv{"memse"};
    for (const auto& a : args) argv.push_back(a.c_str());
    out.str("");
    err.str("");
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  }

  json report(const std::string& sub = "out") { return json::parse(slurp(dir / sub / "report.json")); }

  std::ostringstream out, err;
};

}  // namespace

TEST_F(CliTest, PredictWritesReportCsvAndTiming) {
  const auto cfg = write_case(0.01);
  ASSERT_EQ(run({"predict", "--config", cfg.string(), "--coefficients"}), 0) << err.str();
  const auto r = report();
  EXPECT_EQ(r["command"], "predict");
  EXPECT_GT(r["summary"]["mse"].get<double>(), 0.0);
  EXPECT_GT(r["summary"]["power"].get<double>(), 0.0);
  EXPECT_EQ(r["per_input"].size(), 6u);
  for (const char* f : {"mse.csv", "coefficients.csv", "timing.json"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  EXPECT_FALSE(slurp(dir / "out" / "report.json").find("wall_seconds") != std::string::npos);
  EXPECT_TRUE(json::parse(slurp(dir / "out" / "timing.json")).contains("wall_seconds"));
}

TEST_F(CliTest, ByteIdenticalAcrossRunsAndThreads) {
  const auto cfg = write_case(0.02);
  ASSERT_EQ(run({"power", "--config", cfg.string()}), 0);
  const std::string b = cli::num(report()["summary"]["total"].get<double>());
  for (const char* cmd : {"predict", "simulate", "power", "optimize"}) {
    ASSERT_EQ(run({cmd, "--config", cfg.string(), "--budget", b, "--threads", "1", "--out", (dir / "a").string()}), 0)
        << cmd << err.str();
    ASSERT_EQ(run({cmd, "--config", cfg.string(), "--budget", b, "--threads", "1", "--out", (dir / "b").string()}), 0);
    ASSERT_EQ(run({cmd, "--config", cfg.string(), "--budget", b, "--threads", "4", "--out", (dir / "c").string()}), 0);
    for (const auto& e : fs::directory_iterator(dir / "a")) {
      const auto name = e.path().filename();
      if (name == "timing.json") continue;
      EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / name)) << cmd << ' ' << name;
      EXPECT_EQ(slurp(e.path()), slurp(dir / "c" / name)) << cmd << ' ' << name;
    }
    for (const char* d : {"a", "b", "c"}) fs::remove_all(dir / d);
  }
}

TEST_F(CliTest, EmbeddedConfigReproducesReport) {
  const auto cfg = write_case(0.01);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--seed", "11", "--trials", "30", "--clip"}), 0) << err.str();
  const std::string first = slurp(dir / "out" / "report.json");
  fs::create_directories(dir / "replay");
  detail::write_json(dir / "replay" / "config.json", report()["config"]);
  ASSERT_EQ(run({"simulate", "--config", (dir / "replay" / "config.json").string(), "--out", (dir / "again").string()}), 0)
      << err.str();
  EXPECT_EQ(slurp(dir / "again" / "report.json"), first);
  EXPECT_EQ(report("again")["summary"]["clip"], true);
  EXPECT_EQ(report("again")["config"]["seed"], 11);
}

TEST_F(CliTest, SeedChangesSimulation) {
  const auto cfg = write_case(0.05);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--seed", "1", "--out", (dir / "a").string()}), 0);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--seed", "2", "--out", (dir / "b").string()}), 0);
  EXPECT_NE(slurp(dir / "a" / "mse.csv"), slurp(dir / "b" / "mse.csv"));
}

TEST_F(CliTest, NoiselessUnquantizedHasZeroMse) {
  const auto cfg = write_case(0.0);
  ASSERT_EQ(run({"predict", "--config", cfg.string(), "--no-quant"}), 0) << err.str();
  EXPECT_EQ(report()["summary"]["mse"].get<double>(), 0.0);
  ASSERT_EQ(run({"simulate", "--config", cfg.string(), "--no-quant"}), 0) << err.str();
  EXPECT_EQ(report()["summary"]["mse"].get<double>(), 0.0);
  EXPECT_EQ(report()["config"]["crossbar"]["quantize"], false);
}

TEST_F(CliTest, MseMonotoneInSigma) {
  double prev = -1.0;
  for (double sigma : {0.0, 0.001, 0.01, 0.1}) {
    const auto cfg = write_case(sigma);
    ASSERT_EQ(run({"predict", "--config", cfg.string()}), 0) << err.str();
    const double m = report()["summary"]["mse"].get<double>();
    EXPECT_GT(m, prev) << sigma;
    prev = m;
  }
}

TEST_F(CliTest, ZeroInputZeroPower) {
  const auto spec = fixtures::dense_stack({6, 5, 3}, 2, ActivationKind::identity, false);
  InputBatch batch;
  batch.shape = spec.input_shape;
  batch.samples.assign(3, Vector::Zero(6));
  const auto cfg = write_case(0.01, json::object(), spec, batch);
  ASSERT_EQ(run({"power", "--config", cfg.string()}), 0) << err.str();
  EXPECT_EQ(report()["summary"]["total"].get<double>(), 0.0);
}

TEST_F(CliTest, SimulateReportsAccuracyWithLabels) {
  auto t = fixtures::toy_classifier(8, 4, 30, 0.5, 2);
  const auto cfg = write_case(0.0, json{{"crossbar", {{"quantize", false}}}}, t.spec, t.data);
  ASSERT_EQ(run({"simulate", "--config", cfg.string()}), 0) << err.str();
  const auto s = report()["summary"];
  EXPECT_EQ(s["accuracy"], s["clean_accuracy"]);
}

TEST_F(CliTest, OptimizeRespectsBudget) {
  const auto cfg = write_case(0.01);
  ASSERT_EQ(run({"power", "--config", cfg.string()}), 0);
  const double budget = report()["summary"]["total"].get<double>();
  ASSERT_EQ(run({"optimize", "--config", cfg.string(), "--budget", cli::num(budget), "--granularity", "per-layer"}), 0)
      << err.str();
  const auto r = report()["result"];
  EXPECT_LE(r["power"].get<double>(), budget);
  EXPECT_EQ(r["g_max"].size(), 3u);
  EXPECT_LE(r["max_mse"].get<double>(), report()["warm_start"]["max_mse"].get<double>());
  EXPECT_TRUE(fs::exists(dir / "out" / "history.csv"));
}

TEST_F(CliTest, ExitCodes) {
  const auto cfg = write_case(0.01);
  EXPECT_EQ(run({"predict"}), 2);
  EXPECT_EQ(run({"bogus", "--config", cfg.string()}), 2);
  EXPECT_EQ(run({"predict", "--config", (dir / "missing.json").string()}), 2);
  EXPECT_EQ(run({"predict", "--config", cfg.string(), "--agg", "median"}), 2);
  EXPECT_EQ(run({"optimize", "--config", cfg.string()}), 2);  // no budget
  EXPECT_EQ(run({"optimize", "--config", cfg.string(), "--budget", "1e-30"}), 3);
  {
    std::ofstream(dir / "broken.json") << "{ not json";
    EXPECT_EQ(run({"predict", "--config", (dir / "broken.json").string()}), 2);
  }
  // activations overflow double range
  auto spec = fixtures::dense_stack({4, 4, 4, 4, 4, 4}, 1);
  for (auto& l : spec.layers)
    if (auto* lin = std::get_if<LinearLayer>(&l)) lin->weights *= 1e30;
  InputBatch batch;
  batch.shape = spec.input_shape;
  batch.samples.assign(2, Vector::Constant(4, 1e30));
  const auto big = write_case(0.01, json::object(), spec, batch);
  EXPECT_EQ(run({"predict", "--config", big.string()}), 4) << err.str();
}

TEST_F(CliTest, LowerSummarizesStages) {
  const auto cfg = write_case(0.01);
  ASSERT_EQ(run({"lower", "--config", cfg.string()}), 0) << err.str();
  const auto s = report()["summary"];
  EXPECT_EQ(s["linear_stages"], 3);
  EXPECT_EQ(s["output_size"], 4);
}

TEST_F(CliTest, ThreadsEnvironmentFallback) {
  const auto cfg = write_case(0.01);
  ::setenv("MEMSE_THREADS", "2", 1);
  EXPECT_EQ(run({"predict", "--config", cfg.string()}), 0);
  ::setenv("MEMSE_THREADS", "zero", 1);  // unparsable values fall back to the core count
  EXPECT_EQ(run({"predict", "--config", cfg.string()}), 0);
  ::unsetenv("MEMSE_THREADS");
}
