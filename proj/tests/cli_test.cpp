#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "floydnet/cli/cli.hpp"

namespace fs = std::filesystem;
using floydnet::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "floydnet");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("floydnet_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  const auto help = call({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("kernel-bench"), std::string::npos);
  const auto none = call({});
  EXPECT_EQ(none.code, 2);
  EXPECT_NE(none.err.find("Usage"), std::string::npos);
  EXPECT_EQ(call({"frobnicate"}).code, 2);
  EXPECT_EQ(call({"rotation-check", "--bogus"}).code, 2);
  EXPECT_EQ(call({"expressivity", "--k", "5"}).code, 2);
  EXPECT_EQ(call({"oracle"}).code, 2);
  EXPECT_EQ(call({"kernel-bench", "--impl", "fast"}).code, 2);
}

TEST(Cli, RotationCheckWritesHeader) {
  const auto dir = scratch("rot");
  const auto r = call({"--seed", "4", "--out", dir.string(), "rotation-check", "--pairs", "50"});
  EXPECT_EQ(r.code, 0) << r.err;
  std::ifstream in(dir / "rotation_check.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j["seed"], 4);
  EXPECT_EQ(j["passed"], true);
  // an impossible tolerance is a test failure, not a usage error
  EXPECT_EQ(call({"--out", dir.string(), "rotation-check", "--pairs", "5", "--tol", "0"}).code, 1);
}

TEST(Cli, KernelBenchMonotone) {
  const auto dir = scratch("bench");
  const auto r = call({"--out", dir.string(), "kernel-bench", "--n", "8,16,32", "--dr", "16", "--heads", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "impl,N,d_r,heads,wall_ms,peak_bytes,checksum");
  double last_peak = -1;
  int rows = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    ASSERT_EQ(f.size(), 7u);
    EXPECT_GT(std::stod(f[5]), last_peak);
    last_peak = std::stod(f[5]);
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  EXPECT_EQ(first_line(dir / "kernel_bench.csv").rfind("# {", 0), 0u);
}

TEST(Cli, ExpressivityMatchesGolden) {
  const auto dir = scratch("expr");
  const auto golden = std::string(FLOYDNET_GOLDEN_DIR) + "/pair_suite.jsonl";
  const auto r = call({"--out", dir.string(), "expressivity", "--k", "2", "--seeds", "2", "--golden", golden});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  const auto head = nlohmann::json::parse(first_line(dir / "expressivity_k2.jsonl"));
  EXPECT_TRUE(head.contains("run"));
}

TEST(Cli, OracleOnGraphFile) {
  const auto dir = scratch("oracle");
  {
    std::ofstream g(dir / "g.txt");
    g << "4\n0 1 1\n1 2 2\n2 0 1\n2 3 5\n";
  }
  auto r = call({"--out", dir.string(), "oracle", "--graph", (dir / "g.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["distances"][0][3], 6.0);
  r = call({"--out", dir.string(), "oracle", "--graph", (dir / "g.txt").string(), "--kind", "cycles"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["graph_count"], 1.0);
  EXPECT_EQ(call({"--out", dir.string(), "oracle", "--graph", (dir / "missing.txt").string()}).code, 1);
}

TEST(Cli, TrainThenEval) {
  const auto dir = scratch("train");
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "# tiny run\nsteps_per_epoch=2\naccumulation=1\neval_graphs=2\ntrain_max_n=6\nffn_hidden=8\n";
  }
  auto r = call({"--seed", "2", "--out", dir.string(), "--config", (dir / "run.cfg").string(), "train", "--layers", "1",
                 "--dr", "8", "--heads", "2", "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto head = nlohmann::json::parse(first_line(dir / "train_log.jsonl"));
  EXPECT_EQ(head["run"]["seed"], 2);
  ASSERT_TRUE(fs::exists(dir / "model.ckpt"));
  r = call({"--out", dir.string(), "eval", "--checkpoint", (dir / "model.ckpt").string(), "--model-config",
            (dir / "model.cfg").string(), "--graphs", "2", "--n", "7"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("mae"), std::string::npos);
  EXPECT_EQ(call({"--out", dir.string(), "--config", (dir / "run.cfg").string(), "train", "--task", "sorting"}).code, 2);
}
