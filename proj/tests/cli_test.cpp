// Copyright 2026 The Safeflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// End-to-end checks of the safeflow executable: exit codes, determinism and
// the files each subcommand writes.

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "safeflow/bilip.hpp"
#include "safeflow/model_io.hpp"

namespace safeflow {
namespace {

namespace fs = std::filesystem;

fs::path Scratch(const std::string& name) {
  const fs::path dir = fs::path(SAFEFLOW_TEST_TMP) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int Cli(const std::string& args) {
  const std::string cmd = std::string(SAFEFLOW_BIN) + " --quiet " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string GenSmall(const fs::path& dir, int seed = 1) {
  return "gen-data --env unit-box --goal 0,0 --safe-count 60 --unsafe-count 60 --seed " +
         std::to_string(seed) + " --out " + dir.string();
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(Cli("--help"), 0);
  EXPECT_EQ(Cli("no-such-command"), 2);
  const fs::path dir = Scratch("usage");
  EXPECT_EQ(Cli("gen-data --env unit-box --out " + dir.string()), 2);  // no seed
  EXPECT_EQ(Cli("gen-data --env nowhere --seed 1 --out " + dir.string()), 2);
  EXPECT_EQ(Cli("gen-data --env corridor-v1 --goal 1.35,0.5 --seed 1 --out " + dir.string()), 2);
  EXPECT_EQ(Cli("plan --model " + (dir / "missing.json").string() + " --start 0,0 --goal 1,1"),
            2);
  EXPECT_EQ(Cli("train --data " + (dir / "missing.jsonl").string() + " --out " + dir.string()),
            2);
}

TEST(Cli, ConfigFileKeysAreChecked) {
  const fs::path dir = Scratch("config");
  std::ofstream(dir / "bad.json") << R"({"safe_count": 10, "colour": 3})";
  EXPECT_EQ(Cli("--config " + (dir / "bad.json").string() + " " + GenSmall(dir)), 2);
  std::ofstream(dir / "good.json") << R"({"safe-count": 10})";
  std::ofstream(dir / "good2.json") << R"({"safe_count": 10})";
  const bool hyphen = Cli("--config " + (dir / "good.json").string() + " " + GenSmall(dir)) == 0;
  const bool under = Cli("--config " + (dir / "good2.json").string() + " " + GenSmall(dir)) == 0;
  EXPECT_TRUE(hyphen || under);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_EQ(Cli("--config " + (dir / "broken.json").string() + " " + GenSmall(dir)), 2);
}

TEST(Cli, GenDataIsDeterministic) {
  // Outputs embed the invoking config, output path included, so reruns go
  // to the same directory.
  const fs::path a = Scratch("gen_a");
  ASSERT_EQ(Cli(GenSmall(a)), 0);
  const std::string first = Slurp(a / "datasets.jsonl");
  const std::string first_summary = Slurp(a / "summary.json");
  ASSERT_EQ(Cli(GenSmall(a)), 0);
  EXPECT_EQ(Slurp(a / "datasets.jsonl"), first);
  EXPECT_EQ(Slurp(a / "summary.json"), first_summary);
  ASSERT_EQ(Cli(GenSmall(a, 2)), 0);
  EXPECT_NE(Slurp(a / "datasets.jsonl"), first);
  ASSERT_EQ(Cli(GenSmall(a)), 0);
  const auto summary = nlohmann::json::parse(Slurp(a / "summary.json"));
  EXPECT_EQ(summary["M"].get<int>() + summary["dropped"].get<int>(), 60);
}

TEST(Cli, TrainWritesHistoryAndIsDeterministic) {
  const fs::path data = Scratch("train_data");
  ASSERT_EQ(Cli(GenSmall(data)), 0);
  const std::string base = "train --data " + (data / "datasets.jsonl").string() +
                           " --pairs 2 --width 8 --radial-terms 2 --seed 3 ";
  const fs::path one = Scratch("train_one");
  ASSERT_EQ(Cli(base + "--epochs 1 --out " + one.string()), 0);
  std::ifstream csv(one / "loss.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0].rfind("# ", 0), 0u);
  EXPECT_EQ(lines[1], "epoch,total,safe,unsafe,task");
  EXPECT_EQ(lines[2].rfind("0,", 0), 0u);

  const fs::path a = Scratch("train_a");
  const std::vector<std::string> files = {"model.json", "loss.csv", "train_report.json"};
  ASSERT_EQ(Cli(base + "--epochs 20 --out " + a.string()), 0);
  std::vector<std::string> first;
  for (const auto& f : files) first.push_back(Slurp(a / f));
  ASSERT_EQ(Cli(base + "--epochs 20 --out " + a.string()), 0);
  for (std::size_t i = 0; i < files.size(); ++i) EXPECT_EQ(Slurp(a / files[i]), first[i]) << files[i];
  const PlannerModel model = LoadModel((a / "model.json").string());
  EXPECT_GT(model.level_c, 0.0);
  EXPECT_EQ(model.map.pairs(), 2);
  EXPECT_EQ(Cli(base + "--epochs 0 --out " + a.string()), 2);
}

TEST(Cli, PlanMethods) {
  const fs::path dir = Scratch("plan");
  const fs::path out = dir / "traj.json";
  ASSERT_EQ(Cli("plan --model shear --start 0.5,0.2 --goal 0,0 --method analytic --out " +
                out.string()),
            0);
  const auto t = nlohmann::json::parse(Slurp(out));
  EXPECT_EQ(t["method"], "analytic");
  EXPECT_FALSE(t["states"].empty());
  for (const char* m : {"rk4", "finite-time", "gradient-baseline"}) {
    EXPECT_EQ(Cli("plan --model shear --start 0.5,0.2 --goal 0,0 --horizon 2 --method " +
                  std::string(m) + " --out " + out.string()),
              0)
        << m;
  }
  EXPECT_EQ(Cli("plan --model shear --start 0.5,0.2 --goal 0,0 --method euler --out " +
                out.string()),
            2);
  EXPECT_EQ(Cli("plan --model shear --start 0.5 --goal 0,0 --out " + out.string()), 2);
}

TEST(Cli, VerifyIdentityModelPasses) {
  const fs::path dir = Scratch("verify");
  BiLipConfig cfg;
  cfg.pairs = 2;
  cfg.width = 4;
  PlannerModel model{BiLipMap::Identity(cfg)};
  StateVec goal = StateVec::Zero(2);
  model.map.SetGoalCenter(goal);
  model.level_c = 0.5;
  SaveModel(model, (dir / "model.json").string());
  const std::string args = "verify --model " + (dir / "model.json").string() +
                           " --env unit-box --seed 4 --pairs 2000 --inversions 200"
                           " --barrier-samples 200 --exterior-samples 50 --goals 2"
                           " --rollouts 5 --grid 20 --no-shear-check --out ";
  ASSERT_EQ(Cli(args + (dir / "a.json").string()), 0);
  const std::string first = Slurp(dir / "a.json");
  ASSERT_EQ(Cli(args + (dir / "a.json").string()), 0);
  EXPECT_EQ(Slurp(dir / "a.json"), first);
  EXPECT_TRUE(nlohmann::json::parse(first)["pass"].get<bool>());

  auto j = nlohmann::json::parse(Slurp(dir / "model.json"));
  j["mu"] = j["mu"].get<double>() * 1.5;
  std::ofstream(dir / "corrupt.json") << j.dump();
  EXPECT_EQ(Cli("verify --model " + (dir / "corrupt.json").string() + " --env unit-box --seed 1"),
            2);
}

TEST(Cli, ExportPlots) {
  const fs::path data = Scratch("plots_data");
  ASSERT_EQ(Cli(GenSmall(data)), 0);
  const fs::path dir = Scratch("plots");
  ASSERT_EQ(Cli("plan --model shear --start 0.5,0.2 --goal 0,0 --out " +
                (dir / "t1.json").string()),
            0);
  ASSERT_EQ(Cli("plan --model shear --start -0.5,0.2 --goal 0,0 --out " +
                (dir / "t2.json").string()),
            0);
  ASSERT_EQ(Cli("export-plots --env unit-box --data " + (data / "datasets.jsonl").string() +
                " --traj " + (dir / "t1.json").string() + " --traj " +
                (dir / "t2.json").string() + " --res 40 --out " + dir.string()),
            0);
  const std::string svg = Slurp(dir / "plot.svg");
  std::size_t count = 0;
  for (auto p = svg.find("class=\"trajectory\""); p != std::string::npos;
       p = svg.find("class=\"trajectory\"", p + 1)) {
    ++count;
  }
  EXPECT_EQ(count, 2u);
  EXPECT_TRUE(fs::exists(dir / "plot.json"));
}

}  // namespace
}  // namespace safeflow
