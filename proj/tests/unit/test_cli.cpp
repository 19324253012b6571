// Copyright 2026 The specdapt Authors. SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "specdapt/config.hpp"
#include "specdapt/io.hpp"
#include "specdapt/report.hpp"

using namespace specdapt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("specdapt_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Runs the CLI; stdout+stderr land in out_.
  int run(const std::string& args) {
    const fs::path log = dir_ / "cli.log";
    const std::string cmd =
        std::string(SPECDAPT_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    out_ = io::read_text(log);
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  }

  fs::path write_config(json extra = json::object()) {
    json j = {{"master_seed", 7},
              {"scenario",
               {{"isotopes", {"Cs137", "Co60", "Am241"}},
                {"grid", {{"n_bins", 64}}},
                {"source_sizes", {{"train", 48}, {"val", 16}, {"test", 16}}},
                {"target_sizes", {{"train", 32}, {"val", 16}, {"test", 16}}}}},
              {"architectures", {"MLP"}},
              {"size_ladder", {8}},
              {"n_trials", 2},
              {"search_budget", 2},
              {"output_dir", (dir_ / "out").string()},
              {"train",
               {{"source", {{"max_epochs", 2}, {"batch_size", 16}}},
                {"target", {{"max_epochs", 2}, {"batch_size", 8}}},
                {"finetune", {{"max_epochs", 2}, {"batch_size", 8}}}}}};
    j.merge_patch(extra);
    const fs::path p = dir_ / "config.json";
    io::write_text(p, j.dump(2));
    return p;
  }

  fs::path dir_;
  std::string out_;
};

void corrupt_first_byte(const fs::path& p) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.put('X');
}

json record(const std::string& proto, std::size_t trial, double acc, const std::string& hash = "h1") {
  return {{"protocol", proto},       {"arch", "MLP"},        {"size", 64},
          {"trial", trial},          {"seed", 100 + trial},  {"metrics", {{"acc", acc}, {"ece", 0.1}}},
          {"subset_fingerprint", proto == "source_only" ? "" : "fp" + std::to_string(trial)},
          {"n_test", 128},           {"config_hash", hash},  {"master_seed", 1}};
}

std::string jsonl(const std::vector<json>& lines) {
  std::string s;
  for (const auto& l : lines) s += l.dump() + "\n";
  return s;
}

}  // namespace

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("synth --config"), 2);
  EXPECT_EQ(run("synth --config " + (dir_ / "missing.json").string() + " --out x"), 2);
  EXPECT_EQ(run("--help"), 0);
  io::write_text(dir_ / "bad.json", R"({"scenario": {"isotopes": ["Xx999"]}})");
  EXPECT_EQ(run("synth --config " + (dir_ / "bad.json").string() + " --out " + (dir_ / "d").string()), 2);
}

TEST_F(CliTest, SynthIsByteReproducible) {
  const auto cfg = write_config();
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir_ / "a").string()), 0) << out_;
  ASSERT_EQ(run("synth --config " + cfg.string() + " --out " + (dir_ / "b").string()), 0) << out_;
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir_ / "a")) {
    ++files;
    EXPECT_EQ(io::read_text(e.path()), io::read_text(dir_ / "b" / e.path().filename()))
        << e.path().filename();
  }
  EXPECT_EQ(files, 12u);  // six datasets plus sidecars
  auto ds = io::read_dataset(dir_ / "a" / "target_test.spda");
  EXPECT_EQ(ds.data.size(), 16u);
  EXPECT_EQ(ds.data.classes, (std::vector<std::string>{"Cs137", "Co60", "Am241"}));
}

TEST_F(CliTest, TrainFinetuneExplainAndCorruption) {
  const auto cfg = write_config();
  const std::string c = " --config " + cfg.string();
  const auto src = dir_ / "src.spdw";
  ASSERT_EQ(run("train" + c + " --arch MLP --protocol source_only --out " + src.string()), 0) << out_;
  ASSERT_EQ(run("train" + c + " --arch MLP --protocol source_only --out " + (dir_ / "src2.spdw").string()), 0);
  EXPECT_EQ(io::read_text(src), io::read_text(dir_ / "src2.spdw"));

  // Reading and rewriting the checkpoint reproduces it byte for byte.
  io::write_checkpoint(dir_ / "copy.spdw", io::read_checkpoint(src));
  EXPECT_EQ(io::read_text(src), io::read_text(dir_ / "copy.spdw"));

  const auto da = dir_ / "da.spdw";
  ASSERT_EQ(run("finetune" + c + " --arch MLP --size 8 --pretrained " + src.string() + " --out " +
                da.string()),
            0)
      << out_;
  EXPECT_TRUE(fs::exists(da.string() + ".json"));
  EXPECT_TRUE(fs::exists(da.string() + ".history.jsonl"));

  const auto prefix = dir_ / "ex";
  ASSERT_EQ(run("explain" + c + " --model " + src.string() + " --model-b " + da.string() +
                " --spectrum-index 3 --groups 8 --out " + prefix.string()),
            0)
      << out_;
  auto ej = io::read_json(prefix.string() + ".json");
  EXPECT_EQ(ej["models"].size(), 2u);
  EXPECT_NE(io::read_text(prefix.string() + ".svg").find("<svg"), std::string::npos);
  EXPECT_EQ(run("explain" + c + " --model " + src.string() + " --spectrum-index 99"), 2);
  EXPECT_EQ(run("explain" + c + " --model " + src.string() + " --spectrum-index 0 --groups 7"), 2);

  corrupt_first_byte(src);
  EXPECT_EQ(run("finetune" + c + " --arch MLP --pretrained " + src.string() + " --out " +
                (dir_ / "x.spdw").string()),
            3)
      << out_;

  // A checkpoint from another config is refused.
  const auto other = write_config({{"master_seed", 8}});
  EXPECT_EQ(run("finetune --config " + other.string() + " --arch MLP --size 8 --pretrained " +
                da.string() + " --out " + (dir_ / "y.spdw").string()),
            2);
}

TEST_F(CliTest, SearchWritesBestConfig) {
  const auto cfg = write_config();
  const auto out = dir_ / "search.json";
  ASSERT_EQ(run("search --config " + cfg.string() + " --arch MLP --protocol target_only --size 8 --out " +
                out.string()),
            0)
      << out_;
  auto j = io::read_json(out);
  EXPECT_EQ(j["trials"].size(), 2u);
  EXPECT_TRUE(j.contains("best"));
  EXPECT_EQ(run("train --config " + cfg.string() + " --arch MLP --protocol target_only --size 8 " +
                "--train-config " + out.string() + " --out " + (dir_ / "t.spdw").string()),
            0)
      << out_;
  EXPECT_EQ(run("search --config " + cfg.string() + " --arch CNN --protocol target_only"), 2);
}

TEST_F(CliTest, TrialsThenReport) {
  const auto cfg = write_config();
  const auto res = dir_ / "results.jsonl";
  ASSERT_EQ(run("trials --config " + cfg.string() + " --results " + res.string()), 0) << out_;
  auto recs = report::parse_records(io::read_text(res));
  EXPECT_EQ(recs.size(), 6u);  // 2 trials x 3 protocols
  ASSERT_EQ(run("report --results " + res.string() + " --out " + (dir_ / "rep").string()), 0) << out_;
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "summary_acc.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "pvalues_acc.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "rep" / "curves_acc.svg"));
  EXPECT_EQ(run("report --results " + res.string() + " --metric ece"), 0) << out_;
}

TEST_F(CliTest, ReportPrintsSmallestExactPValue) {
  std::vector<json> lines;
  for (std::size_t t = 0; t < 10; ++t) {
    lines.push_back(record("source_only", t, 0.5 + 0.001 * t));
    lines.push_back(record("target_only", t, 0.6 + 0.002 * t));
    lines.push_back(record("domain_adapted", t, 0.9 + 0.001 * t));
  }
  io::write_text(dir_ / "r.jsonl", jsonl(lines));
  ASSERT_EQ(run("report --results " + (dir_ / "r.jsonl").string()), 0) << out_;
  EXPECT_NE(out_.find("0.001"), std::string::npos) << out_;
  const auto built = report::build(report::parse_records(jsonl(lines)));
  EXPECT_NE(built.pvalues_csv.find("0.0009765625"), std::string::npos) << built.pvalues_csv;
}

TEST_F(CliTest, ReportFailureCodes) {
  io::write_text(dir_ / "one.jsonl", jsonl({record("target_only", 0, 0.5)}));
  EXPECT_EQ(run("report --results " + (dir_ / "one.jsonl").string()), 4) << out_;

  io::write_text(dir_ / "mixed.jsonl",
                 jsonl({record("target_only", 0, 0.5), record("target_only", 1, 0.6, "h2")}));
  EXPECT_EQ(run("report --results " + (dir_ / "mixed.jsonl").string()), 2) << out_;

  io::write_text(dir_ / "junk.jsonl", "{not json\n");
  EXPECT_EQ(run("report --results " + (dir_ / "junk.jsonl").string()), 3) << out_;
}

TEST(Config, HashTracksContent) {
  json j = {{"scenario", {{"isotopes", {"Cs137", "Co60"}}}}};
  auto a = config::parse_config(j);
  auto b = config::parse_config(j);
  EXPECT_EQ(a.config_hash, b.config_hash);
  j["master_seed"] = 3;
  auto c = config::parse_config(j);
  EXPECT_NE(a.config_hash, c.config_hash);
  EXPECT_NE(a.scenario_hash, c.scenario_hash);
  j["size_ladder"] = {3};
  EXPECT_THROW(config::parse_config(j), ValidationError);
  j["size_ladder"] = {64, 32};
  EXPECT_THROW(config::parse_config(j), ValidationError);
}
