#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "elidecide/cli.hpp"
#include "test_util.hpp"

using namespace elidecide;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Small synthetic benchmark shared by the tests below.
fs::path small_data(const std::string& name) {
  const auto dir = elidecide::testing::scratch_dir(name);
  const auto r = run({"gen-synth", "--scenario", "aniso-k4", "--seed", "0", "--out", (dir / "data").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  return dir;
}

}  // namespace

TEST(Cli, GenSynthWritesFilesDeterministically) {
  const auto dir = small_data("cli_gen");
  for (const char* f : {"train.embd", "val.embd", "test.embd", "spec.json", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "data" / f)) << f;
  const auto again = run({"gen-synth", "--scenario", "aniso-k4", "--seed", "0", "--out", (dir / "again").string()});
  ASSERT_EQ(again.code, 0);
  for (const char* f : {"train.embd", "val.embd", "test.embd", "spec.json"})
    EXPECT_EQ(slurp(dir / "data" / f), slurp(dir / "again" / f)) << f;
  EXPECT_EQ(load_dataset(dir / "data" / "train.embd").dim, 8u);
}

TEST(Cli, GenSynthFromSpecFile) {
  const auto dir = small_data("cli_spec");
  const auto r = run({"gen-synth", "--spec", (dir / "data" / "spec.json").string(), "--seed", "0", "--out",
                      (dir / "respec").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir / "data" / "test.embd"), slurp(dir / "respec" / "test.embd"));
}

TEST(Cli, MissingOutIsUsageError) {
  const auto r = run({"gen-synth", "--scenario", "aniso-k4"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--out"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownScenarioAndBadFlagsAreUsageErrors) {
  const auto dir = elidecide::testing::scratch_dir("cli_bad");
  EXPECT_EQ(run({"gen-synth", "--scenario", "nope", "--out", dir.string()}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train", "--data", dir.string(), "--out", "m.json", "--epochs", "abc"}).code, 2);
  EXPECT_EQ(run({"train", "--data", dir.string(), "--out", "m.json", "--neg-loss", "softmax"}).code, 2);
  EXPECT_EQ(run({"eval", "--model", "m.json", "--data", dir.string(), "--format", "xml"}).code, 2);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, TrainEvalPipeline) {
  const auto dir = small_data("cli_train");
  const auto model = (dir / "model.json").string();
  auto r = run({"train", "--data", (dir / "data").string(), "--out", model, "--seed", "0", "--epochs", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Model m = load_model(model);
  EXPECT_EQ(m.boundaries.size(), 4u);
  EXPECT_FALSE(m.projection.has_value());
  const std::string log = slurp(dir / "model.log.jsonl");
  std::istringstream lines(log);
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "expansion_total", "contraction_total", "total", "val_total"})
      EXPECT_TRUE(j.contains(key));
    ++count;
  }
  EXPECT_EQ(count, 5);
  const auto manifest = nlohmann::json::parse(slurp(dir / "model.manifest.json"));
  EXPECT_EQ(manifest["command"], "train");
  EXPECT_EQ(manifest["config"]["neg-loss"], "elidecide");
  EXPECT_EQ(manifest["config"]["epochs"], 5);

  r = run({"eval", "--model", model, "--data", (dir / "data").string(), "--seed", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto report = nlohmann::json::parse(r.out);
  EXPECT_GT(report["macro_f1"].get<double>(), 0.5);
  EXPECT_EQ(report["confusion"].size(), 5u);

  r = run({"eval", "--model", model, "--data", (dir / "data").string(), "--format", "csv", "--kcr", "1"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 1);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), ','), 3);
  EXPECT_EQ(r.out.rfind("1,0,", 0), 0u);

  const auto out = (dir / "report.json").string();
  r = run({"eval", "--model", model, "--data", (dir / "data").string(), "--out", out});
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  EXPECT_TRUE(nlohmann::json::parse(slurp(out)).contains("macro_f1"));
}

TEST(Cli, ZeroEpochsGivesIdentityModel) {
  const auto dir = small_data("cli_zero");
  const auto model = (dir / "m.json").string();
  ASSERT_EQ(run({"train", "--data", (dir / "data").string(), "--out", model, "--epochs", "0"}).code, 0);
  for (const auto& e : load_model(model).boundaries.ellipsoids) EXPECT_EQ(e.matrix, Matrix::Identity(8, 8));
}

TEST(Cli, NegLossRecordedInManifest) {
  const auto dir = small_data("cli_neg");
  const auto model = (dir / "m.json").string();
  ASSERT_EQ(run({"train", "--data", (dir / "data").string(), "--out", model, "--epochs", "2", "--neg-loss", "clab"})
                .code,
            0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "m.manifest.json"))["config"]["neg-loss"], "clab");
}

TEST(Cli, ConfigFilePrecedence) {
  const auto dir = small_data("cli_cfg");
  std::ofstream(dir / "cfg.json") << R"({"epochs": 3, "beta": 0.25, "neg-loss": "adb"})";
  const auto model = (dir / "m.json").string();
  ASSERT_EQ(run({"train", "--config", (dir / "cfg.json").string(), "--data", (dir / "data").string(), "--out", model,
                 "--epochs", "2"})
                .code,
            0);
  const auto manifest = nlohmann::json::parse(slurp(dir / "m.manifest.json"));
  EXPECT_EQ(manifest["config"]["epochs"], 2);        // flag beats config
  EXPECT_EQ(manifest["config"]["beta"], 0.25);       // config beats default
  EXPECT_EQ(manifest["config"]["neg-loss"], "adb");
  EXPECT_EQ(manifest["config"]["mix-p"], 3);         // default
  std::ofstream(dir / "bad.json") << R"({"epochz": 3})";
  EXPECT_EQ(run({"train", "--config", (dir / "bad.json").string(), "--data", (dir / "data").string(), "--out", model})
                .code,
            2);
}

TEST(Cli, KcrTrainingAndEval) {
  const auto dir = small_data("cli_kcr");
  const auto model = (dir / "m.json").string();
  // two known classes cannot host a three-way mixture
  const auto r3 = run({"train", "--data", (dir / "data").string(), "--out", model, "--kcr", "0.5", "--epochs", "2"});
  EXPECT_EQ(r3.code, 1);
  EXPECT_NE(r3.err.find("InsufficientClasses"), std::string::npos);
  ASSERT_EQ(run({"train", "--data", (dir / "data").string(), "--out", model, "--kcr", "0.5", "--epochs", "2",
                 "--mix-p", "2"})
                .code,
            0);
  const Model m = load_model(model);
  ASSERT_EQ(m.boundaries.size(), 2u);
  const auto r = run({"eval", "--model", model, "--data", (dir / "data").string(), "--kcr", "0.5"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["confusion"].size(), 3u);
}

TEST(Cli, DimensionMismatchNamesBothDims) {
  const auto dir = elidecide::testing::scratch_dir("cli_dim");
  Model m;
  m.boundaries.ellipsoids.push_back(Ellipsoid::ball(0, Vector::Zero(8), 1.0));
  save_model(m, dir / "m.json");
  LabeledDataset test;
  test.add(Vector::Ones(4), 0);
  save_dataset(test, dir / "test.embd");
  const auto r = run({"eval", "--model", (dir / "m.json").string(), "--test", (dir / "test.embd").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("8"), std::string::npos);
  EXPECT_NE(r.err.find("4"), std::string::npos);
}

TEST(Cli, PerfectSeparationScoresOne) {
  const auto dir = elidecide::testing::scratch_dir("cli_perfect");
  Model m;
  m.boundaries.ellipsoids.push_back(Ellipsoid::ball(0, elidecide::testing::vec({0, 0}), 1.0));
  m.boundaries.ellipsoids.push_back(Ellipsoid::ball(1, elidecide::testing::vec({10, 0}), 1.0));
  save_model(m, dir / "m.json");
  LabeledDataset test;
  test.add(elidecide::testing::vec({0.1, 0}), 0);
  test.add(elidecide::testing::vec({10, 0.2}), 1);
  test.add(elidecide::testing::vec({5, 5}), -1);
  save_dataset(test, dir / "test.embd");
  const auto r = run({"eval", "--model", (dir / "m.json").string(), "--test", (dir / "test.embd").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["macro_f1"].get<double>(), 1.0);
}

TEST(Cli, EmptyClassNamesTheClass) {
  const auto dir = elidecide::testing::scratch_dir("cli_empty");
  LabeledDataset train;
  train.add(elidecide::testing::vec({0, 0}), 0);
  train.add(elidecide::testing::vec({1, 0}), 0);
  train.add(elidecide::testing::vec({5, 5}), 2);
  train.add(elidecide::testing::vec({6, 5}), 2);
  save_dataset(train, dir / "train.embd");
  save_dataset(train, dir / "val.embd");
  const auto r = run({"train", "--data", dir.string(), "--out", (dir / "m.json").string(), "--epochs", "0"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("class 1"), std::string::npos);
}

TEST(Cli, MissingDataIsRuntimeError) {
  const auto dir = elidecide::testing::scratch_dir("cli_missing");
  const auto r = run({"train", "--data", (dir / "nothing").string(), "--out", (dir / "m.json").string()});
  EXPECT_EQ(r.code, 1);
}

TEST(Cli, AblateBallTable) {
  const auto dir = small_data("cli_ball");
  const auto r = run({"ablate-ball", "--data", (dir / "data").string(), "--epochs", "3", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[0], "method,cf,macro_f1,accuracy");
  for (int i = 1; i <= 6; ++i) EXPECT_EQ(rows[i].rfind("ball,", 0), 0u);
  EXPECT_EQ(rows[7].rfind("ellipsoid,,", 0), 0u);
  const auto j = run({"ablate-ball", "--data", (dir / "data").string(), "--epochs", "3"});
  ASSERT_EQ(j.code, 0);
  EXPECT_EQ(nlohmann::json::parse(j.out)["rows"].size(), 7u);
}

TEST(Cli, AblateBallWithSavedModel) {
  const auto dir = small_data("cli_ball_model");
  const auto model = (dir / "m.json").string();
  ASSERT_EQ(run({"train", "--data", (dir / "data").string(), "--out", model, "--epochs", "2"}).code, 0);
  const auto r = run({"ablate-ball", "--data", (dir / "data").string(), "--model", model});
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, AblateLossTable) {
  const auto dir = small_data("cli_loss");
  const auto r = run({"ablate-loss", "--data", (dir / "data").string(), "--epochs", "2", "--format", "csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* name : {"adb,", "clab,", "adbgen,", "elidecide,"}) EXPECT_NE(r.out.find(name), std::string::npos);
}

TEST(Cli, RawDataGoesThroughProjection) {
  const auto dir = elidecide::testing::scratch_dir("cli_raw");
  Rng rng(1);
  DataSplits d;
  for (int k = 0; k < 3; ++k) {
    Vector mean = Vector::Zero(6);
    mean[k] = 5.0;
    for (int i = 0; i < 40; ++i) {
      d.train.add(mean + elidecide::testing::random_vector(6, rng, 0.5), k);
      if (i < 10) d.val.add(mean + elidecide::testing::random_vector(6, rng, 0.5), k);
      if (i < 10) d.test.add(mean + elidecide::testing::random_vector(6, rng, 0.5), k);
    }
  }
  for (auto* s : {&d.train, &d.val, &d.test}) {
    s->final_form = false;
    save_dataset(*s, dir / (s == &d.train ? "train.embd" : s == &d.val ? "val.embd" : "test.embd"));
  }
  const auto model = (dir / "m.json").string();
  auto r = run({"train", "--data", dir.string(), "--out", model, "--scl-epochs", "2", "--proj-dim", "4",
                "--epochs", "3"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Model m = load_model(model);
  ASSERT_TRUE(m.projection.has_value());
  EXPECT_EQ(m.projection->input_dim(), 6u);
  EXPECT_EQ(m.boundaries.dim(), 4u);
  r = run({"eval", "--model", model, "--data", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_GT(nlohmann::json::parse(r.out)["accuracy"].get<double>(), 0.5);
}

TEST(Cli, PipelineIsByteDeterministic) {
  std::string models[2], reports[2];
  for (int i = 0; i < 2; ++i) {
    const auto dir = elidecide::testing::scratch_dir("cli_det" + std::to_string(i));
    ASSERT_EQ(run({"gen-synth", "--scenario", "aniso-k4", "--seed", "0", "--out", (dir / "d").string()}).code, 0);
    ASSERT_EQ(run({"train", "--data", (dir / "d").string(), "--out", (dir / "m.json").string(), "--seed", "0",
                   "--epochs", "5"})
                  .code,
              0);
    ASSERT_EQ(run({"eval", "--model", (dir / "m.json").string(), "--data", (dir / "d").string(), "--out",
                   (dir / "r.json").string()})
                  .code,
              0);
    models[i] = slurp(dir / "m.json");
    reports[i] = slurp(dir / "r.json");
  }
  EXPECT_EQ(models[0], models[1]);
  EXPECT_EQ(reports[0], reports[1]);
}
