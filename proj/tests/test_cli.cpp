#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "simpletag/cli.hpp"
#include "support.hpp"

namespace simpletag {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "simpletag");
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("simpletag_cli_" + std::string(
        ::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    small_ = write("small.cfg", "model_dim = 16\nff_dim = 32\nrelpos_dim = 4\nconv_blocks = 1\nepochs = 2\n");
  }
  std::string write(const std::string& name, const std::string& content) {
    std::ofstream(dir_ / name, std::ios::binary) << content;
    return (dir_ / name).string();
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string small_;
  const std::string fixture_ = testing::data_path("fixture16.txt");
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train", "--bogus"}).code, 1);
  EXPECT_EQ(run({"train", "--train", fixture_}).code, 1);  // no --out
  EXPECT_EQ(run({"--help"}).code, 0);
  EXPECT_EQ(run({"eval", "--help"}).code, 0);
}

TEST_F(Cli, InvalidConfigKeyIsUsageError) {
  const auto cfg = write("bad.cfg", "epochs = 1\nlayerz = 2\n");
  const auto r = run({"train", "--config", cfg, "--train", fixture_, "--out", path("o")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("layerz"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("bad.cfg:2"), std::string::npos) << r.err;
}

TEST_F(Cli, InvalidSwitchCombinationIsUsageError) {
  const auto r = run({"train", "--config", small_, "--train", fixture_, "--out", path("o"),
                      "--no-token-branch-2d", "--no-attn-branch-2d"});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(run({"train", "--config", small_, "--train", fixture_, "--out", path("o"),
                 "--mask-layers", "9"}).code, 1);
}

TEST_F(Cli, DataErrors) {
  EXPECT_EQ(run({"train", "--config", small_, "--train", path("missing.txt"), "--out", path("o")}).code, 2);
  const auto bad = write("bad.txt", "a b####[([0], [7], 'POS')]\n");
  const auto r = run({"train", "--config", small_, "--train", bad, "--out", path("o")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 1"), std::string::npos) << r.err;
  const auto empty = write("empty.txt", "");
  EXPECT_EQ(run({"eval", "--test", empty, "--pred", fixture_}).code, 2);
  EXPECT_EQ(run({"eval", "--test", fixture_, "--checkpoint", bad}).code, 2);
}

TEST_F(Cli, NumericFailureExitsThree) {
  const auto cfg = write("huge.cfg", "model_dim = 16\nff_dim = 32\nepochs = 3\nlearning_rate = 1e300\n");
  const auto r = run({"train", "--config", cfg, "--train", fixture_, "--out", path("o")});
  EXPECT_EQ(r.code, 3) << r.err;
}

TEST_F(Cli, EvalOfGoldAgainstItselfIsPerfect) {
  const auto r = run({"eval", "--test", fixture_, "--pred", fixture_, "--out", path("report.txt")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("F1=1 "), std::string::npos) << r.out;
  EXPECT_EQ(slurp(path("report.txt")), r.out);
}

TEST_F(Cli, TrainPredictEvalAndRerun) {
  const auto out = path("run");
  auto r = run({"train", "--config", small_, "--train", fixture_, "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epoch 2 "), std::string::npos) << r.out;
  for (const char* f : {"model.ckpt", "vocab.txt", "train.log.jsonl", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
  }

  const auto pred = path("pred.txt");
  r = run({"predict", "--checkpoint", out + "/model.ckpt", "--test", fixture_, "--out", pred});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto parsed = read_v2_file(pred);
  const auto gold = read_v2_file(fixture_);
  ASSERT_EQ(parsed.size(), gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) EXPECT_EQ(parsed[i].tokens, gold[i].tokens);
  EXPECT_TRUE(fs::exists(pred + ".manifest.txt"));

  r = run({"eval", "--test", fixture_, "--checkpoint", out + "/model.ckpt"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto via_pred = run({"eval", "--test", fixture_, "--pred", pred});
  EXPECT_EQ(r.out, via_pred.out);

  const auto again = path("rerun");
  r = run({"train", "--manifest", out + "/manifest.txt", "--out", again});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(again + "/model.ckpt"), slurp(out + "/model.ckpt"));
  EXPECT_EQ(slurp(again + "/train.log.jsonl"), slurp(out + "/train.log.jsonl"));
  const auto pred2 = path("pred2.txt");
  ASSERT_EQ(run({"predict", "--checkpoint", again + "/model.ckpt", "--test", fixture_, "--out", pred2}).code, 0);
  EXPECT_EQ(slurp(pred2), slurp(pred));
}

TEST_F(Cli, FlagsOverrideEnvironmentOverrideFile) {
  ::setenv("SIMPLETAG_EPOCHS", "1", 1);
  auto r = run({"train", "--config", small_, "--train", fixture_, "--out", path("env")});
  ::unsetenv("SIMPLETAG_EPOCHS");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.find("epoch 2 "), std::string::npos) << r.out;
  const auto m = RunManifest::load(path("env") + "/manifest.txt");
  EXPECT_EQ(m.config.train.epochs, 1u);

  ::setenv("SIMPLETAG_SEED", "5", 1);
  r = run({"train", "--config", small_, "--train", fixture_, "--out", path("flag"), "--seed", "6", "--no-conv"});
  ::unsetenv("SIMPLETAG_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m2 = RunManifest::load(path("flag") + "/manifest.txt");
  EXPECT_EQ(m2.config.train.seed, 6u);
  EXPECT_FALSE(m2.config.train.ablation.conv);
}

TEST_F(Cli, AblateWritesTable) {
  const auto r = run({"ablate", "--config", small_, "--train", fixture_, "--no-rotary", "--out", path("abl")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 3u) << r.out;
  EXPECT_EQ(rows[0].rfind("variant", 0), 0u);
  EXPECT_EQ(rows[1].rfind("full", 0), 0u);
  EXPECT_EQ(rows[2].rfind("--no-rotary", 0), 0u);
  EXPECT_EQ(slurp(path("abl") + "/ablation.txt"), r.out);
}

TEST_F(Cli, AblateWithoutSwitchesIsOneRow) {
  const auto r = run({"ablate", "--config", small_, "--train", fixture_});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 2u) << r.out;
  EXPECT_EQ(rows[1].rfind("full", 0), 0u);
  EXPECT_EQ(run({"ablate", "--config", small_, "--train", fixture_, "--no-attention"}).code, 1);
  EXPECT_EQ(run({"ablate", "--config", small_, "--train", fixture_, "--no-token-branch-1d",
                 "--no-attn-branch-1d"}).code, 1);
}

TEST_F(Cli, PredictOnEmptyInputWritesNothing) {
  const auto out = path("run");
  ASSERT_EQ(run({"train", "--config", small_, "--train", fixture_, "--out", out}).code, 0);
  const auto empty = write("empty.txt", "");
  const auto pred = path("pred.txt");
  ASSERT_EQ(run({"predict", "--checkpoint", out + "/model.ckpt", "--test", empty, "--out", pred}).code, 0);
  EXPECT_TRUE(fs::exists(pred));
  EXPECT_EQ(slurp(pred), "");
}

TEST(CliBinary, ExitCodes) {
  const std::string exe = SIMPLETAG_CLI;
  auto status = [&](const std::string& args) {
    const int s = std::system((exe + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("--help"), 0);
  EXPECT_EQ(status(""), 1);
  EXPECT_EQ(status("eval --test /nonexistent/gold.txt --pred /nonexistent/pred.txt"), 2);
}

}  // namespace
}  // namespace simpletag
