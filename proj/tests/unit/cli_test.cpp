#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "avsf/tensor_io.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;
};

Run avsf(const fs::path& cwd, const std::string& args) {
  const auto log = cwd / "last_output.txt";
  const std::string cmd = "cd '" + cwd.string() + "' && '" AVSF_CLI_PATH "' --cache cache " + args + " > '" +
                          log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream text;
  text << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, text.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = avsf::fixtures::scratch_dir("cli");
    ASSERT_EQ(avsf(dir_, "synth --out data --videos 30 --subjects 10 --test-subjects 2 --frames 8 --seed 1").code, 0);
    std::ofstream(dir_ / "config.json") << R"({"model": {"preset": "micro"},
      "train": {"learning_rate": 1e-3, "max_epochs": 3, "early_stop_patience": 1, "seed": 4},
      "data": {"manifest": "data/manifest.jsonl"}})";
  }
  static fs::path dir_;
};
fs::path Cli::dir_;

TEST_F(Cli, PreprocessIsIdempotentAndToleratesBrokenClips) {
  auto manifest = slurp(dir_ / "data" / "manifest.jsonl");
  std::istringstream lines(manifest);
  std::string line, four;
  for (int i = 0; i < 4 && std::getline(lines, line); ++i) four += line + "\n";
  std::ofstream(dir_ / "data" / "four.jsonl") << four;
  auto first = avsf(dir_, "preprocess --manifest data/four.jsonl --out four_cache");
  ASSERT_EQ(first.code, 0) << first.output;
  auto summary = avsf::read_json(dir_ / "four_cache" / "summary.json");
  EXPECT_EQ(summary["total"], 4);
  EXPECT_EQ(summary["recomputed"], 4);
  auto again = avsf(dir_, "preprocess --manifest data/four.jsonl --out four_cache");
  EXPECT_EQ(avsf::read_json(dir_ / "four_cache" / "summary.json")["recomputed"], 0);

  std::ofstream(dir_ / "data" / "broken.avi") << "not a video";
  std::ofstream(dir_ / "data" / "broken.wav") << "not audio";
  std::ofstream(dir_ / "data" / "four.jsonl", std::ios::app)
      << R"({"clip_id": "broken", "video_path": "broken.avi", "audio_path": "broken.wav", "label": "real", "subject_id": "s", "manipulation": "none", "split": "train"})"
      << "\n";
  auto lenient = avsf(dir_, "preprocess --manifest data/four.jsonl --out four_cache");
  EXPECT_EQ(lenient.code, 0) << lenient.output;
  summary = avsf::read_json(dir_ / "four_cache" / "summary.json");
  EXPECT_EQ(summary["failures"].size(), 1u);
  EXPECT_EQ(summary["up_to_date"], 4);
  EXPECT_NE(avsf(dir_, "preprocess --manifest data/four.jsonl --out four_cache --strict").code, 0);
}

TEST_F(Cli, TrainWritesRunDirectoryDeterministically) {
  auto a = avsf(dir_, "train --config config.json --out run_a");
  ASSERT_EQ(a.code, 0) << a.output;
  EXPECT_NE(a.output.find("val accuracy"), std::string::npos);
  for (const char* f : {"config.json", "history.csv", "seeds.json", "checkpoint/config.json"})
    EXPECT_TRUE(fs::exists(dir_ / "run_a" / f)) << f;
  const auto history = slurp(dir_ / "run_a" / "history.csv");
  EXPECT_EQ(history.rfind("epoch,train_loss,val_acc\n1,", 0), 0u);
  ASSERT_EQ(avsf(dir_, "train --config config.json --out run_b").code, 0);
  EXPECT_EQ(history, slurp(dir_ / "run_b" / "history.csv"));
  auto other = avsf(dir_, "train --config config.json --set train.seed=9 --set train.max_epochs=2 --out run_c");
  ASSERT_EQ(other.code, 0) << other.output;
  EXPECT_EQ(avsf::read_json(dir_ / "run_c" / "config.json")["train"]["max_epochs"], 2);
}

TEST_F(Cli, ConfigErrorsNameTheField) {
  auto bad = avsf(dir_, "train --config config.json --set train.freeze_mode=PARTIAL --out run_bad");
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.output.find("freeze_mode"), std::string::npos) << bad.output;
  auto lr = avsf(dir_, "train --config config.json --set train.learning_rate=0 --out run_bad");
  EXPECT_EQ(lr.code, 1);
  EXPECT_NE(lr.output.find("learning_rate"), std::string::npos) << lr.output;
  EXPECT_EQ(avsf(dir_, "eval --checkpoint missing --manifest x=data/manifest.jsonl").code, 2);
  EXPECT_EQ(avsf(dir_, "no-such-command").code, 1);
}

TEST_F(Cli, EvalWritesReportsPerTestSet) {
  ASSERT_EQ(avsf(dir_, "train --config config.json --out run_eval").code, 0);
  auto plain = avsf(dir_, "eval --checkpoint run_eval/checkpoint --manifest synth=data/manifest.jsonl --out plain");
  ASSERT_EQ(plain.code, 0) << plain.output;
  EXPECT_TRUE(fs::exists(dir_ / "plain" / "synth.json"));
  EXPECT_TRUE(fs::exists(dir_ / "plain" / "synth.txt"));
  EXPECT_FALSE(fs::exists(dir_ / "plain" / "synth_roc.csv"));
  EXPECT_NE(plain.output.find("F1-score"), std::string::npos);
  ASSERT_EQ(avsf(dir_, "eval --checkpoint run_eval/checkpoint --manifest synth=data/manifest.jsonl --out roc --roc").code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "roc" / "synth_roc.csv"));

  auto exported = avsf(dir_, "export-embeddings --checkpoint run_eval/checkpoint --manifest data/manifest.jsonl "
                             "--kinds SYNC,FUSION --out emb");
  ASSERT_EQ(exported.code, 0) << exported.output;
  EXPECT_EQ(avsf::read_json(dir_ / "emb" / "embeddings.json")["records"].size(), 60u);
  EXPECT_EQ(avsf(dir_, "export-embeddings --checkpoint run_eval/checkpoint --manifest data/manifest.jsonl "
                       "--kinds LOGITS --out emb2").code, 1);
}

TEST_F(Cli, KFoldWritesFoldReportsAndAverage) {
  auto run = avsf(dir_, "eval --kfold 5 --config config.json --set train.max_epochs=2 --out kfold");
  ASSERT_EQ(run.code, 0) << run.output;
  for (int f = 1; f <= 5; ++f) EXPECT_TRUE(fs::exists(dir_ / "kfold" / ("fold_" + std::to_string(f) + ".json"))) << f;
  const auto average = avsf::read_json(dir_ / "kfold" / "average.json");
  EXPECT_EQ(average["folds"], 5);
  EXPECT_TRUE(average.contains("auc"));
}

}  // namespace
