#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "avsf/checkpoint.hpp"
#include "avsf/error.hpp"
#include "avsf/evaluation.hpp"
#include "avsf/hashing.hpp"
#include "avsf/tensor_io.hpp"
#include "test_support.hpp"

using namespace avsf;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no avsf::Error thrown";
  return ErrorCode::FormatError;
}

Prediction with_fake(double p) {
  Prediction out;
  out.probs = {1.0 - p, p};
  return out;
}

double mann_whitney(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[i] != 1 || labels[j] != 0) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  return wins / pairs;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

TEST(VideoScore, MeanAndTieRule) {
  std::vector<Prediction> two{with_fake(0.9), with_fake(0.7)};
  EXPECT_NEAR(video_score(two), 0.8, 1e-12);
  EXPECT_TRUE(is_fake_decision(video_score(two)));
  std::vector<Prediction> one{with_fake(0.2)};
  EXPECT_FALSE(is_fake_decision(video_score(one)));
  EXPECT_TRUE(is_fake_decision(0.5));
  EXPECT_EQ(code_of([] { video_score(std::vector<Prediction>{}); }), ErrorCode::EmptyPredictionList);
}

TEST(Metrics, RealClassRowExample) {
  // real-class precision 1683/1980 = 0.85 and recall 1683/1700 = 0.99
  const ConfusionCounts counts{500, 1683, 17, 297};
  const auto m = compute_metrics(counts);
  EXPECT_NEAR(m.real.precision, 0.85, 1e-12);
  EXPECT_NEAR(m.real.recall, 0.99, 1e-12);
  EXPECT_EQ(fixed2(m.real.f1), "0.91");
  EXPECT_NEAR(m.real.f1, 2 * 0.85 * 0.99 / 1.84, 1e-12);
}

TEST(Metrics, PerfectClassifierAndZeroDivision) {
  const auto m = compute_metrics({70, 70, 0, 0});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.fake.f1, 1.0);
  EXPECT_EQ(m.real.f1, 1.0);
  const auto none = compute_metrics({0, 5, 0, 0});
  EXPECT_TRUE(none.fake.zero_division);
  EXPECT_EQ(none.fake.precision, 0.0);
  EXPECT_EQ(code_of([] { compute_metrics({0, 0, 0, 0}); }), ErrorCode::EmptyEvaluation);
}

TEST(Metrics, MatchesFormulasOnRandomCounts) {
  std::mt19937 rng(9);
  std::uniform_int_distribution<int> u(1, 500);
  for (int i = 0; i < 500; ++i) {
    const double tp = u(rng), tn = u(rng), fp = u(rng), fn = u(rng);
    const auto m = compute_metrics({std::int64_t(tp), std::int64_t(tn), std::int64_t(fp), std::int64_t(fn)});
    const double p = tp / (tp + fp), r = tp / (tp + fn);
    EXPECT_NEAR(m.fake.precision, p, 1e-12);
    EXPECT_NEAR(m.fake.recall, r, 1e-12);
    EXPECT_NEAR(m.fake.f1, 2 * p * r / (p + r), 1e-12);
    EXPECT_NEAR(m.accuracy, (tp + tn) / (tp + tn + fp + fn), 1e-12);
    const auto swapped = compute_metrics({std::int64_t(tn), std::int64_t(tp), std::int64_t(fn), std::int64_t(fp)});
    EXPECT_EQ(swapped.accuracy, m.accuracy);
    EXPECT_EQ(swapped.fake.f1, m.real.f1);
  }
}

TEST(Roc, PerfectTiedAndRandom) {
  EXPECT_EQ(roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<int>{0, 0, 1, 1}).auc, 1.0);
  EXPECT_EQ(roc_auc(std::vector<double>(6, 0.4), std::vector<int>{0, 1, 0, 1, 1, 0}).auc, 0.5);
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> coarse(0, 6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 20; ++i) {
      s.push_back(coarse(rng) / 6.0);
      y.push_back(i % 3 == 0);
    }
    const auto roc = roc_auc(s, y);
    EXPECT_NEAR(roc.auc, mann_whitney(s, y), 1e-9);
    EXPECT_EQ(roc.points.front().fpr, 0.0);
    EXPECT_EQ(roc.points.front().tpr, 0.0);
    EXPECT_EQ(roc.points.back().fpr, 1.0);
    EXPECT_EQ(roc.points.back().tpr, 1.0);
    for (std::size_t i = 1; i < roc.points.size(); ++i) {
      EXPECT_LT(roc.points[i].threshold, roc.points[i - 1].threshold);
      EXPECT_GE(roc.points[i].fpr, roc.points[i - 1].fpr);
      EXPECT_GE(roc.points[i].tpr, roc.points[i - 1].tpr);
    }
    std::vector<double> warped;
    for (double v : s) warped.push_back(std::exp(3 * v) - 7);
    EXPECT_NEAR(roc_auc(warped, y).auc, roc.auc, 1e-12);
  }
  EXPECT_EQ(code_of([] { roc_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}); }), ErrorCode::SingleClassLabels);
}

TEST(Report, TableAndCsvLayout) {
  std::vector<ScoredVideo> videos{{"a", Label::Real, Manipulation::None, 0.1, 1},
                                  {"b", Label::Fake, Manipulation::Faceswap, 0.9, 1},
                                  {"c", Label::Fake, Manipulation::Rtvc, 0.4, 1}};
  const auto report = build_report("faceswap", videos);
  const auto table = report.table();
  for (const char* col : {"Class", "Precision", "Recall", "F1-score", "Accuracy", "Real", "Fake"})
    EXPECT_NE(table.find(col), std::string::npos) << col;
  EXPECT_NE(table.find("0.67"), std::string::npos);
  EXPECT_EQ(report.roc_csv().substr(0, 18), "threshold,fpr,tpr\n");
  EXPECT_EQ(report.per_manipulation.size(), 3u);
  EXPECT_EQ(report.per_manipulation.at("rtvc").accuracy, 0.0);
  EXPECT_EQ(report.to_json()["metrics"]["accuracy"].get<double>(), 2.0 / 3.0);
}

TEST(Report, FakeOnlySetStillHasAccuracy) {
  std::vector<ScoredVideo> videos{{"b", Label::Fake, Manipulation::Fsgan, 0.9, 1},
                                  {"c", Label::Fake, Manipulation::Fsgan, 0.2, 1}};
  const auto report = build_report("fsgan", videos);
  EXPECT_FALSE(report.roc.has_value());
  EXPECT_NE(report.roc_error.find("both"), std::string::npos);
  EXPECT_EQ(report.metrics.accuracy, 0.5);
}

TEST(Evaluate, NamedTestSetsPlusCombined) {
  torch::manual_seed(0);
  AvDetector det(ModelConfig::preset_named("micro"));
  std::map<std::string, std::vector<Sample>> sets;
  for (int i = 0; i < 4; ++i) sets["alpha"].push_back(fixtures::random_sample(5, std::uint64_t(i), Label(i % 2)));
  for (int i = 4; i < 7; ++i) sets["beta"].push_back(fixtures::random_sample(6, std::uint64_t(i), Label::Fake));
  const auto reports = evaluate_testsets(det, sets, 0);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports.at("alpha").videos.size(), 4u);
  EXPECT_FALSE(reports.at("beta").roc.has_value());
  EXPECT_EQ(reports.at("combined").metrics.counts.total(), 7);
  const auto windowed = score_videos(det, sets["beta"], 2);
  EXPECT_EQ(windowed[0].windows, 3);
}

TEST(Export, SyncAndPooledRoundTrip) {
  torch::manual_seed(1);
  AvDetector det(ModelConfig::preset_named("micro"));
  std::vector<Sample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(fixtures::random_sample(4 + i, std::uint64_t(i), Label(i % 2)));
  const auto records = compute_embeddings(det, samples, {"SYNC", "pooled"});
  ASSERT_EQ(records.size(), 6u);
  EXPECT_EQ(records[0].kind, "SYNC");
  EXPECT_EQ(records[0].values.sizes(), (std::vector<std::int64_t>{4, 8}));
  EXPECT_EQ(records[1].values.sizes(), (std::vector<std::int64_t>{8}));
  const auto dir = fixtures::scratch_dir("export");
  write_embeddings(dir, records);
  const auto back = read_embeddings(dir);
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].clip_id, records[i].clip_id);
    EXPECT_EQ(back[i].label, records[i].label);
    EXPECT_TRUE(fixtures::bitwise_equal(back[i].values, records[i].values));
  }
  const auto fusion = compute_embeddings(det, {samples[0]}, {"FUSION"});
  EXPECT_EQ(fusion[0].values.size(1), 16);
  EXPECT_EQ(code_of([&] { compute_embeddings(det, samples, {"LOGITS"}); }), ErrorCode::UnknownKind);
}

TEST(Checkpoint, AvDetectorRoundTrip) {
  torch::manual_seed(2);
  AvDetector det(ModelConfig::preset_named("micro"));
  const auto dir = fixtures::scratch_dir("ckpt_av");
  save_detector(det, dir / "model");
  auto loaded = load_detector(dir / "model");
  EXPECT_EQ(loaded->kind(), "av");
  const auto sample = fixtures::random_sample(6, 4, Label::Fake);
  EXPECT_EQ(predict_windows(det, sample, 0)[0].logits, predict_windows(*loaded, sample, 0)[0].logits);
  EXPECT_EQ(read_checkpoint_descriptor(dir / "model")["format_version"], 1);
}

TEST(Checkpoint, EnsembleVerifiesBackboneHashes) {
  torch::manual_seed(3);
  EnsembleDetector det(ModelConfig::preset_named("micro"));
  const auto dir = fixtures::scratch_dir("ckpt_ens");
  save_detector(det, dir / "model");
  auto loaded = load_detector(dir / "model");
  EXPECT_EQ(loaded->kind(), "ensemble");
  const auto sample = fixtures::with_faces(fixtures::random_sample(5, 1, Label::Real), 32, 1);
  EXPECT_EQ(predict_windows(det, sample, 0)[0].logits, predict_windows(*loaded, sample, 0)[0].logits);

  auto face = read_tensor_dir(dir / "model" / "face");
  face.begin()->second.add_(1.0);
  write_tensor_dir(dir / "model" / "face", face);
  EXPECT_EQ(code_of([&] { load_detector(dir / "model"); }), ErrorCode::FormatError);
}

TEST(Checkpoint, StateShapeConflict) {
  torch::nn::Linear a(3, 2), b(4, 2);
  auto state = module_state(*a);
  EXPECT_EQ(code_of([&] { load_module_state(*b, state); }), ErrorCode::ShapeConflict);
  state.erase("bias");
  EXPECT_EQ(code_of([&] { load_module_state(*a, state); }), ErrorCode::MissingTensor);
}

TEST(Hashing, KnownDigest) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
