#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "avsf/checkpoint.hpp"
#include "avsf/error.hpp"
#include "avsf/pipeline.hpp"
#include "avsf/sampling.hpp"
#include "avsf/trainer.hpp"
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

std::vector<Sample> toy_set(int n, std::uint64_t seed, std::int64_t steps = 4) {
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    const auto label = i % 2 ? Label::Fake : Label::Real;
    auto s = fixtures::random_sample(steps, seed * 1000 + std::uint64_t(i), label);
    s.clip.clip_id = "toy" + std::to_string(i);
    if (label == Label::Fake) s.pair.lips.frames = s.pair.lips.frames * 0.5 + 0.5;
    else s.pair.lips.frames = s.pair.lips.frames * 0.5;
    out.push_back(std::move(s));
  }
  return out;
}

std::map<std::string, torch::Tensor> snapshot(const std::vector<ParameterGroup>& groups) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& g : groups) {
    auto params = g.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) out[g.name + "#" + std::to_string(i)] = params[i].detach().clone();
  }
  return out;
}

double drift(const std::map<std::string, torch::Tensor>& before, const std::vector<ParameterGroup>& groups,
             const std::string& group) {
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.name != group) continue;
    auto params = g.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
      total += (params[i].detach() - before.at(g.name + "#" + std::to_string(i))).abs().sum().item<double>();
  }
  return total;
}

}  // namespace

TEST(CrossEntropy, Examples) {
  const int one[] = {1};
  const double perfect[] = {1.0 - 1e-7}, half[] = {0.5};
  EXPECT_NEAR(cross_entropy(one, perfect), 1e-7, 1e-12);
  EXPECT_NEAR(cross_entropy(one, half), std::log(2.0), 1e-12);
  const int y[] = {1, 0, 1};
  const double p[] = {0.9, 0.2, 0.6};
  const double oracle = -(std::log(0.9) + std::log(0.8) + std::log(0.6)) / 3.0;
  EXPECT_NEAR(cross_entropy(y, p), oracle, 1e-9);
  auto t = cross_entropy(torch::tensor({1, 0, 1}, torch::kInt64), torch::tensor({0.9, 0.2, 0.6}, torch::kFloat64));
  EXPECT_NEAR(t.item<double>(), oracle, 1e-9);
  const double saturated[] = {0.0};
  EXPECT_TRUE(std::isfinite(cross_entropy(one, saturated)));
  EXPECT_EQ(code_of([&] { cross_entropy(std::span<const int>(y), std::span<const double>(half)); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code_of([] { cross_entropy(std::span<const int>{}, std::span<const double>{}); }), ErrorCode::EmptyBatch);
}

TEST(CrossEntropy, NeverNegative) {
  std::mt19937 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const int y[] = {int(u(rng) > 0.5)};
    const double p[] = {u(rng)};
    EXPECT_GE(cross_entropy(y, p), 0.0);
  }
}

TEST(Freeze, PartitionsPerMode) {
  AvDetector det(ModelConfig::preset_named("micro"));
  auto names = [](const std::vector<ParameterGroup>& gs) {
    std::set<std::string> out;
    for (const auto& g : gs) out.insert(g.name);
    return out;
  };
  auto full = apply_freeze(det, FreezeMode::FullFinetune);
  EXPECT_TRUE(full.frozen.empty());
  auto fft = apply_freeze(det, FreezeMode::FreezeFrontendAndTransformer);
  EXPECT_EQ(names(fft.frozen), (std::set<std::string>{"visual_frontend", "audio_frontend", "transformer"}));
  EXPECT_EQ(names(fft.trainable), (std::set<std::string>{"temporal_head", "classifier"}));
  for (const auto& p : det.model()->encoder->encoder->parameters()) EXPECT_FALSE(p.requires_grad());
  auto fo = apply_freeze(det, FreezeMode::FreezeFrontendOnly);
  EXPECT_EQ(names(fo.frozen), (std::set<std::string>{"visual_frontend", "audio_frontend"}));
  EXPECT_EQ(code_of([&] { apply_freeze(det, FreezeMode::EnsembleJoint); }), ErrorCode::UnknownMode);

  EnsembleDetector ens(ModelConfig::preset_named("micro"));
  auto frozen = apply_freeze(ens, FreezeMode::EnsembleFrozenBackbones);
  EXPECT_EQ(names(frozen.trainable), std::set<std::string>{"ensemble_head"});
  EXPECT_TRUE(apply_freeze(ens, FreezeMode::EnsembleJoint).frozen.empty());
  EXPECT_EQ(code_of([&] { apply_freeze(ens, FreezeMode::FullFinetune); }), ErrorCode::UnknownMode);
}

TEST(Freeze, ParametersCoverModelExactlyOnce) {
  EnsembleDetector ens(ModelConfig::preset_named("micro"));
  std::set<const void*> seen;
  std::size_t count = 0;
  for (const auto& g : ens.parameter_groups())
    for (const auto& p : g.parameters()) {
      seen.insert(p.unsafeGetTensorImpl());
      ++count;
    }
  EXPECT_EQ(count, seen.size());
  EXPECT_EQ(count, ens.root().parameters().size());
}

TEST(Freeze, FrontendOnlyKeepsFrontendsAndMovesTransformer) {
  torch::manual_seed(1);
  AvDetector det(ModelConfig::preset_named("micro"));
  TrainConfig config;
  config.learning_rate = 1e-3;
  config.freeze_mode = FreezeMode::FreezeFrontendOnly;
  TrainingSession session(det, config);
  const auto groups = det.parameter_groups();
  const auto before = snapshot(groups);
  auto samples = toy_set(4, 1);
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto batch = collate(ptrs, det.collate_options());
  for (int i = 0; i < 3; ++i) session.step(batch);
  EXPECT_EQ(drift(before, groups, "visual_frontend"), 0.0);
  EXPECT_EQ(drift(before, groups, "audio_frontend"), 0.0);
  EXPECT_GT(drift(before, groups, "transformer"), 0.0);
  EXPECT_GT(drift(before, groups, "temporal_head"), 0.0);
}

TEST(Freeze, EnsembleStepLeavesBackbonesUntouched) {
  torch::manual_seed(2);
  EnsembleDetector det(ModelConfig::preset_named("micro"));
  TrainConfig config;
  config.learning_rate = 1e-2;
  config.freeze_mode = FreezeMode::EnsembleFrozenBackbones;
  TrainingSession session(det, config);
  std::vector<Sample> samples;
  for (int i = 0; i < 2; ++i)
    samples.push_back(fixtures::with_faces(fixtures::random_sample(5, std::uint64_t(i), Label(i)), 32, std::uint64_t(i)));
  std::vector<const Sample*> ptrs{&samples[0], &samples[1]};
  const auto batch = collate(ptrs, det.collate_options());
  std::map<std::string, torch::Tensor> before;
  for (const auto& [name, t] : module_state(det.root())) before[name] = t.clone();
  session.step(batch);
  double backbone = 0.0, head = 0.0;
  for (const auto& [name, t] : module_state(det.root())) {
    const double d = (t - before.at(name)).abs().max().item<double>();
    (name.rfind("head.", 0) == 0 ? head : backbone) += d;
  }
  EXPECT_EQ(backbone, 0.0);
  EXPECT_GT(head, 0.0);
}

TEST(EarlyStopping, ConstantMetricStopsAfterPatience) {
  EarlyStopping stop(2, 30);
  EXPECT_FALSE(stop.update(0.5));
  EXPECT_FALSE(stop.update(0.5));
  EXPECT_TRUE(stop.update(0.5));
  EXPECT_EQ(stop.epochs_seen(), 3);
  EXPECT_EQ(stop.best_epoch(), 1);
}

TEST(EarlyStopping, BoundsHoldForRandomTraces) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int patience = 1 + trial % 5, max_epochs = patience + 1 + trial % 7;
    EarlyStopping stop(patience, max_epochs);
    int epochs = 0;
    while (!stop.update(u(rng))) ++epochs;
    ++epochs;
    EXPECT_LE(epochs, max_epochs);
    EXPECT_GE(epochs, std::min(max_epochs, patience + 1));
  }
}

TEST(TrainConfigJson, ValidationNamesTheField) {
  try {
    TrainConfig::from_json({{"freeze_mode", "FREEZE_EVERYTHING"}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
    EXPECT_NE(std::string(e.what()).find("freeze_mode"), std::string::npos);
  }
  EXPECT_EQ(code_of([] { TrainConfig::from_json({{"learning_rate", -1.0}}); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { TrainConfig::from_json({{"early_stop_patience", 30}}); }), ErrorCode::InvalidConfig);
  TrainConfig c;
  c.freeze_mode = FreezeMode::FreezeFrontendOnly;
  c.seed = 9;
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.freeze_mode, FreezeMode::FreezeFrontendOnly);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_DOUBLE_EQ(TrainConfig{}.learning_rate, 1e-5);
  EXPECT_EQ(TrainConfig{}.max_epochs, 30);
}

TEST(Train, ConstantValidationStopsAtEpochThree) {
  AvDetector det(ModelConfig::preset_named("micro"));
  TrainConfig config;
  config.early_stop_patience = 2;
  const auto data = toy_set(6, 2);
  TrainHooks hooks;
  hooks.validation_metric = [](int, double) { return 0.5; };
  const auto result = train(det, data, data, config, hooks);
  EXPECT_EQ(result.history.size(), 3u);
  EXPECT_TRUE(result.early_stopped);
  EXPECT_EQ(result.best_epoch, 1);
}

TEST(Train, RestoresBestEpochWeights) {
  torch::manual_seed(4);
  AvDetector det(ModelConfig::preset_named("micro"));
  TrainConfig config;
  config.learning_rate = 1e-2;
  config.max_epochs = 4;
  config.early_stop_patience = 3;
  const auto data = toy_set(6, 3);
  std::map<std::string, torch::Tensor> after_epoch_one;
  TrainHooks hooks;
  hooks.validation_metric = [](int epoch, double) { return epoch == 1 ? 1.0 : 0.0; };
  hooks.on_epoch = [&](const EpochRecord& r) {
    if (r.epoch == 1)
      for (const auto& [n, t] : module_state(det.root())) after_epoch_one[n] = t.clone();
  };
  const auto result = train(det, data, data, config, hooks);
  EXPECT_EQ(result.best_epoch, 1);
  for (const auto& [n, t] : module_state(det.root())) EXPECT_TRUE(torch::equal(t, after_epoch_one.at(n))) << n;
}

TEST(Train, NonFiniteLossNamesTheEpoch) {
  AvDetector det(ModelConfig::preset_named("micro"));
  {
    torch::NoGradGuard no_grad;
    det.model()->classifier->bias.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  const auto data = toy_set(4, 4);
  try {
    train(det, data, data, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DivergenceDetected);
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { train(det, {}, data, TrainConfig{}); }), ErrorCode::EmptySplit);
}

TEST(Train, SeparableToySetIsLearnt) {
  torch::manual_seed(0);
  AvDetector det(ModelConfig::preset_named("micro"));
  TrainConfig config;
  config.learning_rate = 1e-2;
  const auto data = toy_set(32, 6);
  TrainingSession session(det, config);
  double accuracy = 0.0;
  for (int epoch = 1; epoch <= 200 && accuracy < 1.0; ++epoch) {
    std::vector<Label> labels;
    for (const auto& s : data) labels.push_back(s.clip.label);
    const auto plan = oversample_plan(labels, std::uint64_t(epoch));
    for (std::size_t i = 0; i < plan.size(); i += 8) {
      std::vector<const Sample*> ptrs;
      for (std::size_t j = i; j < std::min(plan.size(), i + 8); ++j) ptrs.push_back(&data[plan[j]]);
      session.step(collate(ptrs, det.collate_options()), epoch);
    }
    accuracy = video_accuracy(det, data, 0);
  }
  EXPECT_EQ(accuracy, 1.0);
}

TEST(Train, SameSeedSameHistory) {
  const auto data = toy_set(6, 8);
  auto run = [&] {
    torch::manual_seed(3);
    AvDetector det(ModelConfig::preset_named("micro"));
    TrainConfig config;
    config.learning_rate = 1e-3;
    config.max_epochs = 3;
    config.early_stop_patience = 2;
    config.seed = 17;
    return history_csv(train(det, data, data, config).history);
  };
  const auto a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.substr(0, a.find('\n')), "epoch,train_loss,val_acc");
}

TEST(Oversample, BalancesAndCoversEveryClip) {
  std::vector<Label> labels(10, Label::Real);
  labels.resize(50, Label::Fake);
  const auto plan = oversample_plan(labels, 1);
  EXPECT_EQ(plan.size(), 80u);
  EXPECT_EQ(std::count_if(plan.begin(), plan.end(), [&](auto i) { return labels[i] == Label::Real; }), 40);
  EXPECT_EQ(std::set<std::size_t>(plan.begin(), plan.end()).size(), 50u);
  EXPECT_EQ(plan, oversample_plan(labels, 1));
  EXPECT_NE(plan, oversample_plan(labels, 2));
  std::vector<Label> balanced(20, Label::Real);
  balanced.resize(40, Label::Fake);
  auto perm = oversample_plan(balanced, 3);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < perm.size(); ++i) EXPECT_EQ(perm[i], i);
  EXPECT_EQ(code_of([] { oversample_plan(std::vector<Label>(5, Label::Fake), 0); }), ErrorCode::SingleClassDataset);
}

TEST(KFold, ThirtyTwoSubjectsInFiveFolds) {
  std::vector<MediaClip> clips;
  for (int s = 0; s < 32; ++s)
    for (int v = 0; v < 3; ++v) {
      MediaClip c;
      c.clip_id = std::to_string(s) + "_" + std::to_string(v);
      c.subject_id = "subject" + std::to_string(s);
      clips.push_back(c);
    }
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto folds = make_kfold(clips, 5, seed);
    ASSERT_EQ(folds.size(), 5u);
    std::vector<std::size_t> sizes;
    std::map<std::string, int> test_count;
    for (const auto& f : folds) {
      std::set<std::string> train_subjects, test_subjects;
      for (auto i : f.train) train_subjects.insert(clips[i].subject_id);
      for (auto i : f.test) test_subjects.insert(clips[i].subject_id);
      for (const auto& s : test_subjects) {
        EXPECT_FALSE(train_subjects.contains(s));
        ++test_count[s];
      }
      sizes.push_back(test_subjects.size());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{7, 7, 6, 6, 6}));
    EXPECT_EQ(test_count.size(), 32u);
    for (const auto& [s, n] : test_count) EXPECT_EQ(n, 1);
  }
  const auto single = make_kfold(clips, 1, 0);
  ASSERT_EQ(single.size(), 1u);
  EXPECT_EQ(single[0].test.size(), clips.size());
  EXPECT_TRUE(single[0].train.empty());
  clips.resize(9);
  EXPECT_EQ(code_of([&] { make_kfold(clips, 5, 0); }), ErrorCode::TooFewSubjects);
}

TEST(Holdout, SubjectsStayOnOneSide) {
  std::vector<MediaClip> clips;
  std::vector<std::size_t> idx;
  for (int i = 0; i < 40; ++i) {
    MediaClip c;
    c.clip_id = std::to_string(i);
    c.subject_id = "s" + std::to_string(i % 20);
    clips.push_back(c);
    idx.push_back(std::size_t(i));
  }
  const auto split = hold_out_subjects(clips, idx, 0.1, 4);
  std::set<std::string> a, b;
  for (auto i : split.train) a.insert(clips[i].subject_id);
  for (auto i : split.validation) b.insert(clips[i].subject_id);
  EXPECT_EQ(b.size(), 2u);
  for (const auto& s : b) EXPECT_FALSE(a.contains(s));
  EXPECT_EQ(split.train.size() + split.validation.size(), 40u);
}

TEST(RunConfig, DottedOverrides) {
  nlohmann::json doc = {{"train", {{"learning_rate", 1e-5}}}};
  apply_override(doc, "train.learning_rate=0.001");
  apply_override(doc, "train.freeze_mode=FULL_FINETUNE");
  apply_override(doc, "model.preset=micro");
  apply_override(doc, "data.landmarks=null");
  EXPECT_EQ(doc["train"]["learning_rate"].get<double>(), 0.001);
  EXPECT_EQ(doc["train"]["freeze_mode"], "FULL_FINETUNE");
  EXPECT_EQ(doc["model"]["preset"], "micro");
  const auto config = RunConfig::from_json(doc);
  EXPECT_EQ(config.model.encoder.embed_dim, 8);
  EXPECT_FALSE(config.data.landmarks.has_value());
  const auto back = RunConfig::from_json(config.to_json());
  EXPECT_EQ(back.to_json(), config.to_json());
  EXPECT_EQ(code_of([&] { apply_override(doc, "no_equals_sign"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([&] { apply_override(doc, "a..b=1"); }), ErrorCode::InvalidConfig);
}

TEST(RunConfig, EnsembleModesNeedEnsembleRuns) {
  nlohmann::json doc = {{"train", {{"freeze_mode", "ENSEMBLE_JOINT"}}}};
  EXPECT_EQ(code_of([&] { RunConfig::from_json(doc); }), ErrorCode::InvalidConfig);
  doc["ensemble"] = true;
  EXPECT_TRUE(RunConfig::from_json(doc).ensemble);
  doc["pretrained"] = {{"weights", "w"}};
  EXPECT_EQ(code_of([&] { RunConfig::from_json(doc); }), ErrorCode::InvalidConfig);
}

TEST(RunConfig, ValTagsWinOverSubjectHoldout) {
  std::vector<Sample> samples;
  for (int i = 0; i < 21; ++i) {
    auto s = fixtures::random_sample(3, std::uint64_t(i), Label(i % 2));
    s.clip.subject_id = "s" + std::to_string(i / 2);
    samples.push_back(s);
  }
  samples[20].clip.split = Split::Test;
  auto held = split_for_training(samples, 0.2, 0);
  EXPECT_EQ(held.train.size() + held.validation.size(), 20u);
  EXPECT_EQ(held.validation.size(), 4u);
  std::set<std::string> train_subjects;
  for (const auto& s : held.train) train_subjects.insert(s.clip.subject_id);
  for (const auto& s : held.validation) EXPECT_FALSE(train_subjects.count(s.clip.subject_id));
  samples[0].clip.split = Split::Val;
  auto tagged = split_for_training(samples, 0.2, 0);
  ASSERT_EQ(tagged.validation.size(), 1u);
  EXPECT_EQ(tagged.validation[0].clip.clip_id, samples[0].clip.clip_id);
  EXPECT_EQ(tagged.train.size(), 19u);
}
