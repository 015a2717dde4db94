#include "avsf/trainer.hpp"

#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>

#include <torch/torch.h>

#include "avsf/checkpoint.hpp"
#include "avsf/error.hpp"
#include "avsf/sampling.hpp"

namespace avsf {
namespace {

constexpr std::string_view kModeNames[] = {
    "FREEZE_FRONTEND_AND_TRANSFORMER", "FREEZE_FRONTEND_ONLY", "FULL_FINETUNE",
    "ENSEMBLE_FROZEN_BACKBONES", "ENSEMBLE_JOINT"};

bool is_ensemble_mode(FreezeMode mode) {
  return mode == FreezeMode::EnsembleFrozenBackbones || mode == FreezeMode::EnsembleJoint;
}

bool frozen_under(FreezeMode mode, ParamRole role) {
  const bool frontend = role == ParamRole::VisualFrontend || role == ParamRole::AudioFrontend;
  switch (mode) {
    case FreezeMode::FreezeFrontendAndTransformer: return frontend || role == ParamRole::Transformer;
    case FreezeMode::FreezeFrontendOnly: return frontend;
    case FreezeMode::FullFinetune: return false;
    case FreezeMode::EnsembleFrozenBackbones: return role != ParamRole::EnsembleHead;
    case FreezeMode::EnsembleJoint: return false;
  }
  return false;
}

std::vector<torch::Tensor> collect(const std::vector<ParameterGroup>& groups) {
  std::vector<torch::Tensor> out;
  for (const auto& g : groups) {
    auto params = g.parameters();
    out.insert(out.end(), params.begin(), params.end());
  }
  return out;
}

}  // namespace

std::string_view to_string(FreezeMode mode) { return kModeNames[static_cast<int>(mode)]; }

FreezeMode parse_freeze_mode(std::string_view text) {
  for (int i = 0; i < 5; ++i) {
    if (kModeNames[i] == text) return static_cast<FreezeMode>(i);
  }
  fail(ErrorCode::UnknownMode, "freeze_mode: unknown value '" + std::string(text) + "'");
}

torch::Tensor cross_entropy(const torch::Tensor& labels, const torch::Tensor& fake_probs) {
  if (labels.numel() != fake_probs.numel()) {
    fail(ErrorCode::LengthMismatch, std::to_string(labels.numel()) + " labels vs " +
                                        std::to_string(fake_probs.numel()) + " probabilities");
  }
  if (labels.numel() == 0) fail(ErrorCode::EmptyBatch, "cross_entropy of an empty batch");
  auto p = fake_probs.reshape({-1}).clamp(kProbabilityClamp, 1.0 - kProbabilityClamp);
  auto y = labels.reshape({-1}).to(p.scalar_type());
  return -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean();
}

double cross_entropy(std::span<const int> labels, std::span<const double> fake_probs) {
  if (labels.size() != fake_probs.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels vs " +
                                        std::to_string(fake_probs.size()) + " probabilities");
  }
  if (labels.empty()) fail(ErrorCode::EmptyBatch, "cross_entropy of an empty batch");
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(fake_probs[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    total += labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return -total / double(labels.size());
}

std::vector<torch::Tensor> ParameterPartition::trainable_parameters() const { return collect(trainable); }
std::vector<torch::Tensor> ParameterPartition::frozen_parameters() const { return collect(frozen); }

ParameterPartition apply_freeze(Detector& detector, FreezeMode mode) {
  if (is_ensemble_mode(mode) != detector.uses_faces()) {
    fail(ErrorCode::UnknownMode, std::string(to_string(mode)) + " does not apply to a '" + detector.kind() +
                                     "' detector");
  }
  ParameterPartition partition;
  for (auto& group : detector.parameter_groups()) {
    const bool frozen = frozen_under(mode, group.role);
    for (auto& p : group.parameters()) p.set_requires_grad(!frozen);
    (frozen ? partition.frozen : partition.trainable).push_back(std::move(group));
  }
  return partition;
}

void set_training_mode(Detector& detector, const ParameterPartition& partition) {
  detector.root().train();
  for (const auto& group : partition.frozen) {
    for (const auto& m : group.modules) m->eval();
  }
}

EarlyStopping::EarlyStopping(int patience, int max_epochs) : patience_(patience), max_epochs_(max_epochs) {}

bool EarlyStopping::update(double metric) {
  ++epochs_;
  improved_last_ = epochs_ == 1 || metric > best_;
  if (improved_last_) {
    best_ = metric;
    best_epoch_ = epochs_;
    stale_ = 0;
  } else {
    ++stale_;
  }
  return stale_ >= patience_ || epochs_ >= max_epochs_;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorCode::InvalidConfig, "learning_rate must be positive");
  if (max_epochs < 1) fail(ErrorCode::InvalidConfig, "max_epochs must be at least 1");
  if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be at least 1");
  if (early_stop_patience < 1 || early_stop_patience >= max_epochs) {
    fail(ErrorCode::InvalidConfig, "early_stop_patience must be in [1, max_epochs)");
  }
  if (max_frames < 0) fail(ErrorCode::InvalidConfig, "max_frames must be non-negative");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0) {
    fail(ErrorCode::InvalidConfig, "validation_fraction must be in [0, 1)");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"max_epochs", max_epochs},
          {"batch_size", batch_size},
          {"early_stop_patience", early_stop_patience},
          {"freeze_mode", to_string(freeze_mode)},
          {"oversample", oversample},
          {"seed", seed},
          {"max_frames", max_frames},
          {"validation_fraction", validation_fraction}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.oversample = j.value("oversample", c.oversample);
    c.seed = j.value("seed", c.seed);
    c.max_frames = j.value("max_frames", c.max_frames);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("train: ") + e.what());
  }
  if (j.contains("freeze_mode")) {
    if (!j["freeze_mode"].is_string()) fail(ErrorCode::InvalidConfig, "freeze_mode must be a string");
    try {
      c.freeze_mode = parse_freeze_mode(j["freeze_mode"].get<std::string>());
    } catch (const Error& e) {
      fail(ErrorCode::InvalidConfig, e.what());
    }
  }
  c.validate();
  return c;
}

TrainingSession::TrainingSession(Detector& detector, const TrainConfig& config)
    : detector_(detector), config_(config), partition_(apply_freeze(detector, config.freeze_mode)) {
  config.validate();
  auto params = partition_.trainable_parameters();
  if (params.empty()) fail(ErrorCode::InvalidConfig, "no trainable parameters under " + std::string(to_string(config.freeze_mode)));
  optimizer_ = std::make_unique<torch::optim::Adam>(params, torch::optim::AdamOptions(config.learning_rate));
}

double TrainingSession::step(const Batch& batch, int epoch) {
  set_training_mode(detector_, partition_);
  auto logits = detector_.forward_logits(batch);
  auto fake_probs = torch::softmax(logits, 1).select(1, 1);
  auto loss = cross_entropy(batch.labels, fake_probs);
  const double value = loss.item<double>();
  if (!std::isfinite(value)) {
    fail(ErrorCode::DivergenceDetected, "non-finite loss at epoch " + std::to_string(epoch));
  }
  optimizer_->zero_grad();
  loss.backward();
  optimizer_->step();
  return value;
}

double video_accuracy(Detector& detector, const std::vector<Sample>& samples, std::int64_t window_frames) {
  if (samples.empty()) fail(ErrorCode::EmptySplit, "no samples to score");
  std::int64_t correct = 0;
  for (const auto& sample : samples) {
    const auto windows = predict_windows(detector, sample, window_frames);
    double score = 0.0;
    for (const auto& p : windows) score += p.fake_probability();
    score /= double(windows.size());
    const int predicted = score >= 0.5 ? 1 : 0;
    correct += predicted == sample.label_index() ? 1 : 0;
  }
  return double(correct) / double(samples.size());
}

TrainResult train(Detector& detector, const std::vector<Sample>& train_set, const std::vector<Sample>& validation_set,
                  const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  if (train_set.empty()) fail(ErrorCode::EmptySplit, "training set is empty");
  if (validation_set.empty()) fail(ErrorCode::EmptySplit, "validation set is empty");
  torch::manual_seed(config.seed);

  TrainingSession session(detector, config);
  const auto collate_options = detector.collate_options(config.max_frames);
  std::vector<Label> labels;
  for (const auto& s : train_set) labels.push_back(s.clip.label);

  EarlyStopping stopper(config.early_stop_patience, config.max_epochs);
  TrainResult result;
  std::map<std::string, torch::Tensor> best_state;
  for (int epoch = 1;; ++epoch) {
    const std::uint64_t epoch_seed = config.seed * 1000003ULL + std::uint64_t(epoch);
    const auto plan = config.oversample ? oversample_plan(labels, epoch_seed) : shuffled_plan(labels.size(), epoch_seed);
    double loss_sum = 0.0;
    std::size_t loss_items = 0;
    for (std::size_t start = 0; start < plan.size(); start += std::size_t(config.batch_size)) {
      const auto end = std::min(plan.size(), start + std::size_t(config.batch_size));
      std::vector<const Sample*> members;
      for (std::size_t i = start; i < end; ++i) members.push_back(&train_set[plan[i]]);
      const double loss = session.step(collate(members, collate_options), epoch);
      loss_sum += loss * double(members.size());
      loss_items += members.size();
    }
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / double(loss_items);
    record.val_accuracy = video_accuracy(detector, validation_set, config.max_frames);
    if (hooks.validation_metric) record.val_accuracy = hooks.validation_metric(epoch, record.val_accuracy);
    result.history.push_back(record);
    if (hooks.on_epoch) hooks.on_epoch(record);

    const bool stop = stopper.update(record.val_accuracy);
    if (stopper.improved_last()) {
      best_state.clear();
      for (const auto& [name, t] : module_state(detector.root())) best_state[name] = t.clone();
    }
    if (stop) {
      result.early_stopped = epoch < config.max_epochs;
      break;
    }
  }
  load_module_state(detector.root(), best_state);
  detector.root().eval();
  result.best_epoch = stopper.best_epoch();
  result.best_val_accuracy = stopper.best_metric();
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_acc\n";
  out << std::setprecision(17);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_accuracy << '\n';
  return out.str();
}

}  // namespace avsf
