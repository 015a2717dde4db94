#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/optim.h>

#include "avsf/dataset.hpp"
#include "avsf/model.hpp"

namespace avsf {

enum class FreezeMode {
  FreezeFrontendAndTransformer,
  FreezeFrontendOnly,
  FullFinetune,
  EnsembleFrozenBackbones,
  EnsembleJoint,
};

std::string_view to_string(FreezeMode mode);
FreezeMode parse_freeze_mode(std::string_view text);

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy of fake-class probabilities, clamped to
/// [1e-7, 1 - 1e-7]. labels: int64 [N] in {0, 1}.
torch::Tensor cross_entropy(const torch::Tensor& labels, const torch::Tensor& fake_probs);
double cross_entropy(std::span<const int> labels, std::span<const double> fake_probs);

struct ParameterPartition {
  std::vector<ParameterGroup> trainable;
  std::vector<ParameterGroup> frozen;

  std::vector<torch::Tensor> trainable_parameters() const;
  std::vector<torch::Tensor> frozen_parameters() const;
};

/// Marks parameters trainable or frozen (requires_grad) for a freeze mode.
/// The temporal head and classifier always train in non-ensemble modes;
/// ensemble modes apply only to ensemble detectors and vice versa.
ParameterPartition apply_freeze(Detector& detector, FreezeMode mode);

/// Training mode for the detector with frozen groups held in eval mode.
void set_training_mode(Detector& detector, const ParameterPartition& partition);

/// Stops after `patience` consecutive epochs without a strict improvement,
/// or at `max_epochs`.
class EarlyStopping {
 public:
  EarlyStopping(int patience, int max_epochs);

  /// Records one epoch's metric; returns true when training should stop.
  bool update(double metric);

  int epochs_seen() const { return epochs_; }
  int best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }
  bool improved_last() const { return improved_last_; }

 private:
  int patience_, max_epochs_;
  int epochs_ = 0, best_epoch_ = 0, stale_ = 0;
  double best_ = -1.0;
  bool improved_last_ = false;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  int max_epochs = 30;
  int batch_size = 8;
  int early_stop_patience = 5;
  FreezeMode freeze_mode = FreezeMode::FullFinetune;
  bool oversample = true;
  std::uint64_t seed = 0;
  std::int64_t max_frames = 0;  // 0 = no cap on batch length
  double validation_fraction = 0.1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// One optimizer over the trainable partition of a detector.
class TrainingSession {
 public:
  TrainingSession(Detector& detector, const TrainConfig& config);

  /// One Adam step on a batch; returns the batch loss. Throws
  /// DivergenceDetected when the loss is not finite.
  double step(const Batch& batch, int epoch = 0);

  const ParameterPartition& partition() const { return partition_; }

 private:
  Detector& detector_;
  TrainConfig config_;
  ParameterPartition partition_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
};

struct TrainHooks {
  /// Replaces the measured validation accuracy (epoch, measured) -> used.
  std::function<double(int, double)> validation_metric;
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Video-level accuracy: mean window fake probability, fake iff ≥ 0.5.
double video_accuracy(Detector& detector, const std::vector<Sample>& samples, std::int64_t window_frames);

/// Adam training with per-epoch validation, early stopping and restoration
/// of the best-validation weights.
TrainResult train(Detector& detector, const std::vector<Sample>& train_set, const std::vector<Sample>& validation_set,
                  const TrainConfig& config, const TrainHooks& hooks = {});

std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace avsf
