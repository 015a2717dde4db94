#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>

#include "avsf/av_encoder.hpp"
#include "avsf/dataset.hpp"
#include "avsf/ensemble.hpp"
#include "avsf/face_encoder.hpp"
#include "avsf/temporal_head.hpp"

namespace avsf {

/// Architecture of every branch. Presets: "full" (768-D, ResNet-18 frontend,
/// 224² face clips), "desk128", "desk" (64-D) and "micro" (8-D, for tests).
struct ModelConfig {
  std::string preset = "full";
  EncoderConfig encoder;
  TcnConfig tcn;
  FaceEncoderConfig face;
  std::int64_t ensemble_hidden = 512;
  bool normalize_sync = false;

  void validate() const;
  nlohmann::json to_json() const;
  /// Starts from j["preset"] (default "full") and applies per-field overrides.
  static ModelConfig from_json(const nlohmann::json& j);
  static ModelConfig preset_named(const std::string& name);
};

/// Model-ready minibatch. Sequences are truncated/padded to a common T;
/// `lengths` holds each row's valid frame count.
struct Batch {
  torch::Tensor lips;     // [B, 1, T, 96, 96]
  torch::Tensor audio;    // [B, T, 104]
  torch::Tensor lengths;  // int64 [B]
  torch::Tensor labels;   // int64 [B]
  std::vector<torch::Tensor> face_clips;  // per row [n, C, F, H, W]; empty when unused
  std::vector<std::string> clip_ids;

  std::int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
};

struct CollateOptions {
  std::int64_t max_frames = 0;  // 0 = no cap
  bool pad_to_median = true;    // false pads to the longest row instead
  const FaceEncoderConfig* face = nullptr;
  torch::ScalarType dtype = torch::kFloat32;
};

Batch collate(std::span<const Sample* const> samples, const CollateOptions& options);
Batch collate_one(const Sample& sample, const CollateOptions& options);

struct AvOutputs {
  torch::Tensor av, v, a, sync, fusion, tcn, pooled, logits;
};

/// Lip/audio branch: three encoder modes, sync check, fusion, MS-TCN,
/// temporal pooling and a linear classifier.
class AvLipSyncPlusImpl : public torch::nn::Module {
 public:
  explicit AvLipSyncPlusImpl(const ModelConfig& config);

  AvOutputs forward(const torch::Tensor& lips, const torch::Tensor& audio, const torch::Tensor& lengths = {});

  AvEncoder encoder{nullptr};
  MsTcn tcn{nullptr};
  torch::nn::Linear classifier{nullptr};

 private:
  bool normalize_sync_;
};
TORCH_MODULE(AvLipSyncPlus);

class EnsembleModelImpl : public torch::nn::Module {
 public:
  explicit EnsembleModelImpl(const ModelConfig& config);

  /// Face vector per row = mean over that row's clips.
  torch::Tensor face_vectors(const std::vector<torch::Tensor>& face_clips);

  AvLipSyncPlus av{nullptr};
  FaceEncoder face{nullptr};
  EnsembleHead head{nullptr};
};
TORCH_MODULE(EnsembleModel);

enum class ParamRole {
  VisualFrontend,
  AudioFrontend,
  Transformer,
  TemporalHead,
  Classifier,
  FaceEncoder,
  EnsembleHead,
};

std::string_view to_string(ParamRole role);

/// Named slice of a detector's parameters. `modules` are switched to eval
/// mode while the group is frozen; `loose` holds parameters registered
/// directly on a parent module (e.g. positional embeddings).
struct ParameterGroup {
  std::string name;
  ParamRole role;
  std::vector<std::shared_ptr<torch::nn::Module>> modules;
  std::vector<torch::Tensor> loose;

  std::vector<torch::Tensor> parameters() const;
};

/// Common face of the plain and face-ensemble detectors used by the trainer,
/// evaluator and checkpoints.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual std::string kind() const = 0;  // "av" or "ensemble"
  virtual const ModelConfig& config() const = 0;
  virtual bool uses_faces() const = 0;
  virtual torch::nn::Module& root() = 0;
  virtual std::shared_ptr<torch::nn::Module> root_ptr() = 0;
  virtual std::vector<ParameterGroup> parameter_groups() = 0;

  struct Output {
    torch::Tensor logits;          // [B, 2]
    torch::Tensor representation;  // [B, width], input of the final classifier
  };

  virtual Output run(const Batch& batch) = 0;
  torch::Tensor forward_logits(const Batch& batch) { return run(batch).logits; }

  torch::ScalarType dtype();
  CollateOptions collate_options(std::int64_t max_frames = 0);
};

class AvDetector final : public Detector {
 public:
  explicit AvDetector(const ModelConfig& config);
  explicit AvDetector(AvLipSyncPlus model, ModelConfig config);

  std::string kind() const override { return "av"; }
  const ModelConfig& config() const override { return config_; }
  bool uses_faces() const override { return false; }
  torch::nn::Module& root() override { return *model_; }
  std::shared_ptr<torch::nn::Module> root_ptr() override { return model_.ptr(); }
  std::vector<ParameterGroup> parameter_groups() override;
  Output run(const Batch& batch) override;

  AvOutputs outputs(const Batch& batch);
  AvLipSyncPlus& model() { return model_; }

 private:
  ModelConfig config_;
  AvLipSyncPlus model_;
};

class EnsembleDetector final : public Detector {
 public:
  explicit EnsembleDetector(const ModelConfig& config);

  std::string kind() const override { return "ensemble"; }
  const ModelConfig& config() const override { return config_; }
  bool uses_faces() const override { return true; }
  torch::nn::Module& root() override { return *model_; }
  std::shared_ptr<torch::nn::Module> root_ptr() override { return model_.ptr(); }
  std::vector<ParameterGroup> parameter_groups() override;
  Output run(const Batch& batch) override;

  EnsembleModel& model() { return model_; }

 private:
  ModelConfig config_;
  EnsembleModel model_;
};

std::vector<ParameterGroup> av_parameter_groups(AvLipSyncPlus& model, const std::string& prefix = {});

/// Full clip through one branch: returns per-window predictions over
/// consecutive windows of `window_frames` (the last may be shorter).
std::vector<Prediction> predict_windows(Detector& detector, const Sample& sample, std::int64_t window_frames);

/// AV-branch inference on one aligned pair (whole sequence).
Prediction predict(AvLipSyncPlus& model, const AlignedPair& pair);

/// Ensemble inference: AV branch up to temporal pooling, face branch with
/// clip-mean aggregation, then the ensemble classifier.
Prediction ensemble_forward(const AlignedPair& pair, const std::vector<FaceClip>& clips, EnsembleModel& model);

}  // namespace avsf
