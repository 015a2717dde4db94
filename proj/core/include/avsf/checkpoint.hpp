#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>

#include "avsf/av_encoder.hpp"
#include "avsf/face_encoder.hpp"
#include "avsf/model.hpp"

namespace avsf {

inline constexpr int kCheckpointFormatVersion = 1;

/// Parameters and buffers keyed by their dotted module path.
std::map<std::string, torch::Tensor> module_state(torch::nn::Module& module);

/// Copies tensors into the module. Every parameter and buffer must be
/// present with an identical shape (MissingTensor / ShapeConflict otherwise).
void load_module_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state);

/// Checkpoint directory: config.json (descriptor + format_version) and a
/// tensors.json index with one raw .bin file per tensor.
void save_checkpoint(const std::filesystem::path& dir, torch::nn::Module& module, nlohmann::json descriptor);
nlohmann::json read_checkpoint_descriptor(const std::filesystem::path& dir);

struct ImportReport {
  std::int64_t mapped = 0;
  std::int64_t initialized = 0;
  std::vector<std::string> initialized_names;
};

/// Imports foreign weights through a mapping file: a JSON list of
/// {"source", "target"} pairs or {"target", "action": "init"} entries.
/// Every parameter of `module` must be listed. Nothing is modified unless
/// the whole mapping validates.
ImportReport import_weights(torch::nn::Module& module, const std::filesystem::path& weights_dir,
                            const std::filesystem::path& mapping_path);

AvEncoder load_pretrained(const std::filesystem::path& weights_dir, const std::filesystem::path& mapping_path,
                          const EncoderConfig& config, ImportReport* report = nullptr);

void save_face_encoder(FaceEncoder& encoder, const std::filesystem::path& dir);
FaceEncoder load_face_encoder(const std::filesystem::path& dir);

void save_av_model(AvLipSyncPlus& model, const ModelConfig& config, const std::filesystem::path& dir);

/// "av" checkpoints hold the whole lip/audio detector. "ensemble"
/// checkpoints hold the classifier head and reference av/ and face/
/// sub-checkpoints by relative path and SHA-256.
void save_detector(Detector& detector, const std::filesystem::path& dir);
std::unique_ptr<Detector> load_detector(const std::filesystem::path& dir);

}  // namespace avsf
