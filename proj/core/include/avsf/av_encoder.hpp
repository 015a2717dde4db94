#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>
#include <torch/nn.h>

#include "avsf/alignment.hpp"
#include "avsf/embedding.hpp"
#include "avsf/transformer.hpp"

namespace avsf {

enum class VisualFrontendKind { Resnet18With3dFront, TinyConv };
enum class EncoderMode { Joint, AudioDropout, VideoDropout };

std::string_view to_string(VisualFrontendKind kind);
std::string_view to_string(EncoderMode mode);
EmbeddingKind embedding_kind(EncoderMode mode);

struct EncoderConfig {
  std::int64_t embed_dim = 768;
  std::int64_t num_layers = 12;
  std::int64_t num_heads = 12;
  std::int64_t ffn_dim = 3072;
  VisualFrontendKind visual_frontend = VisualFrontendKind::Resnet18With3dFront;
  std::int64_t audio_in_dim = 104;
  std::int64_t resnet_width = 64;  // channels of the first residual stage
  std::int64_t tiny_channels = 8;  // first conv of the tiny frontend; the second doubles it
  std::int64_t max_positions = 1024;
  bool pre_norm = true;
  double dropout = 0.0;

  void validate() const;
  TransformerConfig transformer() const;
  std::int64_t visual_feature_dim() const;

  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
};

/// 3-D convolutional stem followed by a per-frame 2-D ResNet-18 trunk.
class ResNetFrontendImpl : public torch::nn::Module {
 public:
  explicit ResNetFrontendImpl(std::int64_t width);

  /// [B, 1, T, H, W] -> [B, T, 8 * width]
  torch::Tensor forward(const torch::Tensor& lips);

  std::int64_t output_dim() const { return 8 * width_; }

 private:
  std::int64_t width_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential trunk_{nullptr};
};
TORCH_MODULE(ResNetFrontend);

/// Two-convolution frontend for desk-scale models:
/// conv3d(3×5×5, stride 1×2×2) → ReLU → per-frame conv2d(3×3, stride 2) → ReLU → spatial mean.
class TinyConvFrontendImpl : public torch::nn::Module {
 public:
  explicit TinyConvFrontendImpl(std::int64_t channels);

  torch::Tensor forward(const torch::Tensor& lips);

  std::int64_t output_dim() const { return 2 * channels_; }

  torch::nn::Conv3d conv3d{nullptr};
  torch::nn::Conv2d conv2d{nullptr};

 private:
  std::int64_t channels_;
};
TORCH_MODULE(TinyConvFrontend);

inline constexpr double kLipMean = 0.421;
inline constexpr double kLipStd = 0.165;
inline constexpr double kAudioNormEps = 1e-5;

/// Zero mean, unit variance over all valid frames and bands of each clip
/// ([B, T, 104]; mask true = padding). Padded frames come out as zeros.
torch::Tensor normalize_utterance(const torch::Tensor& audio, const torch::Tensor& key_padding_mask = {});

/// Per-modality frame features before fusion.
struct FrameFeatures {
  torch::Tensor visual;  // [B, T, Dv]
  torch::Tensor audio;   // [B, T, D]
};

/// Shared audio-visual transformer encoder. Visual and acoustic frame
/// features are concatenated, normalized, projected to D, given learned
/// positions and passed through the transformer. Modality dropout zero-fills
/// the dropped stream's frame features before concatenation.
class AvEncoderImpl : public torch::nn::Module {
 public:
  explicit AvEncoderImpl(const EncoderConfig& config);

  /// Lips are standardized with fixed pixel statistics; audio is
  /// standardized over the valid frames of each clip.
  FrameFeatures extract(const torch::Tensor& lips, const torch::Tensor& audio,
                        const torch::Tensor& key_padding_mask = {});

  /// Transformer pass over precomputed frame features in the given mode.
  torch::Tensor encode_features(const FrameFeatures& features, EncoderMode mode,
                                const torch::Tensor& key_padding_mask = {});

  /// lips [B, 1, T, 96, 96], audio [B, T, 104] -> [B, T, D]
  torch::Tensor forward(const torch::Tensor& lips, const torch::Tensor& audio, EncoderMode mode,
                        const torch::Tensor& key_padding_mask = {});

  const EncoderConfig& config() const { return config_; }

  torch::nn::Module& visual_frontend_module();

  ResNetFrontend resnet{nullptr};
  TinyConvFrontend tiny{nullptr};
  torch::nn::Linear audio_frontend{nullptr};
  torch::nn::LayerNorm feature_norm{nullptr};
  torch::nn::Linear post_extract_proj{nullptr};
  torch::Tensor pos_embed;
  TransformerEncoder encoder{nullptr};

 private:
  EncoderConfig config_;
};
TORCH_MODULE(AvEncoder);

/// Inference over one aligned clip: returns T×D embeddings of kind AV, V or A.
/// Throws NonFiniteActivation when any output is non-finite.
EmbeddingSequence encode(const AlignedPair& pair, EncoderMode mode, AvEncoder& encoder,
                         const std::string& clip_id = {});

}  // namespace avsf
