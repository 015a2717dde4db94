#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>

#include "avsf/transformer.hpp"

namespace avsf {

struct FaceEncoderConfig {
  std::int64_t num_frames = 16;
  std::int64_t image_size = 224;
  std::int64_t patch_size = 16;
  std::int64_t tubelet_t = 2;
  std::int64_t in_channels = 3;
  std::int64_t embed_dim = 768;
  std::int64_t spatial_layers = 12;
  std::int64_t temporal_layers = 4;
  std::int64_t num_heads = 12;
  std::int64_t ffn_dim = 3072;
  bool pre_norm = true;
  double dropout = 0.0;

  void validate() const;
  std::int64_t temporal_tokens() const { return num_frames / tubelet_t; }
  std::int64_t spatial_tokens() const { return (image_size / patch_size) * (image_size / patch_size); }

  nlohmann::json to_json() const;
  static FaceEncoderConfig from_json(const nlohmann::json& j);
};

/// One fixed-length face clip, [C, F, H, W] float RGB in [0, 1].
struct FaceClip {
  torch::Tensor frames;
  std::string clip_id;
};

/// Factorized spatiotemporal transformer: tubelet tokens, a spatial
/// transformer per temporal index (with class token), then a temporal
/// transformer over the per-index class tokens whose class token is the
/// clip representation.
class FaceEncoderImpl : public torch::nn::Module {
 public:
  explicit FaceEncoderImpl(const FaceEncoderConfig& config);

  /// [B, C, F, H, W] -> [B, F/t, (H/p)(W/p), D]
  torch::Tensor tubelet_embed(const torch::Tensor& clips);

  /// [B, C, F, H, W] -> [B, D]
  torch::Tensor forward(const torch::Tensor& clips);

  const FaceEncoderConfig& config() const { return config_; }

  torch::nn::Conv3d patch_embed{nullptr};
  torch::Tensor spatial_cls, spatial_pos, temporal_cls, temporal_pos;
  TransformerEncoder spatial{nullptr}, temporal{nullptr};

 private:
  void check_input(const torch::Tensor& clips) const;

  FaceEncoderConfig config_;
};
TORCH_MODULE(FaceEncoder);

/// Splits 25 fps RGB frames (uint8 [N, H, W, 3]) into consecutive
/// non-overlapping windows of config.num_frames, resized to image_size; the
/// final partial window repeats its last frame.
std::vector<FaceClip> clips_from_video(const torch::Tensor& frames, const FaceEncoderConfig& config,
                                       const std::string& clip_id = {});

/// Stacks clips into [n, C, F, H, W].
torch::Tensor stack_clips(const std::vector<FaceClip>& clips);

/// Single-clip inference; throws NonFiniteActivation on non-finite output.
torch::Tensor face_encode(const FaceClip& clip, FaceEncoder& encoder);

/// Mean of per-clip vectors.
torch::Tensor video_face_vector(const torch::Tensor& stacked_clips, FaceEncoder& encoder);

}  // namespace avsf
