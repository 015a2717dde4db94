#include "avsf/face_encoder.hpp"

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {

namespace nn = torch::nn;

void FaceEncoderConfig::validate() const {
  if (patch_size <= 0 || image_size <= 0 || image_size % patch_size != 0) {
    fail(ErrorCode::InvalidConfig, "face.image_size must be divisible by face.patch_size");
  }
  if (tubelet_t <= 0 || num_frames <= 0 || num_frames % tubelet_t != 0) {
    fail(ErrorCode::InvalidConfig, "face.num_frames must be divisible by face.tubelet_t");
  }
  if (embed_dim <= 0 || num_heads <= 0 || embed_dim % num_heads != 0) {
    fail(ErrorCode::InvalidConfig, "face.embed_dim must be divisible by face.num_heads");
  }
  if (spatial_layers < 0 || temporal_layers < 0 || ffn_dim <= 0 || in_channels <= 0) {
    fail(ErrorCode::InvalidConfig, "face encoder dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) fail(ErrorCode::InvalidConfig, "face.dropout must be in [0, 1)");
}

nlohmann::json FaceEncoderConfig::to_json() const {
  return {{"num_frames", num_frames},     {"image_size", image_size},
          {"patch_size", patch_size},     {"tubelet_t", tubelet_t},
          {"in_channels", in_channels},   {"embed_dim", embed_dim},
          {"spatial_layers", spatial_layers}, {"temporal_layers", temporal_layers},
          {"num_heads", num_heads},       {"ffn_dim", ffn_dim},
          {"pre_norm", pre_norm},         {"dropout", dropout}};
}

FaceEncoderConfig FaceEncoderConfig::from_json(const nlohmann::json& j) {
  FaceEncoderConfig c;
  c.num_frames = j.value("num_frames", c.num_frames);
  c.image_size = j.value("image_size", c.image_size);
  c.patch_size = j.value("patch_size", c.patch_size);
  c.tubelet_t = j.value("tubelet_t", c.tubelet_t);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.spatial_layers = j.value("spatial_layers", c.spatial_layers);
  c.temporal_layers = j.value("temporal_layers", c.temporal_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.pre_norm = j.value("pre_norm", c.pre_norm);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

FaceEncoderImpl::FaceEncoderImpl(const FaceEncoderConfig& config) : config_(config) {
  config.validate();
  const auto d = config.embed_dim;
  patch_embed = register_module(
      "patch_embed",
      nn::Conv3d(nn::Conv3dOptions(config.in_channels, d, {config.tubelet_t, config.patch_size, config.patch_size})
                     .stride({config.tubelet_t, config.patch_size, config.patch_size})));
  spatial_cls = register_parameter("spatial_cls", torch::randn({d}) * 0.02);
  spatial_pos = register_parameter("spatial_pos", torch::randn({config.spatial_tokens() + 1, d}) * 0.02);
  temporal_cls = register_parameter("temporal_cls", torch::randn({d}) * 0.02);
  temporal_pos = register_parameter("temporal_pos", torch::randn({config.temporal_tokens() + 1, d}) * 0.02);
  TransformerConfig spatial_cfg{d, config.num_heads, config.ffn_dim, config.spatial_layers, config.pre_norm,
                                config.dropout};
  TransformerConfig temporal_cfg = spatial_cfg;
  temporal_cfg.layers = config.temporal_layers;
  spatial = register_module("spatial", TransformerEncoder(spatial_cfg));
  temporal = register_module("temporal", TransformerEncoder(temporal_cfg));
}

void FaceEncoderImpl::check_input(const torch::Tensor& clips) const {
  if (clips.dim() != 5 || clips.size(1) != config_.in_channels || clips.size(2) != config_.num_frames ||
      clips.size(3) != config_.image_size || clips.size(4) != config_.image_size) {
    fail(ErrorCode::ShapeMismatch,
         "face clips must be [B, " + std::to_string(config_.in_channels) + ", " +
             std::to_string(config_.num_frames) + ", " + std::to_string(config_.image_size) + ", " +
             std::to_string(config_.image_size) + "]");
  }
}

torch::Tensor FaceEncoderImpl::tubelet_embed(const torch::Tensor& clips) {
  check_input(clips);
  auto x = patch_embed(clips);  // [B, D, nt, gh, gw]
  const auto batch = x.size(0), d = x.size(1), nt = x.size(2);
  return x.flatten(3).permute({0, 2, 3, 1}).reshape({batch, nt, -1, d});
}

torch::Tensor FaceEncoderImpl::forward(const torch::Tensor& clips) {
  auto tokens = tubelet_embed(clips);  // [B, nt, np, D]
  const auto batch = tokens.size(0), nt = tokens.size(1), np = tokens.size(2), d = tokens.size(3);
  auto spatial_in = tokens.reshape({batch * nt, np, d});
  auto cls = spatial_cls.view({1, 1, d}).expand({batch * nt, 1, d});
  spatial_in = torch::cat({cls, spatial_in}, 1) + spatial_pos.unsqueeze(0);
  auto per_index = spatial(spatial_in).select(1, 0).reshape({batch, nt, d});
  auto tcls = temporal_cls.view({1, 1, d}).expand({batch, 1, d});
  auto temporal_in = torch::cat({tcls, per_index}, 1) + temporal_pos.unsqueeze(0);
  return temporal(temporal_in).select(1, 0);
}

std::vector<FaceClip> clips_from_video(const torch::Tensor& frames, const FaceEncoderConfig& config,
                                       const std::string& clip_id) {
  if (!frames.defined() || frames.dim() != 4 || frames.size(0) == 0) {
    fail(ErrorCode::EmptyVideo, "no frames to split into face clips");
  }
  if (frames.size(3) != config.in_channels) {
    fail(ErrorCode::ShapeMismatch, "face frames must be [N, H, W, " + std::to_string(config.in_channels) + "]");
  }
  auto video = frames.permute({0, 3, 1, 2}).to(torch::kFloat32);  // [N, C, H, W]
  if (frames.scalar_type() == torch::kUInt8) video = video / 255.0;
  if (video.size(2) != config.image_size || video.size(3) != config.image_size) {
    namespace F = torch::nn::functional;
    video = F::interpolate(video, F::InterpolateFuncOptions()
                                      .size(std::vector<std::int64_t>{config.image_size, config.image_size})
                                      .mode(torch::kBilinear)
                                      .align_corners(false)
                                      .antialias(true))
                .clamp(0.0, 1.0);
  }
  const auto n = video.size(0);
  std::vector<FaceClip> clips;
  for (std::int64_t start = 0; start < n; start += config.num_frames) {
    auto idx = torch::arange(start, start + config.num_frames, torch::kInt64).clamp_max(n - 1);
    auto window = video.index_select(0, idx).permute({1, 0, 2, 3}).contiguous();  // [C, F, H, W]
    clips.push_back({window, clip_id});
  }
  return clips;
}

torch::Tensor stack_clips(const std::vector<FaceClip>& clips) {
  if (clips.empty()) fail(ErrorCode::EmptyVideo, "no face clips");
  std::vector<torch::Tensor> frames;
  for (const auto& clip : clips) frames.push_back(clip.frames);
  return torch::stack(frames);
}

torch::Tensor face_encode(const FaceClip& clip, FaceEncoder& encoder) {
  torch::NoGradGuard no_grad;
  const bool was_training = encoder->is_training();
  encoder->eval();
  auto out = encoder->forward(clip.frames.to(encoder->spatial_pos.scalar_type()).unsqueeze(0)).squeeze(0);
  encoder->train(was_training);
  if (!torch::isfinite(out).all().item<bool>()) {
    fail(ErrorCode::NonFiniteActivation, "face encoder produced non-finite values");
  }
  return out;
}

torch::Tensor video_face_vector(const torch::Tensor& stacked_clips, FaceEncoder& encoder) {
  return encoder->forward(stacked_clips).mean(0);
}

}  // namespace avsf
