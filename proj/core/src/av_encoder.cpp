#include "avsf/av_encoder.hpp"

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {
namespace {

namespace nn = torch::nn;

class BasicBlockImpl : public nn::Module {
 public:
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
    conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
    bn1 = register_module("bn1", nn::BatchNorm2d(out));
    relu1 = register_module("relu1", nn::PReLU(nn::PReLUOptions().num_parameters(out)));
    conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
    bn2 = register_module("bn2", nn::BatchNorm2d(out));
    relu2 = register_module("relu2", nn::PReLU(nn::PReLUOptions().num_parameters(out)));
    if (stride != 1 || in != out) {
      downsample = register_module(
          "downsample", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)),
                                       nn::BatchNorm2d(out)));
    }
  }

  torch::Tensor forward(const torch::Tensor& x) {
    auto y = relu1(bn1(conv1(x)));
    y = bn2(conv2(y));
    auto shortcut = downsample ? downsample->forward(x) : x;
    return relu2(y + shortcut);
  }

  nn::Conv2d conv1{nullptr}, conv2{nullptr};
  nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  nn::PReLU relu1{nullptr}, relu2{nullptr};
  nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

}  // namespace

std::string_view to_string(VisualFrontendKind kind) {
  return kind == VisualFrontendKind::TinyConv ? "tiny_conv" : "resnet18_3dfront";
}

std::string_view to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Joint: return "joint";
    case EncoderMode::AudioDropout: return "audio_dropout";
    case EncoderMode::VideoDropout: return "video_dropout";
  }
  return "joint";
}

EmbeddingKind embedding_kind(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Joint: return EmbeddingKind::AV;
    case EncoderMode::AudioDropout: return EmbeddingKind::V;
    case EncoderMode::VideoDropout: return EmbeddingKind::A;
  }
  return EmbeddingKind::AV;
}

void EncoderConfig::validate() const {
  if (embed_dim <= 0) fail(ErrorCode::InvalidConfig, "encoder.embed_dim must be positive");
  if (num_heads <= 0 || embed_dim % num_heads != 0) {
    fail(ErrorCode::InvalidConfig, "encoder.embed_dim must be divisible by encoder.num_heads");
  }
  if (num_layers < 0 || ffn_dim <= 0 || audio_in_dim <= 0 || max_positions <= 0) {
    fail(ErrorCode::InvalidConfig, "encoder dimensions must be positive");
  }
  if (resnet_width <= 0 || tiny_channels <= 0) {
    fail(ErrorCode::InvalidConfig, "encoder frontend widths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) fail(ErrorCode::InvalidConfig, "encoder.dropout must be in [0, 1)");
}

TransformerConfig EncoderConfig::transformer() const {
  return {embed_dim, num_heads, ffn_dim, num_layers, pre_norm, dropout};
}

std::int64_t EncoderConfig::visual_feature_dim() const {
  return visual_frontend == VisualFrontendKind::TinyConv ? 2 * tiny_channels : 8 * resnet_width;
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"embed_dim", embed_dim},       {"num_layers", num_layers},
          {"num_heads", num_heads},       {"ffn_dim", ffn_dim},
          {"visual_frontend", to_string(visual_frontend)},
          {"audio_in_dim", audio_in_dim}, {"resnet_width", resnet_width},
          {"tiny_channels", tiny_channels}, {"max_positions", max_positions},
          {"pre_norm", pre_norm},         {"dropout", dropout}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.num_heads = j.value("num_heads", c.num_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  const std::string frontend = j.value("visual_frontend", std::string(to_string(c.visual_frontend)));
  if (frontend == "tiny_conv") {
    c.visual_frontend = VisualFrontendKind::TinyConv;
  } else if (frontend == "resnet18_3dfront") {
    c.visual_frontend = VisualFrontendKind::Resnet18With3dFront;
  } else {
    fail(ErrorCode::InvalidConfig, "encoder.visual_frontend: unknown value '" + frontend + "'");
  }
  c.audio_in_dim = j.value("audio_in_dim", c.audio_in_dim);
  c.resnet_width = j.value("resnet_width", c.resnet_width);
  c.tiny_channels = j.value("tiny_channels", c.tiny_channels);
  c.max_positions = j.value("max_positions", c.max_positions);
  c.pre_norm = j.value("pre_norm", c.pre_norm);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

ResNetFrontendImpl::ResNetFrontendImpl(std::int64_t width) : width_(width) {
  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv3d(nn::Conv3dOptions(1, width, {5, 7, 7})
                                            .stride({1, 2, 2})
                                            .padding({2, 3, 3})
                                            .bias(false)),
                             nn::BatchNorm3d(width), nn::PReLU(nn::PReLUOptions().num_parameters(width)),
                             nn::MaxPool3d(nn::MaxPool3dOptions({1, 3, 3}).stride({1, 2, 2}).padding({0, 1, 1}))));
  trunk_ = register_module("trunk", nn::Sequential());
  std::int64_t in = width;
  const std::int64_t stage_widths[] = {width, 2 * width, 4 * width, 8 * width};
  for (int stage = 0; stage < 4; ++stage) {
    const std::int64_t out = stage_widths[stage];
    trunk_->push_back(BasicBlock(in, out, stage == 0 ? 1 : 2));
    trunk_->push_back(BasicBlock(out, out, 1));
    in = out;
  }
  trunk_->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)));
}

torch::Tensor ResNetFrontendImpl::forward(const torch::Tensor& lips) {
  const auto batch = lips.size(0), steps = lips.size(2);
  auto x = stem_->forward(lips);                               // [B, C, T, H', W']
  x = x.transpose(1, 2).reshape({batch * steps, x.size(1), x.size(3), x.size(4)});
  x = trunk_->forward(x);                                      // [B*T, 8w, 1, 1]
  return x.reshape({batch, steps, output_dim()});
}

TinyConvFrontendImpl::TinyConvFrontendImpl(std::int64_t channels) : channels_(channels) {
  conv3d = register_module(
      "conv3d", nn::Conv3d(nn::Conv3dOptions(1, channels, {3, 5, 5}).stride({1, 2, 2}).padding({1, 2, 2})));
  conv2d = register_module("conv2d",
                           nn::Conv2d(nn::Conv2dOptions(channels, 2 * channels, 3).stride(2).padding(1)));
}

torch::Tensor TinyConvFrontendImpl::forward(const torch::Tensor& lips) {
  const auto batch = lips.size(0), steps = lips.size(2);
  auto x = torch::relu(conv3d(lips));  // [B, C, T, H', W']
  x = x.transpose(1, 2).reshape({batch * steps, x.size(1), x.size(3), x.size(4)});
  x = torch::relu(conv2d(x));
  return x.mean({2, 3}).reshape({batch, steps, output_dim()});
}

AvEncoderImpl::AvEncoderImpl(const EncoderConfig& config) : config_(config) {
  config.validate();
  if (config.visual_frontend == VisualFrontendKind::TinyConv) {
    tiny = register_module("visual_frontend", TinyConvFrontend(config.tiny_channels));
  } else {
    resnet = register_module("visual_frontend", ResNetFrontend(config.resnet_width));
  }
  const std::int64_t dv = config.visual_feature_dim();
  const std::int64_t d = config.embed_dim;
  audio_frontend = register_module("audio_frontend", nn::Linear(config.audio_in_dim, d));
  feature_norm = register_module("feature_norm", nn::LayerNorm(nn::LayerNormOptions({dv + d})));
  post_extract_proj = register_module("post_extract_proj", nn::Linear(dv + d, d));
  pos_embed = register_parameter("pos_embed", torch::randn({config.max_positions, d}) * 0.02);
  encoder = register_module("encoder", TransformerEncoder(config.transformer()));
}

torch::nn::Module& AvEncoderImpl::visual_frontend_module() {
  if (tiny) return *tiny;
  return *resnet;
}

torch::Tensor normalize_utterance(const torch::Tensor& audio, const torch::Tensor& key_padding_mask) {
  auto valid = key_padding_mask.defined() ? key_padding_mask.logical_not().unsqueeze(-1).to(audio.scalar_type())
                                          : torch::ones({audio.size(0), audio.size(1), 1}, audio.options());
  const auto count = (valid.sum({1, 2}, true) * audio.size(2)).clamp_min(1.0);
  const auto mean = (audio * valid).sum({1, 2}, true) / count;
  const auto var = ((audio - mean).square() * valid).sum({1, 2}, true) / count;
  return (audio - mean) / torch::sqrt(var + kAudioNormEps) * valid;
}

FrameFeatures AvEncoderImpl::extract(const torch::Tensor& lips, const torch::Tensor& audio,
                                     const torch::Tensor& key_padding_mask) {
  if (lips.dim() != 5 || lips.size(1) != 1 || audio.dim() != 3 || audio.size(2) != config_.audio_in_dim ||
      lips.size(0) != audio.size(0) || lips.size(2) != audio.size(1)) {
    fail(ErrorCode::ShapeMismatch, "expected lips [B,1,T,H,W] and audio [B,T," +
                                       std::to_string(config_.audio_in_dim) + "] with shared B and T");
  }
  if (lips.size(2) > config_.max_positions) {
    fail(ErrorCode::ShapeMismatch, "sequence of " + std::to_string(lips.size(2)) +
                                       " frames exceeds max_positions " + std::to_string(config_.max_positions));
  }
  FrameFeatures features;
  const auto pixels = (lips - kLipMean) / kLipStd;
  features.visual = tiny ? tiny->forward(pixels) : resnet->forward(pixels);
  features.audio = audio_frontend(normalize_utterance(audio, key_padding_mask));
  return features;
}

torch::Tensor AvEncoderImpl::encode_features(const FrameFeatures& features, EncoderMode mode,
                                             const torch::Tensor& key_padding_mask) {
  auto visual = mode == EncoderMode::VideoDropout ? torch::zeros_like(features.visual) : features.visual;
  auto audio = mode == EncoderMode::AudioDropout ? torch::zeros_like(features.audio) : features.audio;
  auto x = post_extract_proj(feature_norm(torch::cat({visual, audio}, -1)));
  const auto steps = x.size(1);
  x = x + pos_embed.slice(0, 0, steps).unsqueeze(0);
  return encoder(x, key_padding_mask);
}

torch::Tensor AvEncoderImpl::forward(const torch::Tensor& lips, const torch::Tensor& audio, EncoderMode mode,
                                     const torch::Tensor& key_padding_mask) {
  return encode_features(extract(lips, audio, key_padding_mask), mode, key_padding_mask);
}

EmbeddingSequence encode(const AlignedPair& pair, EncoderMode mode, AvEncoder& encoder,
                         const std::string& clip_id) {
  if (pair.lips.num_frames() != pair.audio.num_frames()) {
    fail(ErrorCode::ShapeMismatch, "pair is not aligned");
  }
  torch::NoGradGuard no_grad;
  const bool was_training = encoder->is_training();
  encoder->eval();
  const auto dtype = encoder->audio_frontend->weight.scalar_type();
  auto lips = pair.lips.frames.to(dtype).unsqueeze(0);
  auto audio = pair.audio.features.to(dtype).unsqueeze(0);
  auto out = encoder->forward(lips, audio, mode).squeeze(0);
  encoder->train(was_training);
  if (!torch::isfinite(out).all().item<bool>()) {
    fail(ErrorCode::NonFiniteActivation, "encoder produced non-finite values");
  }
  return {out, embedding_kind(mode), clip_id};
}

}  // namespace avsf
