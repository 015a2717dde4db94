#include "avsf/transformer.hpp"

#include <cmath>

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {

namespace F = torch::nn::functional;

SelfAttentionImpl::SelfAttentionImpl(std::int64_t dim, std::int64_t heads) : heads_(heads) {
  if (heads <= 0 || dim % heads != 0) {
    fail(ErrorCode::InvalidConfig, "embedding dim " + std::to_string(dim) +
                                       " is not divisible by " + std::to_string(heads) + " heads");
  }
  q_proj = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask) {
  const auto batch = x.size(0), steps = x.size(1), dim = x.size(2);
  const auto head_dim = dim / heads_;
  auto split = [&](const torch::Tensor& t) {
    return t.view({batch, steps, heads_, head_dim}).transpose(1, 2);  // [B, H, T, hd]
  };
  auto q = split(q_proj(x)) * (1.0 / std::sqrt(double(head_dim)));
  auto k = split(k_proj(x));
  auto v = split(v_proj(x));
  auto scores = torch::matmul(q, k.transpose(-2, -1));  // [B, H, T, T]
  if (key_padding_mask.defined()) {
    scores = scores.masked_fill(key_padding_mask.view({batch, 1, 1, steps}),
                                -std::numeric_limits<double>::infinity());
  }
  auto context = torch::matmul(torch::softmax(scores, -1), v);
  return out_proj(context.transpose(1, 2).reshape({batch, steps, dim}));
}

EncoderLayerImpl::EncoderLayerImpl(const TransformerConfig& config) : pre_norm_(config.pre_norm) {
  self_attn = register_module("self_attn", SelfAttention(config.dim, config.heads));
  self_attn_layer_norm = register_module("self_attn_layer_norm",
                                         torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.dim})));
  fc1 = register_module("fc1", torch::nn::Linear(config.dim, config.ffn_dim));
  fc2 = register_module("fc2", torch::nn::Linear(config.ffn_dim, config.dim));
  final_layer_norm = register_module("final_layer_norm",
                                     torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.dim})));
  dropout_ = register_module("dropout", torch::nn::Dropout(config.dropout));
}

torch::Tensor EncoderLayerImpl::forward(torch::Tensor x, const torch::Tensor& key_padding_mask) {
  if (pre_norm_) {
    x = x + dropout_(self_attn(self_attn_layer_norm(x), key_padding_mask));
    x = x + dropout_(fc2(dropout_(F::gelu(fc1(final_layer_norm(x))))));
    return x;
  }
  x = self_attn_layer_norm(x + dropout_(self_attn(x, key_padding_mask)));
  x = final_layer_norm(x + dropout_(fc2(dropout_(F::gelu(fc1(x))))));
  return x;
}

TransformerEncoderImpl::TransformerEncoderImpl(const TransformerConfig& config) : config_(config) {
  layers = register_module("layers", torch::nn::ModuleList());
  for (std::int64_t i = 0; i < config.layers; ++i) layers->push_back(EncoderLayer(config));
  layer_norm = register_module("layer_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({config.dim})));
}

torch::Tensor TransformerEncoderImpl::forward(torch::Tensor x, const torch::Tensor& key_padding_mask) {
  if (!config_.pre_norm) x = layer_norm(x);
  for (const auto& layer : *layers) x = layer->as<EncoderLayer>()->forward(x, key_padding_mask);
  if (config_.pre_norm) x = layer_norm(x);
  return x;
}

torch::Tensor padding_mask(const torch::Tensor& lengths, std::int64_t max_len) {
  auto steps = torch::arange(max_len, lengths.options().dtype(torch::kInt64)).unsqueeze(0);
  return steps >= lengths.to(torch::kInt64).unsqueeze(1);
}

}  // namespace avsf
