#pragma once

#include <cstdint>

#include <torch/nn.h>

namespace avsf {

struct TransformerConfig {
  std::int64_t dim = 768;
  std::int64_t heads = 12;
  std::int64_t ffn_dim = 3072;
  std::int64_t layers = 12;
  bool pre_norm = true;
  double dropout = 0.0;
};

/// Multi-head self-attention with separate q/k/v projections. The optional
/// key padding mask is [B, T] bool, true at padded positions.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  SelfAttentionImpl(std::int64_t dim, std::int64_t heads);

  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& key_padding_mask = {});

  torch::nn::Linear q_proj{nullptr}, k_proj{nullptr}, v_proj{nullptr}, out_proj{nullptr};

 private:
  std::int64_t heads_;
};
TORCH_MODULE(SelfAttention);

/// One encoder layer: attention and a GELU feed-forward, each with a residual.
/// Pre-norm applies LayerNorm before each sublayer, post-norm after the residual.
class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(const TransformerConfig& config);

  torch::Tensor forward(torch::Tensor x, const torch::Tensor& key_padding_mask = {});

  SelfAttention self_attn{nullptr};
  torch::nn::LayerNorm self_attn_layer_norm{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::LayerNorm final_layer_norm{nullptr};

 private:
  bool pre_norm_;
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(EncoderLayer);

/// Stack of encoder layers. Pre-norm stacks end with a LayerNorm; post-norm
/// stacks normalize their input instead.
class TransformerEncoderImpl : public torch::nn::Module {
 public:
  TransformerEncoderImpl(const TransformerConfig& config);

  torch::Tensor forward(torch::Tensor x, const torch::Tensor& key_padding_mask = {});

  const TransformerConfig& config() const { return config_; }

  torch::nn::ModuleList layers{nullptr};
  torch::nn::LayerNorm layer_norm{nullptr};

 private:
  TransformerConfig config_;
};
TORCH_MODULE(TransformerEncoder);

/// [B, max_len] bool mask, true where t >= lengths[b].
torch::Tensor padding_mask(const torch::Tensor& lengths, std::int64_t max_len);

}  // namespace avsf
