#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/nn.h>

namespace avsf {

struct TcnConfig {
  std::int64_t in_dim = 1536;
  std::vector<std::int64_t> kernel_sizes{3, 5, 7};
  std::int64_t num_blocks = 4;
  std::int64_t channels = 1536;
  double dropout = 0.2;

  void validate() const;
  /// Frames reachable on each side of an output frame.
  std::int64_t receptive_half_width() const;

  nlohmann::json to_json() const;
  static TcnConfig from_json(const nlohmann::json& j);
};

/// One multi-scale block: two rounds of parallel same-length temporal
/// convolutions (one branch per kernel size, channel-concatenated, GELU),
/// then a residual connection. Padded frames are re-zeroed before every
/// convolution so they behave like the convolution's own zero padding.
class MultiscaleBlockImpl : public torch::nn::Module {
 public:
  MultiscaleBlockImpl(std::int64_t in_channels, const TcnConfig& config);

  /// x [B, C_in, T], mask [B, 1, T] (1 = valid) -> [B, C, T]
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& mask);

  torch::nn::ModuleList conv1{nullptr}, conv2{nullptr};
  torch::nn::Conv1d downsample{nullptr};

 private:
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(MultiscaleBlock);

class MsTcnImpl : public torch::nn::Module {
 public:
  explicit MsTcnImpl(const TcnConfig& config);

  /// [B, T, in_dim] -> [B, T, channels]; lengths (int64 [B]) marks valid frames.
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& lengths = {});

  const TcnConfig& config() const { return config_; }

  torch::nn::ModuleList blocks{nullptr};

 private:
  TcnConfig config_;
};
TORCH_MODULE(MsTcn);

/// Mean over the time axis of [T, C] or [B, T, C]; with lengths, only valid
/// frames of each batch row are averaged.
torch::Tensor temporal_pool(const torch::Tensor& seq, const torch::Tensor& lengths = {});

/// Temporal convolution over one fused sequence [T, in_dim] -> [T, channels].
torch::Tensor tcn_forward(const torch::Tensor& fusion, MsTcn& tcn);

struct Prediction {
  std::array<double, 2> logits{0.0, 0.0};
  std::array<double, 2> probs{0.5, 0.5};  // (real, fake)
  std::vector<float> pooled;

  double fake_probability() const { return probs[1]; }
};

/// Softmax of two logits computed in double precision.
std::array<double, 2> softmax2(double real_logit, double fake_logit);

/// Linear layer to two logits, then softmax.
Prediction classify(const torch::Tensor& pooled, torch::nn::Linear& classifier);

/// Builds a Prediction from logits [2] (and optionally the pooled vector).
Prediction make_prediction(const torch::Tensor& logits, const torch::Tensor& pooled = {});

}  // namespace avsf
