#pragma once

#include <cstdint>

#include <torch/nn.h>

#include "avsf/temporal_head.hpp"

namespace avsf {

/// Two-layer classifier over [AV pooled ⊕ face vector].
class EnsembleHeadImpl : public torch::nn::Module {
 public:
  EnsembleHeadImpl(std::int64_t av_dim, std::int64_t face_dim, std::int64_t hidden = 512);

  /// [B, av_dim], [B, face_dim] -> logits [B, 2]
  torch::Tensor forward(const torch::Tensor& av_pooled, const torch::Tensor& face_vec);

  std::int64_t input_dim() const { return av_dim_ + face_dim_; }

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};

 private:
  std::int64_t av_dim_, face_dim_;
};
TORCH_MODULE(EnsembleHead);

Prediction ensemble_classify(const torch::Tensor& av_pooled, const torch::Tensor& face_vec, EnsembleHead& head);

}  // namespace avsf
