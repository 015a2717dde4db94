#include "avsf/ensemble.hpp"

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {

EnsembleHeadImpl::EnsembleHeadImpl(std::int64_t av_dim, std::int64_t face_dim, std::int64_t hidden)
    : av_dim_(av_dim), face_dim_(face_dim) {
  if (av_dim <= 0 || face_dim <= 0 || hidden <= 0) fail(ErrorCode::InvalidConfig, "ensemble widths must be positive");
  fc1 = register_module("fc1", torch::nn::Linear(av_dim + face_dim, hidden));
  fc2 = register_module("fc2", torch::nn::Linear(hidden, 2));
}

torch::Tensor EnsembleHeadImpl::forward(const torch::Tensor& av_pooled, const torch::Tensor& face_vec) {
  if (av_pooled.dim() != 2 || face_vec.dim() != 2 || av_pooled.size(1) != av_dim_ ||
      face_vec.size(1) != face_dim_ || av_pooled.size(0) != face_vec.size(0)) {
    fail(ErrorCode::ShapeMismatch, "ensemble head expects [B, " + std::to_string(av_dim_) + "] and [B, " +
                                       std::to_string(face_dim_) + "]");
  }
  return fc2(torch::gelu(fc1(torch::cat({av_pooled, face_vec}, 1))));
}

Prediction ensemble_classify(const torch::Tensor& av_pooled, const torch::Tensor& face_vec, EnsembleHead& head) {
  if (av_pooled.dim() != 1 || face_vec.dim() != 1) fail(ErrorCode::ShapeMismatch, "expected two vectors");
  torch::NoGradGuard no_grad;
  const auto dtype = head->fc1->weight.scalar_type();
  auto logits = head->forward(av_pooled.to(dtype).unsqueeze(0), face_vec.to(dtype).unsqueeze(0)).squeeze(0);
  return make_prediction(logits, torch::cat({av_pooled, face_vec}));
}

}  // namespace avsf
