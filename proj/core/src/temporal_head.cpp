#include "avsf/temporal_head.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {

namespace nn = torch::nn;

void TcnConfig::validate() const {
  if (in_dim <= 0 || channels <= 0 || num_blocks <= 0) {
    fail(ErrorCode::InvalidConfig, "tcn dimensions must be positive");
  }
  if (kernel_sizes.empty()) fail(ErrorCode::InvalidConfig, "tcn.kernel_sizes must not be empty");
  std::set<std::int64_t> distinct;
  for (auto k : kernel_sizes) {
    if (k <= 0 || k % 2 == 0) fail(ErrorCode::InvalidConfig, "tcn.kernel_sizes must be odd");
    distinct.insert(k);
  }
  if (distinct.size() != kernel_sizes.size()) fail(ErrorCode::InvalidConfig, "tcn.kernel_sizes must be distinct");
  if (channels % std::int64_t(kernel_sizes.size()) != 0) {
    fail(ErrorCode::InvalidConfig, "tcn.channels must be divisible by the number of branches");
  }
  if (dropout < 0.0 || dropout >= 1.0) fail(ErrorCode::InvalidConfig, "tcn.dropout must be in [0, 1)");
}

std::int64_t TcnConfig::receptive_half_width() const {
  const auto widest = *std::max_element(kernel_sizes.begin(), kernel_sizes.end());
  return num_blocks * 2 * ((widest - 1) / 2);
}

nlohmann::json TcnConfig::to_json() const {
  return {{"in_dim", in_dim},
          {"kernel_sizes", kernel_sizes},
          {"num_blocks", num_blocks},
          {"channels", channels},
          {"dropout", dropout}};
}

TcnConfig TcnConfig::from_json(const nlohmann::json& j) {
  TcnConfig c;
  c.in_dim = j.value("in_dim", c.in_dim);
  c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
  c.num_blocks = j.value("num_blocks", c.num_blocks);
  c.channels = j.value("channels", c.channels);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

MultiscaleBlockImpl::MultiscaleBlockImpl(std::int64_t in_channels, const TcnConfig& config) {
  const auto branch = config.channels / std::int64_t(config.kernel_sizes.size());
  conv1 = register_module("conv1", nn::ModuleList());
  conv2 = register_module("conv2", nn::ModuleList());
  for (auto k : config.kernel_sizes) {
    conv1->push_back(nn::Conv1d(nn::Conv1dOptions(in_channels, branch, k).padding((k - 1) / 2)));
    conv2->push_back(nn::Conv1d(nn::Conv1dOptions(config.channels, branch, k).padding((k - 1) / 2)));
  }
  if (in_channels != config.channels) {
    downsample = register_module("downsample", nn::Conv1d(nn::Conv1dOptions(in_channels, config.channels, 1)));
  }
  dropout_ = register_module("dropout", nn::Dropout(config.dropout));
}

torch::Tensor MultiscaleBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& mask) {
  auto run = [&](nn::ModuleList& convs, const torch::Tensor& input) {
    std::vector<torch::Tensor> outs;
    auto masked = input * mask;
    for (const auto& conv : *convs) outs.push_back(conv->as<nn::Conv1d>()->forward(masked));
    return dropout_(torch::gelu(torch::cat(outs, 1)));
  };
  auto y = run(conv2, run(conv1, x));
  auto shortcut = downsample ? downsample(x) : x;
  return torch::gelu(y + shortcut) * mask;
}

MsTcnImpl::MsTcnImpl(const TcnConfig& config) : config_(config) {
  config.validate();
  blocks = register_module("blocks", nn::ModuleList());
  std::int64_t in = config.in_dim;
  for (std::int64_t b = 0; b < config.num_blocks; ++b) {
    blocks->push_back(MultiscaleBlock(in, config));
    in = config.channels;
  }
}

torch::Tensor MsTcnImpl::forward(const torch::Tensor& x, const torch::Tensor& lengths) {
  if (x.dim() != 3 || x.size(2) != config_.in_dim || x.size(1) < 1) {
    fail(ErrorCode::ShapeMismatch, "tcn expects [B, T>=1, " + std::to_string(config_.in_dim) + "]");
  }
  const auto steps = x.size(1);
  torch::Tensor mask;
  if (lengths.defined()) {
    mask = (torch::arange(steps, torch::kInt64).unsqueeze(0) < lengths.to(torch::kInt64).unsqueeze(1))
               .to(x.scalar_type())
               .unsqueeze(1);
  } else {
    mask = torch::ones({x.size(0), 1, steps}, x.options());
  }
  auto y = x.transpose(1, 2);
  for (const auto& block : *blocks) y = block->as<MultiscaleBlock>()->forward(y, mask);
  return y.transpose(1, 2);
}

torch::Tensor temporal_pool(const torch::Tensor& seq, const torch::Tensor& lengths) {
  if (!seq.defined() || seq.dim() < 2 || seq.size(-2) == 0) {
    fail(ErrorCode::EmptySequence, "temporal_pool needs at least one frame");
  }
  if (!lengths.defined() || seq.dim() == 2) return seq.mean(-2);
  const auto steps = seq.size(1);
  auto valid = lengths.to(torch::kInt64);
  if ((valid < 1).any().item<bool>()) fail(ErrorCode::EmptySequence, "a batch row has no valid frames");
  auto mask = (torch::arange(steps, torch::kInt64).unsqueeze(0) < valid.unsqueeze(1)).to(seq.scalar_type());
  return (seq * mask.unsqueeze(-1)).sum(1) / valid.to(seq.scalar_type()).unsqueeze(1);
}

torch::Tensor tcn_forward(const torch::Tensor& fusion, MsTcn& tcn) {
  if (fusion.dim() != 2) fail(ErrorCode::ShapeMismatch, "tcn_forward expects [T, in_dim]");
  return tcn->forward(fusion.unsqueeze(0)).squeeze(0);
}

std::array<double, 2> softmax2(double real_logit, double fake_logit) {
  const double m = std::max(real_logit, fake_logit);
  const double e0 = std::exp(real_logit - m), e1 = std::exp(fake_logit - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

Prediction make_prediction(const torch::Tensor& logits, const torch::Tensor& pooled) {
  auto l = logits.detach().to(torch::kFloat64).reshape({-1});
  if (l.numel() != 2) fail(ErrorCode::ShapeMismatch, "expected two logits");
  Prediction p;
  p.logits = {l[0].item<double>(), l[1].item<double>()};
  p.probs = softmax2(p.logits[0], p.logits[1]);
  if (pooled.defined()) {
    auto v = pooled.detach().to(torch::kFloat32).reshape({-1}).contiguous();
    p.pooled.assign(v.data_ptr<float>(), v.data_ptr<float>() + v.numel());
  }
  return p;
}

Prediction classify(const torch::Tensor& pooled, torch::nn::Linear& classifier) {
  const auto width = classifier->weight.size(1);
  if (pooled.dim() != 1 || pooled.size(0) != width) {
    fail(ErrorCode::ShapeMismatch, "classifier expects a vector of width " + std::to_string(width));
  }
  torch::NoGradGuard no_grad;
  auto logits = classifier(pooled.to(classifier->weight.scalar_type()).unsqueeze(0)).squeeze(0);
  return make_prediction(logits, pooled);
}

}  // namespace avsf
