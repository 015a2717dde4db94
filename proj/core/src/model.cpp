#include "avsf/model.hpp"

#include <algorithm>

#include <torch/torch.h>

#include "avsf/error.hpp"
#include "avsf/sync_fusion.hpp"

namespace avsf {

namespace {

ModelConfig full_preset() {
  ModelConfig c;
  c.preset = "full";
  c.tcn.in_dim = 2 * c.encoder.embed_dim;
  c.tcn.channels = c.tcn.in_dim;
  return c;
}

ModelConfig desk_preset(std::int64_t dim) {
  ModelConfig c;
  c.preset = dim == 64 ? "desk" : "desk128";
  c.encoder.embed_dim = dim;
  c.encoder.num_layers = 2;
  c.encoder.num_heads = 4;
  c.encoder.ffn_dim = 4 * dim;
  c.encoder.visual_frontend = VisualFrontendKind::TinyConv;
  c.encoder.tiny_channels = dim / 8;
  c.encoder.max_positions = 512;
  c.tcn.in_dim = 2 * dim;
  c.tcn.channels = 3 * (dim / 2);
  c.tcn.num_blocks = dim == 64 ? 2 : 3;
  c.tcn.dropout = 0.1;
  c.face.image_size = dim == 64 ? 32 : 64;
  c.face.embed_dim = dim / 2;
  c.face.spatial_layers = 1;
  c.face.temporal_layers = 1;
  c.face.num_heads = 2;
  c.face.ffn_dim = dim;
  c.ensemble_hidden = dim;
  return c;
}

ModelConfig micro_preset() {
  ModelConfig c;
  c.preset = "micro";
  c.encoder.embed_dim = 8;
  c.encoder.num_layers = 1;
  c.encoder.num_heads = 1;
  c.encoder.ffn_dim = 16;
  c.encoder.visual_frontend = VisualFrontendKind::TinyConv;
  c.encoder.tiny_channels = 2;
  c.encoder.max_positions = 256;
  c.tcn.in_dim = 16;
  c.tcn.kernel_sizes = {3, 5};
  c.tcn.num_blocks = 1;
  c.tcn.channels = 8;
  c.tcn.dropout = 0.0;
  c.face.num_frames = 4;
  c.face.image_size = 32;
  c.face.embed_dim = 8;
  c.face.spatial_layers = 1;
  c.face.temporal_layers = 1;
  c.face.num_heads = 1;
  c.face.ffn_dim = 16;
  c.ensemble_hidden = 16;
  return c;
}

torch::Tensor slice_frames(const torch::Tensor& t, std::int64_t dim, std::int64_t start, std::int64_t end) {
  return t.slice(dim, start, end);
}

}  // namespace

void ModelConfig::validate() const {
  encoder.validate();
  tcn.validate();
  face.validate();
  if (tcn.in_dim != 2 * encoder.embed_dim) {
    fail(ErrorCode::InvalidConfig, "tcn.in_dim must equal 2 × encoder.embed_dim");
  }
  if (ensemble_hidden <= 0) fail(ErrorCode::InvalidConfig, "ensemble_hidden must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"preset", preset},
          {"encoder", encoder.to_json()},
          {"tcn", tcn.to_json()},
          {"face", face.to_json()},
          {"ensemble_hidden", ensemble_hidden},
          {"normalize_sync", normalize_sync}};
}

ModelConfig ModelConfig::preset_named(const std::string& name) {
  if (name == "full") return full_preset();
  if (name == "desk") return desk_preset(64);
  if (name == "desk128") return desk_preset(128);
  if (name == "micro") return micro_preset();
  fail(ErrorCode::InvalidConfig, "model.preset: unknown preset '" + name + "'");
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  const std::string name = j.value("preset", std::string("full"));
  auto merged = preset_named(name).to_json();
  merged.merge_patch(j);
  ModelConfig c;
  c.preset = name;
  c.encoder = EncoderConfig::from_json(merged["encoder"]);
  c.tcn = TcnConfig::from_json(merged["tcn"]);
  c.face = FaceEncoderConfig::from_json(merged["face"]);
  c.ensemble_hidden = merged.value("ensemble_hidden", c.ensemble_hidden);
  c.normalize_sync = merged.value("normalize_sync", c.normalize_sync);
  c.validate();
  return c;
}

Batch collate(std::span<const Sample* const> samples, const CollateOptions& options) {
  if (samples.empty()) fail(ErrorCode::EmptyBatch, "cannot collate an empty batch");
  std::vector<std::int64_t> lengths;
  for (const auto* s : samples) {
    if (s->pair.length() < 1) fail(ErrorCode::EmptyModality, "clip '" + s->clip.clip_id + "' has no frames");
    lengths.push_back(s->pair.length());
  }
  auto sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  std::int64_t steps = options.pad_to_median ? sorted[(sorted.size() - 1) / 2] : sorted.back();
  if (options.max_frames > 0) steps = std::min(steps, options.max_frames);

  const auto batch_size = std::int64_t(samples.size());
  const auto& first = samples.front()->pair;
  Batch batch;
  batch.lips = torch::zeros({batch_size, 1, steps, first.lips.frames.size(2), first.lips.frames.size(3)},
                            options.dtype);
  batch.audio = torch::zeros({batch_size, steps, first.audio.features.size(1)}, options.dtype);
  batch.lengths = torch::empty({batch_size}, torch::kInt64);
  batch.labels = torch::empty({batch_size}, torch::kInt64);
  for (std::int64_t b = 0; b < batch_size; ++b) {
    const Sample& s = *samples[std::size_t(b)];
    const auto t = std::min(lengths[std::size_t(b)], steps);
    batch.lips[b].slice(1, 0, t).copy_(s.pair.lips.frames.slice(1, 0, t));
    batch.audio[b].slice(0, 0, t).copy_(s.pair.audio.features.slice(0, 0, t));
    batch.lengths[b] = t;
    batch.labels[b] = s.label_index();
    batch.clip_ids.push_back(s.clip.clip_id);
    if (options.face != nullptr) {
      if (!s.face_frames.defined()) {
        fail(ErrorCode::MissingTensor, "clip '" + s.clip.clip_id + "' has no face frames (preprocess with faces)");
      }
      batch.face_clips.push_back(stack_clips(clips_from_video(s.face_frames, *options.face)).to(options.dtype));
    }
  }
  return batch;
}

Batch collate_one(const Sample& sample, const CollateOptions& options) {
  const Sample* one[] = {&sample};
  return collate(one, options);
}

AvLipSyncPlusImpl::AvLipSyncPlusImpl(const ModelConfig& config) : normalize_sync_(config.normalize_sync) {
  config.validate();
  encoder = register_module("encoder", AvEncoder(config.encoder));
  tcn = register_module("tcn", MsTcn(config.tcn));
  classifier = register_module("classifier", torch::nn::Linear(config.tcn.channels, 2));
}

AvOutputs AvLipSyncPlusImpl::forward(const torch::Tensor& lips, const torch::Tensor& audio,
                                     const torch::Tensor& lengths) {
  AvOutputs out;
  torch::Tensor mask;
  if (lengths.defined()) mask = padding_mask(lengths, lips.size(2));
  const auto features = encoder->extract(lips, audio, mask);
  out.av = encoder->encode_features(features, EncoderMode::Joint, mask);
  out.v = encoder->encode_features(features, EncoderMode::AudioDropout, mask);
  out.a = encoder->encode_features(features, EncoderMode::VideoDropout, mask);
  out.sync = sync_features(out.v, out.a, normalize_sync_);
  out.fusion = fuse_features(out.av, out.sync);
  out.tcn = tcn(out.fusion, lengths);
  out.pooled = temporal_pool(out.tcn, lengths);
  out.logits = classifier(out.pooled);
  return out;
}

EnsembleModelImpl::EnsembleModelImpl(const ModelConfig& config) {
  av = register_module("av", AvLipSyncPlus(config));
  face = register_module("face", FaceEncoder(config.face));
  head = register_module("head", EnsembleHead(config.tcn.channels, config.face.embed_dim, config.ensemble_hidden));
}

torch::Tensor EnsembleModelImpl::face_vectors(const std::vector<torch::Tensor>& face_clips) {
  if (face_clips.empty()) fail(ErrorCode::MissingTensor, "ensemble forward needs face clips");
  std::vector<torch::Tensor> rows;
  for (const auto& clips : face_clips) rows.push_back(face->forward(clips).mean(0));
  return torch::stack(rows);
}

std::string_view to_string(ParamRole role) {
  switch (role) {
    case ParamRole::VisualFrontend: return "visual_frontend";
    case ParamRole::AudioFrontend: return "audio_frontend";
    case ParamRole::Transformer: return "transformer";
    case ParamRole::TemporalHead: return "temporal_head";
    case ParamRole::Classifier: return "classifier";
    case ParamRole::FaceEncoder: return "face_encoder";
    case ParamRole::EnsembleHead: return "ensemble_head";
  }
  return "unknown";
}

std::vector<torch::Tensor> ParameterGroup::parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& m : modules) {
    for (const auto& p : m->parameters()) out.push_back(p);
  }
  out.insert(out.end(), loose.begin(), loose.end());
  return out;
}

torch::ScalarType Detector::dtype() {
  for (const auto& p : root().parameters()) return p.scalar_type();
  return torch::kFloat32;
}

CollateOptions Detector::collate_options(std::int64_t max_frames) {
  CollateOptions options;
  options.max_frames = max_frames;
  options.face = uses_faces() ? &config().face : nullptr;
  options.dtype = dtype();
  return options;
}

std::vector<ParameterGroup> av_parameter_groups(AvLipSyncPlus& model, const std::string& prefix) {
  auto& enc = model->encoder;
  std::shared_ptr<torch::nn::Module> visual =
      enc->tiny ? std::static_pointer_cast<torch::nn::Module>(enc->tiny.ptr())
                : std::static_pointer_cast<torch::nn::Module>(enc->resnet.ptr());
  return {
      {prefix + "visual_frontend", ParamRole::VisualFrontend, {visual}, {}},
      {prefix + "audio_frontend", ParamRole::AudioFrontend, {enc->audio_frontend.ptr()}, {}},
      {prefix + "transformer",
       ParamRole::Transformer,
       {enc->feature_norm.ptr(), enc->post_extract_proj.ptr(), enc->encoder.ptr()},
       {enc->pos_embed}},
      {prefix + "temporal_head", ParamRole::TemporalHead, {model->tcn.ptr()}, {}},
      {prefix + "classifier", ParamRole::Classifier, {model->classifier.ptr()}, {}},
  };
}

AvDetector::AvDetector(const ModelConfig& config) : config_(config), model_(config) {}
AvDetector::AvDetector(AvLipSyncPlus model, ModelConfig config)
    : config_(std::move(config)), model_(std::move(model)) {}

std::vector<ParameterGroup> AvDetector::parameter_groups() { return av_parameter_groups(model_); }

AvOutputs AvDetector::outputs(const Batch& batch) { return model_->forward(batch.lips, batch.audio, batch.lengths); }

Detector::Output AvDetector::run(const Batch& batch) {
  auto out = outputs(batch);
  return {out.logits, out.pooled};
}

EnsembleDetector::EnsembleDetector(const ModelConfig& config) : config_(config), model_(config) {}

std::vector<ParameterGroup> EnsembleDetector::parameter_groups() {
  auto groups = av_parameter_groups(model_->av, "av.");
  groups.push_back({"face_encoder", ParamRole::FaceEncoder, {model_->face.ptr()}, {}});
  groups.push_back({"ensemble_head", ParamRole::EnsembleHead, {model_->head.ptr()}, {}});
  return groups;
}

Detector::Output EnsembleDetector::run(const Batch& batch) {
  auto pooled = model_->av->forward(batch.lips, batch.audio, batch.lengths).pooled;
  auto face = model_->face_vectors(batch.face_clips);
  return {model_->head->forward(pooled, face), torch::cat({pooled, face}, 1)};
}

std::vector<Prediction> predict_windows(Detector& detector, const Sample& sample, std::int64_t window_frames) {
  const auto total = sample.pair.length();
  if (total < 1) fail(ErrorCode::EmptyModality, "clip '" + sample.clip.clip_id + "' has no frames");
  const auto window = window_frames > 0 ? window_frames : total;
  torch::NoGradGuard no_grad;
  auto& root = detector.root();
  const bool was_training = root.is_training();
  root.eval();
  auto options = detector.collate_options();
  std::vector<Prediction> predictions;
  for (std::int64_t start = 0; start < total; start += window) {
    const auto end = std::min(total, start + window);
    Sample part;
    part.clip = sample.clip;
    part.pair.lips.frames = slice_frames(sample.pair.lips.frames, 1, start, end);
    part.pair.audio.features = slice_frames(sample.pair.audio.features, 0, start, end);
    if (sample.face_frames.defined()) part.face_frames = slice_frames(sample.face_frames, 0, start, end);
    const auto batch = collate_one(part, options);
    auto out = detector.run(batch);
    predictions.push_back(make_prediction(out.logits[0], out.representation[0]));
  }
  root.train(was_training);
  return predictions;
}

Prediction predict(AvLipSyncPlus& model, const AlignedPair& pair) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  const auto dtype = model->classifier->weight.scalar_type();
  auto out = model->forward(pair.lips.frames.to(dtype).unsqueeze(0), pair.audio.features.to(dtype).unsqueeze(0));
  model->train(was_training);
  return make_prediction(out.logits[0], out.pooled[0]);
}

Prediction ensemble_forward(const AlignedPair& pair, const std::vector<FaceClip>& clips, EnsembleModel& model) {
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  const auto dtype = model->head->fc1->weight.scalar_type();
  auto out = model->av->forward(pair.lips.frames.to(dtype).unsqueeze(0), pair.audio.features.to(dtype).unsqueeze(0));
  auto face_vec = model->face->forward(stack_clips(clips).to(dtype)).mean(0);
  model->train(was_training);
  auto prediction = ensemble_classify(out.pooled[0], face_vec, model->head);
  for (double l : prediction.logits) {
    if (!std::isfinite(l)) fail(ErrorCode::NonFiniteActivation, "ensemble produced non-finite logits");
  }
  return prediction;
}

}  // namespace avsf
