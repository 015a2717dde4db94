#include "avsf/pipeline.hpp"

#include <set>

#include "avsf/checkpoint.hpp"
#include "avsf/error.hpp"
#include "avsf/sampling.hpp"
#include "avsf/tensor_io.hpp"

namespace avsf {
namespace {

std::optional<std::filesystem::path> optional_path(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return std::filesystem::path(j[key].get<std::string>());
}

nlohmann::json path_or_null(const std::optional<std::filesystem::path>& p) {
  return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json DataConfig::to_json() const {
  return {{"manifest", manifest.string()},
          {"cache_dir", cache_dir.string()},
          {"landmarks", path_or_null(landmarks)},
          {"face_size", face_size ? nlohmann::json(*face_size) : nlohmann::json(nullptr)},
          {"workers", workers}};
}

DataConfig DataConfig::from_json(const nlohmann::json& j) {
  DataConfig c;
  try {
    if (j.contains("manifest")) c.manifest = j["manifest"].get<std::string>();
    if (j.contains("cache_dir")) c.cache_dir = j["cache_dir"].get<std::string>();
    c.landmarks = optional_path(j, "landmarks");
    if (j.contains("face_size") && !j["face_size"].is_null()) c.face_size = j["face_size"].get<int>();
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("data: ") + e.what());
  }
  if (c.workers < 1) fail(ErrorCode::InvalidConfig, "data.workers must be at least 1");
  if (c.face_size && *c.face_size < 8) fail(ErrorCode::InvalidConfig, "data.face_size must be at least 8");
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  const bool ensemble_mode =
      train.freeze_mode == FreezeMode::EnsembleFrozenBackbones || train.freeze_mode == FreezeMode::EnsembleJoint;
  if (ensemble_mode != ensemble) {
    fail(ErrorCode::InvalidConfig, "freeze_mode " + std::string(to_string(train.freeze_mode)) +
                                       (ensemble ? " does not apply to ensemble runs" : " needs \"ensemble\": true"));
  }
  if (pretrained_weights.has_value() != pretrained_mapping.has_value()) {
    fail(ErrorCode::InvalidConfig, "pretrained.weights and pretrained.mapping go together");
  }
  if (!ensemble && (av_backbone || face_backbone)) {
    fail(ErrorCode::InvalidConfig, "backbones only apply to ensemble runs");
  }
  if (window_frames < 0) fail(ErrorCode::InvalidConfig, "window_frames must be non-negative");
}

nlohmann::json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"ensemble", ensemble},
          {"train", train.to_json()},
          {"data", data.to_json()},
          {"pretrained", {{"weights", path_or_null(pretrained_weights)}, {"mapping", path_or_null(pretrained_mapping)}}},
          {"backbones", {{"av", path_or_null(av_backbone)}, {"face", path_or_null(face_backbone)}}},
          {"window_frames", window_frames}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  RunConfig c;
  c.model = ModelConfig::from_json(j.value("model", nlohmann::json{{"preset", "micro"}}));
  c.train = TrainConfig::from_json(j.value("train", nlohmann::json::object()));
  c.data = DataConfig::from_json(j.value("data", nlohmann::json::object()));
  try {
    c.ensemble = j.value("ensemble", false);
    c.window_frames = j.value("window_frames", std::int64_t{0});
    const auto pre = j.value("pretrained", nlohmann::json::object());
    c.pretrained_weights = optional_path(pre, "weights");
    c.pretrained_mapping = optional_path(pre, "mapping");
    const auto bb = j.value("backbones", nlohmann::json::object());
    c.av_backbone = optional_path(bb, "av");
    c.face_backbone = optional_path(bb, "face");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, e.what());
  }
  c.validate();
  return c;
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorCode::InvalidConfig, "override '" + assignment + "' is not key=value");
  const auto key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::InvalidConfig, "override key '" + key + "' has an empty segment");
    if (!node->is_object()) *node = nlohmann::json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

LandmarkProviderFactory landmark_factory(const std::optional<std::filesystem::path>& dir) {
  if (!dir) {
    return [](const MediaClip&) -> std::unique_ptr<LandmarkProvider> {
      return std::make_unique<RenderedFaceLandmarkProvider>();
    };
  }
  return [root = *dir](const MediaClip& clip) -> std::unique_ptr<LandmarkProvider> {
    return std::make_unique<LandmarkFileProvider>(root / (clip.clip_id + ".json"));
  };
}

PreprocessOptions preprocess_options(const DataConfig& data, const ModelConfig& model, bool with_faces) {
  PreprocessOptions options;
  options.with_faces = with_faces;
  options.face_size = data.face_size.value_or(int(model.face.image_size));
  return options;
}

std::vector<Sample> prepare_samples(const std::vector<MediaClip>& clips, const std::filesystem::path& cache_dir,
                                    const LandmarkProviderFactory& landmarks, const PreprocessOptions& options,
                                    int workers, PreprocessSummary* summary) {
  auto result = preprocess_manifest(clips, cache_dir, landmarks, options, workers);
  std::set<std::string> failed;
  for (const auto& f : result.failures) failed.insert(f.clip_id);
  std::vector<MediaClip> ok;
  for (const auto& c : clips)
    if (!failed.count(c.clip_id)) ok.push_back(c);
  if (summary != nullptr) *summary = std::move(result);
  return load_samples(ok, cache_dir);
}

std::unique_ptr<Detector> build_detector(const RunConfig& config) {
  if (!config.ensemble) {
    auto det = std::make_unique<AvDetector>(config.model);
    if (config.pretrained_weights) {
      import_weights(*det->model()->encoder, *config.pretrained_weights, *config.pretrained_mapping);
    }
    return det;
  }
  auto det = std::make_unique<EnsembleDetector>(config.model);
  auto& model = det->model();
  if (config.av_backbone) {
    auto av = load_detector(*config.av_backbone);
    auto* plain = dynamic_cast<AvDetector*>(av.get());
    if (plain == nullptr) fail(ErrorCode::FormatError, config.av_backbone->string() + ": not an av checkpoint");
    load_module_state(*model->av, module_state(*plain->model()));
  } else if (config.pretrained_weights) {
    import_weights(*model->av->encoder, *config.pretrained_weights, *config.pretrained_mapping);
  }
  if (config.face_backbone) {
    auto face = load_face_encoder(*config.face_backbone);
    load_module_state(*model->face, module_state(*face));
  }
  return det;
}

TrainValSplit split_for_training(const std::vector<Sample>& samples, double validation_fraction, std::uint64_t seed) {
  TrainValSplit split;
  std::vector<std::size_t> train_idx;
  std::vector<MediaClip> clips;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    clips.push_back(samples[i].clip);
    if (samples[i].clip.split == Split::Val) split.validation.push_back(samples[i]);
    else if (samples[i].clip.split == Split::Train) train_idx.push_back(i);
  }
  if (!split.validation.empty() || validation_fraction == 0.0) {
    for (auto i : train_idx) split.train.push_back(samples[i]);
    return split;
  }
  const auto holdout = hold_out_subjects(clips, train_idx, validation_fraction, seed);
  for (auto i : holdout.train) split.train.push_back(samples[i]);
  for (auto i : holdout.validation) split.validation.push_back(samples[i]);
  return split;
}

RunOutcome run_training(Detector& detector, const RunConfig& config, const std::vector<Sample>& samples,
                        const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  write_json(run_dir / "config.json", config.to_json());
  write_json(run_dir / "seeds.json", {{"seed", config.train.seed}, {"torch_threads", torch::get_num_threads()}});
  const auto split = split_for_training(samples, config.train.validation_fraction, config.train.seed);
  if (split.train.empty()) fail(ErrorCode::EmptySplit, "no TRAIN clips in the manifest");
  const auto& validation = split.validation.empty() ? split.train : split.validation;
  RunOutcome out;
  out.run_dir = run_dir;
  out.result = train(detector, split.train, validation, config.train);
  write_text(run_dir / "history.csv", history_csv(out.result.history));
  save_detector(detector, run_dir / "checkpoint");
  return out;
}

}  // namespace avsf
