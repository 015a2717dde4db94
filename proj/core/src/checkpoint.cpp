#include "avsf/checkpoint.hpp"

#include <set>
#include <sstream>

#include <torch/torch.h>

#include "avsf/error.hpp"
#include "avsf/hashing.hpp"
#include "avsf/tensor_io.hpp"

namespace avsf {
namespace {

std::string shape_string(torch::IntArrayRef shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? ", " : "") << shape[i];
  out << ']';
  return out.str();
}

void require_kind(const nlohmann::json& descriptor, const std::string& kind, const std::filesystem::path& dir) {
  if (descriptor.value("kind", std::string()) != kind) {
    fail(ErrorCode::FormatError, dir.string() + " is not a '" + kind + "' checkpoint");
  }
}

std::map<std::string, torch::Tensor> read_state(const std::filesystem::path& dir) { return read_tensor_dir(dir); }

}  // namespace

std::map<std::string, torch::Tensor> module_state(torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& item : module.named_parameters(true)) state[item.key()] = item.value().detach();
  for (const auto& item : module.named_buffers(true)) state[item.key()] = item.value().detach();
  return state;
}

void load_module_state(torch::nn::Module& module, const std::map<std::string, torch::Tensor>& state) {
  auto targets = module_state(module);
  for (const auto& [name, tensor] : targets) {
    auto it = state.find(name);
    if (it == state.end()) fail(ErrorCode::MissingTensor, "checkpoint has no tensor '" + name + "'");
    if (it->second.sizes() != tensor.sizes()) {
      fail(ErrorCode::ShapeConflict, name + ": expected " + shape_string(tensor.sizes()) + ", got " +
                                         shape_string(it->second.sizes()));
    }
  }
  torch::NoGradGuard no_grad;
  for (auto& [name, tensor] : targets) tensor.copy_(state.at(name).to(tensor.scalar_type()));
}

void save_checkpoint(const std::filesystem::path& dir, torch::nn::Module& module, nlohmann::json descriptor) {
  std::filesystem::create_directories(dir);
  descriptor["format_version"] = kCheckpointFormatVersion;
  write_tensor_dir(dir, module_state(module));
  write_json(dir / "config.json", descriptor);
}

nlohmann::json read_checkpoint_descriptor(const std::filesystem::path& dir) {
  auto descriptor = read_json(dir / "config.json");
  if (descriptor.value("format_version", 0) != kCheckpointFormatVersion) {
    fail(ErrorCode::FormatError, dir.string() + ": unsupported checkpoint format_version");
  }
  return descriptor;
}

ImportReport import_weights(torch::nn::Module& module, const std::filesystem::path& weights_dir,
                            const std::filesystem::path& mapping_path) {
  const auto source = read_state(weights_dir);
  const auto mapping = read_json(mapping_path);
  if (!mapping.is_array()) fail(ErrorCode::FormatError, mapping_path.string() + ": mapping must be a JSON list");

  auto targets = module_state(module);
  std::set<std::string> parameter_names;
  for (const auto& item : module.named_parameters(true)) parameter_names.insert(item.key());

  ImportReport report;
  std::vector<std::pair<std::string, std::string>> copies;  // target <- source
  std::set<std::string> covered;
  for (const auto& entry : mapping) {
    const std::string target = entry.value("target", std::string());
    auto it = targets.find(target);
    if (it == targets.end()) fail(ErrorCode::FormatError, "mapping names unknown target '" + target + "'");
    if (!covered.insert(target).second) fail(ErrorCode::FormatError, "target '" + target + "' mapped twice");
    if (entry.value("action", std::string()) == "init") {
      ++report.initialized;
      report.initialized_names.push_back(target);
      continue;
    }
    const std::string src = entry.value("source", std::string());
    auto s = source.find(src);
    if (s == source.end()) fail(ErrorCode::MissingTensor, "weights have no tensor '" + src + "'");
    if (s->second.sizes() != it->second.sizes()) {
      fail(ErrorCode::ShapeConflict, target + ": expected " + shape_string(it->second.sizes()) + ", got " +
                                         shape_string(s->second.sizes()) + " from '" + src + "'");
    }
    copies.emplace_back(target, src);
  }
  for (const auto& name : parameter_names) {
    if (!covered.contains(name)) fail(ErrorCode::UnmappedParameter, name);
  }
  torch::NoGradGuard no_grad;
  for (const auto& [target, src] : copies) {
    targets.at(target).copy_(source.at(src).to(targets.at(target).scalar_type()));
    if (parameter_names.contains(target)) ++report.mapped;
  }
  return report;
}

AvEncoder load_pretrained(const std::filesystem::path& weights_dir, const std::filesystem::path& mapping_path,
                          const EncoderConfig& config, ImportReport* report) {
  AvEncoder encoder(config);
  auto r = import_weights(*encoder, weights_dir, mapping_path);
  if (report != nullptr) *report = std::move(r);
  return encoder;
}

void save_face_encoder(FaceEncoder& encoder, const std::filesystem::path& dir) {
  save_checkpoint(dir, *encoder, {{"kind", "face_encoder"}, {"face", encoder->config().to_json()}});
}

FaceEncoder load_face_encoder(const std::filesystem::path& dir) {
  const auto descriptor = read_checkpoint_descriptor(dir);
  require_kind(descriptor, "face_encoder", dir);
  FaceEncoder encoder(FaceEncoderConfig::from_json(descriptor.at("face")));
  load_module_state(*encoder, read_state(dir));
  return encoder;
}

void save_av_model(AvLipSyncPlus& model, const ModelConfig& config, const std::filesystem::path& dir) {
  save_checkpoint(dir, *model, {{"kind", "av"}, {"model", config.to_json()}});
}

void save_detector(Detector& detector, const std::filesystem::path& dir) {
  if (auto* av = dynamic_cast<AvDetector*>(&detector)) {
    save_av_model(av->model(), av->config(), dir);
    return;
  }
  auto& ensemble = dynamic_cast<EnsembleDetector&>(detector);
  std::filesystem::create_directories(dir);
  save_av_model(ensemble.model()->av, ensemble.config(), dir / "av");
  save_face_encoder(ensemble.model()->face, dir / "face");
  nlohmann::json descriptor = {
      {"kind", "ensemble"},
      {"model", ensemble.config().to_json()},
      {"backbones",
       {{"av", {{"path", "av"}, {"sha256", sha256_checkpoint(dir / "av")}}},
        {"face", {{"path", "face"}, {"sha256", sha256_checkpoint(dir / "face")}}}}}};
  save_checkpoint(dir, *ensemble.model()->head, descriptor);
}

std::unique_ptr<Detector> load_detector(const std::filesystem::path& dir) {
  const auto descriptor = read_checkpoint_descriptor(dir);
  const std::string kind = descriptor.value("kind", std::string());
  if (kind == "av") {
    auto config = ModelConfig::from_json(descriptor.at("model"));
    auto detector = std::make_unique<AvDetector>(config);
    load_module_state(*detector->model(), read_state(dir));
    return detector;
  }
  if (kind != "ensemble") fail(ErrorCode::FormatError, dir.string() + ": unknown checkpoint kind '" + kind + "'");
  auto config = ModelConfig::from_json(descriptor.at("model"));
  auto detector = std::make_unique<EnsembleDetector>(config);
  for (const char* branch : {"av", "face"}) {
    const auto& ref = descriptor.at("backbones").at(branch);
    const auto path = dir / ref.at("path").get<std::string>();
    if (sha256_checkpoint(path) != ref.at("sha256").get<std::string>()) {
      fail(ErrorCode::FormatError, path.string() + ": backbone hash does not match the ensemble checkpoint");
    }
  }
  const auto av_dir = dir / descriptor["backbones"]["av"]["path"].get<std::string>();
  const auto face_dir = dir / descriptor["backbones"]["face"]["path"].get<std::string>();
  require_kind(read_checkpoint_descriptor(av_dir), "av", av_dir);
  load_module_state(*detector->model()->av, read_state(av_dir));
  auto face = load_face_encoder(face_dir);
  load_module_state(*detector->model()->face, module_state(*face));
  load_module_state(*detector->model()->head, read_state(dir));
  return detector;
}

}  // namespace avsf
