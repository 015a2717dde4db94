#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "avsf/checkpoint.hpp"
#include "avsf/error.hpp"
#include "avsf/evaluation.hpp"
#include "avsf/manifest.hpp"
#include "avsf/pipeline.hpp"
#include "avsf/sampling.hpp"
#include "avsf/synthetic.hpp"
#include "avsf/tensor_io.hpp"

using namespace avsf;
namespace fs = std::filesystem;

namespace {

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField:
    case ErrorCode::DuplicateClipId:
    case ErrorCode::UnknownLabel:
    case ErrorCode::InvalidRecord:
    case ErrorCode::UnknownMode:
    case ErrorCode::UnknownKind:
    case ErrorCode::InvalidConfig:
    case ErrorCode::TooFewSubjects:
      return true;
    default:
      return false;
  }
}

struct Common {
  std::string cache;
  std::string landmarks;
  int workers = 1;
};

fs::path cache_dir(const Common& c, const fs::path& fallback) {
  return c.cache.empty() ? cache_root(fallback) : fs::path(c.cache);
}

std::optional<fs::path> landmarks_dir(const Common& c) {
  if (c.landmarks.empty()) return std::nullopt;
  return fs::path(c.landmarks);
}

nlohmann::json summary_json(const PreprocessSummary& s) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : s.failures) failures.push_back({{"clip_id", f.clip_id}, {"error", f.error}});
  return {{"total", s.total},          {"recomputed", s.recomputed},         {"up_to_date", s.up_to_date},
          {"per_label", s.per_label}, {"per_manipulation", s.per_manipulation}, {"failures", failures}};
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json doc = path.empty() ? nlohmann::json::object() : read_json(path);
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

std::vector<Sample> samples_for(const RunConfig& config, const std::vector<MediaClip>& clips, const Common& common) {
  const auto options = preprocess_options(config.data, config.model, config.ensemble);
  const auto cache = common.cache.empty() ? cache_root(config.data.cache_dir) : fs::path(common.cache);
  PreprocessSummary summary;
  auto samples = prepare_samples(clips, cache, landmark_factory(config.data.landmarks), options,
                                 config.data.workers, &summary);
  for (const auto& f : summary.failures) std::cerr << "skipped " << f.clip_id << ": " << f.error << "\n";
  return samples;
}

int cmd_preprocess(const std::string& manifest, const std::string& out, bool strict, bool faces, int face_size,
                   const Common& common) {
  const auto clips = load_manifest(manifest);
  const auto dir = out.empty() ? cache_dir(common, "cache") : fs::path(out);
  PreprocessOptions options;
  options.with_faces = faces;
  options.face_size = face_size;
  const auto summary = preprocess_manifest(clips, dir, landmark_factory(landmarks_dir(common)), options, common.workers);
  const auto report = summary_json(summary);
  write_json(dir / "summary.json", report);
  std::cout << report.dump(2) << "\n";
  if (strict && !summary.failures.empty()) return 2;
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides, const std::string& out,
              const Common& common) {
  const auto config = load_run_config(config_path, overrides);
  if (config.data.manifest.empty()) fail(ErrorCode::InvalidConfig, "data.manifest is required");
  const auto samples = samples_for(config, load_manifest(config.data.manifest), common);
  torch::manual_seed(config.train.seed);
  auto detector = build_detector(config);
  const auto outcome = run_training(*detector, config, samples, out);
  std::cout << "best epoch " << outcome.result.best_epoch << ", val accuracy " << outcome.result.best_val_accuracy
            << "\n";
  std::cout << "run directory " << outcome.run_dir.string() << "\n";
  return 0;
}

std::map<std::string, std::vector<MediaClip>> named_manifests(const std::vector<std::string>& specs) {
  std::map<std::string, std::vector<MediaClip>> sets;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    const auto name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const auto path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    if (sets.count(name)) fail(ErrorCode::InvalidConfig, "test set '" + name + "' given twice");
    sets[name] = load_manifest(path);
  }
  return sets;
}

int cmd_eval(const std::string& checkpoint, const std::vector<std::string>& manifests, const std::string& out,
             bool roc, std::int64_t window, const Common& common) {
  if (manifests.empty()) fail(ErrorCode::InvalidConfig, "at least one --manifest is required");
  auto detector = load_detector(checkpoint);
  RunConfig config;
  config.model = detector->config();
  config.ensemble = detector->uses_faces();
  DataConfig data;
  data.landmarks = landmarks_dir(common);
  data.workers = common.workers;
  config.data = data;
  std::map<std::string, std::vector<Sample>> sets;
  for (const auto& [name, clips] : named_manifests(manifests)) sets[name] = samples_for(config, clips, common);
  const auto reports = evaluate_testsets(*detector, sets, window);
  fs::create_directories(out);
  for (const auto& [name, report] : reports) {
    write_report(out, report, roc);
    std::cout << "== " << name << "\n" << report.table() << "\n";
  }
  return 0;
}

int cmd_kfold(const std::string& config_path, const std::vector<std::string>& overrides, int k, const std::string& out,
              bool roc, const Common& common) {
  auto config = load_run_config(config_path, overrides);
  if (config.data.manifest.empty()) fail(ErrorCode::InvalidConfig, "data.manifest is required");
  const auto clips = load_manifest(config.data.manifest);
  const auto samples = samples_for(config, clips, common);
  std::vector<MediaClip> kept;
  for (const auto& s : samples) kept.push_back(s.clip);
  const auto folds = make_kfold(kept, k, config.train.seed);
  std::vector<MetricsReport> reports;
  for (const auto& fold : folds) {
    const std::string name = "fold_" + std::to_string(fold.fold + 1);
    std::vector<Sample> train_part, test_part;
    for (auto i : fold.train) {
      train_part.push_back(samples[i]);
      train_part.back().clip.split = Split::Train;
    }
    for (auto i : fold.test) test_part.push_back(samples[i]);
    torch::manual_seed(config.train.seed);
    auto detector = build_detector(config);
    run_training(*detector, config, train_part, fs::path(out) / name);
    auto report = build_report(name, score_videos(*detector, test_part, config.window_frames));
    write_report(out, report, roc);
    std::cout << "== " << name << "\n" << report.table() << "\n";
    reports.push_back(std::move(report));
  }
  const auto average = average_reports(reports);
  write_json(fs::path(out) / "average.json", average);
  std::cout << average.dump(2) << "\n";
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& manifest, const std::vector<std::string>& kinds,
               const std::string& out, const Common& common) {
  const auto parsed = parse_export_kinds(kinds);
  auto detector = load_detector(checkpoint);
  RunConfig config;
  config.model = detector->config();
  config.ensemble = detector->uses_faces();
  config.data.landmarks = landmarks_dir(common);
  config.data.workers = common.workers;
  const auto samples = samples_for(config, load_manifest(manifest), common);
  const auto records = compute_embeddings(*detector, samples, parsed);
  write_embeddings(out, records);
  std::cout << records.size() << " embeddings written to " << out << "\n";
  return 0;
}

int cmd_synth(const std::string& out, SyntheticOptions options) {
  const auto clips = write_synthetic_corpus(out, options);
  std::cout << clips.size() << " clips, manifest " << (fs::path(out) / "manifest.jsonl").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual lip-sync deepfake detector"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--cache", common.cache, "Cache directory (default: AVSF_CACHE_DIR or ./cache)");
  app.add_option("--landmarks", common.landmarks, "Directory of <clip_id>.json mouth landmark files");
  app.add_option("--workers", common.workers, "Parallel preprocessing workers")->check(CLI::PositiveNumber);
  int threads = 1;
  app.add_option("--threads", threads, "Intra-op threads for tensor math")->check(CLI::PositiveNumber);

  auto* pre = app.add_subcommand("preprocess", "Decode media into the feature cache");
  std::string manifest, out;
  bool strict = false, faces = false;
  int face_size = 224;
  pre->add_option("--manifest", manifest)->required();
  pre->add_option("--out", out, "Cache directory");
  pre->add_flag("--strict", strict, "Exit nonzero when any clip fails");
  pre->add_flag("--faces", faces, "Also store RGB face frames");
  pre->add_option("--face-size", face_size);

  auto* tr = app.add_subcommand("train", "Train a detector from a JSON run config");
  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_dir = "run";
  tr->add_option("--config", config_path);
  tr->add_option("--set", overrides, "Override a config field, e.g. train.learning_rate=1e-4");
  tr->add_option("--out", run_dir, "Run directory");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint or run k-fold cross-validation");
  std::string checkpoint, report_dir = "reports";
  std::vector<std::string> manifests;
  bool roc = false;
  int kfold = 0;
  std::int64_t window = 0;
  ev->add_option("--checkpoint", checkpoint);
  ev->add_option("--manifest", manifests, "Test set as name=path (repeatable)");
  ev->add_option("--out", report_dir);
  ev->add_flag("--roc", roc, "Write ROC points as CSV");
  ev->add_option("--window", window, "Frames per scoring window (0 = whole clip)");
  ev->add_option("--kfold", kfold, "Subject-disjoint k-fold cross-validation over data.manifest")->check(CLI::PositiveNumber);
  ev->add_option("--config", config_path, "Run config (with --kfold)");
  ev->add_option("--set", overrides);

  auto* ex = app.add_subcommand("export-embeddings", "Dump embeddings for external projection");
  std::vector<std::string> kinds{"AV", "V", "A", "SYNC"};
  std::string export_manifest, export_dir = "embeddings";
  ex->add_option("--checkpoint", checkpoint)->required();
  ex->add_option("--manifest", export_manifest)->required();
  ex->add_option("--kinds", kinds, "AV, V, A, SYNC, FUSION, pooled")->delimiter(',');
  ex->add_option("--out", export_dir);

  auto* sy = app.add_subcommand("synth", "Render a synthetic talking-head corpus");
  SyntheticOptions synth;
  std::string synth_dir = "synthetic";
  sy->add_option("--out", synth_dir);
  sy->add_option("--videos", synth.num_videos);
  sy->add_option("--subjects", synth.num_subjects);
  sy->add_option("--test-subjects", synth.test_subjects);
  sy->add_option("--frames", synth.frames);
  sy->add_option("--fake-fraction", synth.fake_fraction);
  sy->add_option("--seed", synth.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  torch::set_num_threads(threads);
  try {
    if (*pre) return cmd_preprocess(manifest, out, strict, faces, face_size, common);
    if (*tr) return cmd_train(config_path, overrides, run_dir, common);
    if (*ev) {
      if (kfold > 0) return cmd_kfold(config_path, overrides, kfold, report_dir, roc, common);
      if (checkpoint.empty()) fail(ErrorCode::InvalidConfig, "--checkpoint is required without --kfold");
      return cmd_eval(checkpoint, manifests, report_dir, roc, window, common);
    }
    if (*ex) return cmd_export(checkpoint, export_manifest, kinds, export_dir, common);
    if (*sy) return cmd_synth(synth_dir, synth);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
