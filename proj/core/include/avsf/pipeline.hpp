#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avsf/dataset.hpp"
#include "avsf/model.hpp"
#include "avsf/trainer.hpp"

namespace avsf {

struct DataConfig {
  std::filesystem::path manifest;
  std::filesystem::path cache_dir = "cache";
  std::optional<std::filesystem::path> landmarks;  // directory of <clip_id>.json files
  std::optional<int> face_size;                    // defaults to the face encoder's image size
  int workers = 1;

  nlohmann::json to_json() const;
  static DataConfig from_json(const nlohmann::json& j);
};

/// Everything a training run needs; stored verbatim in the run directory.
struct RunConfig {
  ModelConfig model = ModelConfig::preset_named("micro");
  bool ensemble = false;
  TrainConfig train;
  DataConfig data;
  std::optional<std::filesystem::path> pretrained_weights, pretrained_mapping;
  std::optional<std::filesystem::path> av_backbone, face_backbone;  // ensemble only
  std::int64_t window_frames = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

/// Sets `dotted.path=value` in a JSON document; the value is parsed as JSON
/// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Landmark files in `dir` (named <clip_id>.json) or, without a directory,
/// the rendered-face heuristic.
LandmarkProviderFactory landmark_factory(const std::optional<std::filesystem::path>& dir);

PreprocessOptions preprocess_options(const DataConfig& data, const ModelConfig& model, bool with_faces);

/// Preprocesses into the cache (skipping fresh entries) and loads every clip
/// that succeeded, in manifest order.
std::vector<Sample> prepare_samples(const std::vector<MediaClip>& clips, const std::filesystem::path& cache_dir,
                                    const LandmarkProviderFactory& landmarks, const PreprocessOptions& options,
                                    int workers, PreprocessSummary* summary = nullptr);

/// Fresh detector with optional imported encoder weights or, for ensembles,
/// backbones loaded from existing checkpoints.
std::unique_ptr<Detector> build_detector(const RunConfig& config);

struct TrainValSplit {
  std::vector<Sample> train, validation;
};

/// Manifest split tags win: VAL clips validate, TRAIN clips train. Without
/// VAL clips a subject-disjoint fraction of the TRAIN clips is held out.
TrainValSplit split_for_training(const std::vector<Sample>& samples, double validation_fraction, std::uint64_t seed);

struct RunOutcome {
  TrainResult result;
  std::filesystem::path run_dir;
};

/// Trains and writes config.json, history.csv, seeds.json and checkpoint/.
RunOutcome run_training(Detector& detector, const RunConfig& config, const std::vector<Sample>& samples,
                        const std::filesystem::path& run_dir);

}  // namespace avsf
