#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/types.h>

#include "avsf/alignment.hpp"
#include "avsf/landmarks.hpp"
#include "avsf/manifest.hpp"

namespace avsf {

/// A preprocessed clip: manifest metadata, aligned model inputs and,
/// optionally, full RGB frames for the face branch.
struct Sample {
  MediaClip clip;
  AlignedPair pair;
  torch::Tensor face_frames;  // uint8 [N, H, W, 3] at 25 fps, undefined when not extracted
  std::string content_hash;

  int label_index() const { return static_cast<int>(clip.label); }
};

struct PreprocessOptions {
  LipOptions lip;
  bool with_faces = false;
  int face_size = 224;
};

using LandmarkProviderFactory = std::function<std::unique_ptr<LandmarkProvider>(const MediaClip&)>;

/// Audio path to decode for a clip; muxed containers fall back to a sibling .wav.
std::filesystem::path resolve_audio_path(const MediaClip& clip);

/// SHA-256 over the media bytes and the preprocessing options.
std::string content_hash(const MediaClip& clip, const PreprocessOptions& options);

Sample preprocess_clip(const MediaClip& clip, LandmarkProvider& landmarks,
                       const PreprocessOptions& options);

/// Preprocesses decoded media that never touched the filesystem.
Sample preprocess_media(const MediaClip& clip, const VideoFrames& video, const std::vector<float>& audio,
                        int sample_rate, LandmarkProvider& landmarks, const PreprocessOptions& options);

std::filesystem::path cache_entry_path(const std::filesystem::path& cache_dir, const std::string& clip_id);
void write_cache_entry(const std::filesystem::path& path, const Sample& sample);
Sample read_cache_entry(const std::filesystem::path& path);

struct PreprocessFailure {
  std::string clip_id;
  std::string error;
};

struct PreprocessSummary {
  std::int64_t total = 0;
  std::int64_t recomputed = 0;
  std::int64_t up_to_date = 0;
  std::vector<PreprocessFailure> failures;
  std::map<std::string, std::int64_t> per_label;
  std::map<std::string, std::int64_t> per_manipulation;
};

/// Runs ingest over every clip, writing one cache entry per clip and skipping
/// entries whose stored content hash is unchanged. Failures are collected.
PreprocessSummary preprocess_manifest(const std::vector<MediaClip>& clips,
                                      const std::filesystem::path& cache_dir,
                                      const LandmarkProviderFactory& landmarks,
                                      const PreprocessOptions& options, int workers = 1);

/// Loads cache entries for the given clips, in order. Manifest metadata wins
/// over what was stored.
std::vector<Sample> load_samples(const std::vector<MediaClip>& clips,
                                 const std::filesystem::path& cache_dir);

/// Cache root: AVSF_CACHE_DIR when set, otherwise `fallback`.
std::filesystem::path cache_root(const std::filesystem::path& fallback);

}  // namespace avsf
