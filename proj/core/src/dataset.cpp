#include "avsf/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <atomic>
#include <optional>

#include <opencv2/imgproc.hpp>
#include <torch/torch.h>

#include "avsf/audio_features.hpp"
#include "avsf/error.hpp"
#include "avsf/hashing.hpp"
#include "avsf/tensor_io.hpp"

namespace avsf {
namespace {

nlohmann::json options_json(const PreprocessOptions& options) {
  return {{"crop_margin", options.lip.crop_margin},
          {"lip_size", options.lip.output_size},
          {"fps", options.lip.target_fps},
          {"with_faces", options.with_faces},
          {"face_size", options.face_size},
          {"format_version", TensorBundle::kFormatVersion}};
}

torch::Tensor face_frames_tensor(const VideoFrames& video, const std::vector<std::int64_t>& indices,
                                 int size) {
  auto out = torch::empty({std::int64_t(indices.size()), size, size, 3}, torch::kUInt8);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    cv::Mat resized;
    cv::resize(video.frames[std::size_t(indices[j])], resized, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    if (!resized.isContinuous()) resized = resized.clone();
    out[std::int64_t(j)] = torch::from_blob(resized.data, {size, size, 3}, torch::kUInt8).clone();
  }
  return out;
}

}  // namespace

std::filesystem::path resolve_audio_path(const MediaClip& clip) {
  auto ext = clip.audio_path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".wav") return clip.audio_path;
  auto sibling = clip.audio_path;
  sibling.replace_extension(".wav");
  if (std::filesystem::exists(sibling)) return sibling;
  fail(ErrorCode::DecodeFailure, "clip '" + clip.clip_id + "': audio must be WAV; extract the track to " +
                                     sibling.string());
}

std::string content_hash(const MediaClip& clip, const PreprocessOptions& options) {
  const std::string parts = options_json(options).dump() + "\n" + sha256_file(clip.video_path) + "\n" +
                            sha256_file(resolve_audio_path(clip));
  return sha256_hex(parts);
}

Sample preprocess_media(const MediaClip& clip, const VideoFrames& video, const std::vector<float>& audio,
                        int sample_rate, LandmarkProvider& landmarks, const PreprocessOptions& options) {
  auto lips = extract_lip_sequence(video, landmarks, options.lip);
  auto features = compute_logfbank(audio, sample_rate);
  Sample sample;
  sample.clip = clip;
  sample.pair = align_pair(lips, features);
  if (options.with_faces) {
    auto indices = resample_frame_indices(std::int64_t(video.frames.size()), video.fps, options.lip.target_fps);
    indices.resize(std::size_t(sample.pair.length()));
    sample.face_frames = face_frames_tensor(video, indices, options.face_size);
  }
  return sample;
}

Sample preprocess_clip(const MediaClip& clip, LandmarkProvider& landmarks, const PreprocessOptions& options) {
  const auto video = decode_video(clip.video_path);
  const auto wave = read_wav(resolve_audio_path(clip));
  auto sample = preprocess_media(clip, video, wave.samples, wave.sample_rate, landmarks, options);
  sample.content_hash = content_hash(clip, options);
  return sample;
}

std::filesystem::path cache_entry_path(const std::filesystem::path& cache_dir, const std::string& clip_id) {
  std::string name;
  for (char c : clip_id) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    name += keep ? c : '_';
  }
  return cache_dir / (name + ".avsf");
}

void write_cache_entry(const std::filesystem::path& path, const Sample& sample) {
  TensorBundle bundle;
  bundle.meta = {{"clip_id", sample.clip.clip_id},
                 {"label", to_string(sample.clip.label)},
                 {"manipulation", to_string(sample.clip.manipulation)},
                 {"subject_id", sample.clip.subject_id},
                 {"split", to_string(sample.clip.split)},
                 {"frames", sample.pair.length()},
                 {"fps", sample.pair.lips.fps},
                 {"content_hash", sample.content_hash}};
  bundle.tensors["lips"] = sample.pair.lips.frames;
  bundle.tensors["audio"] = sample.pair.audio.features;
  if (sample.face_frames.defined()) bundle.tensors["face_frames"] = sample.face_frames;
  write_bundle(path, bundle);
}

Sample read_cache_entry(const std::filesystem::path& path) {
  auto bundle = read_bundle(path);
  Sample sample;
  const auto& meta = bundle.meta;
  sample.clip.clip_id = meta.at("clip_id").get<std::string>();
  sample.clip.label = parse_label(meta.at("label").get<std::string>());
  sample.clip.manipulation = parse_manipulation(meta.at("manipulation").get<std::string>());
  sample.clip.subject_id = meta.at("subject_id").get<std::string>();
  sample.clip.split = parse_split(meta.at("split").get<std::string>());
  sample.content_hash = meta.value("content_hash", "");
  if (!bundle.tensors.contains("lips") || !bundle.tensors.contains("audio")) {
    fail(ErrorCode::FormatError, path.string() + ": missing lips/audio tensors");
  }
  sample.pair.lips.frames = bundle.tensors["lips"];
  sample.pair.lips.fps = meta.value("fps", kTargetFps);
  sample.pair.audio.features = bundle.tensors["audio"];
  if (bundle.tensors.contains("face_frames")) sample.face_frames = bundle.tensors["face_frames"];
  return sample;
}

PreprocessSummary preprocess_manifest(const std::vector<MediaClip>& clips,
                                      const std::filesystem::path& cache_dir,
                                      const LandmarkProviderFactory& landmarks,
                                      const PreprocessOptions& options, int workers) {
  std::filesystem::create_directories(cache_dir);
  PreprocessSummary summary;
  summary.total = std::int64_t(clips.size());
  std::vector<std::optional<PreprocessFailure>> failures(clips.size());
  std::vector<char> recomputed(clips.size(), 0);

  auto run_one = [&](std::size_t i) {
    const auto& clip = clips[i];
    try {
      const auto path = cache_entry_path(cache_dir, clip.clip_id);
      const std::string hash = content_hash(clip, options);
      if (std::filesystem::exists(path)) {
        try {
          if (read_bundle_header(path)["meta"].value("content_hash", "") == hash) return;
        } catch (const std::exception&) {
          // unreadable entry: rebuild it
        }
      }
      auto provider = landmarks(clip);
      auto sample = preprocess_clip(clip, *provider, options);
      write_cache_entry(path, sample);
      recomputed[i] = 1;
    } catch (const std::exception& e) {
      failures[i] = PreprocessFailure{clip.clip_id, e.what()};
    }
  };

  const auto n_workers = std::size_t(std::max(1, workers));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < clips.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::future<void>> pool;
    for (std::size_t w = 0; w < n_workers; ++w) {
      pool.push_back(std::async(std::launch::async, [&] {
        for (std::size_t i = next++; i < clips.size(); i = next++) run_one(i);
      }));
    }
    for (auto& f : pool) f.get();
  }

  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (failures[i]) {
      summary.failures.push_back(*failures[i]);
      continue;
    }
    recomputed[i] ? ++summary.recomputed : ++summary.up_to_date;
    ++summary.per_label[std::string(to_string(clips[i].label))];
    ++summary.per_manipulation[std::string(to_string(clips[i].manipulation))];
  }
  return summary;
}

std::vector<Sample> load_samples(const std::vector<MediaClip>& clips, const std::filesystem::path& cache_dir) {
  std::vector<Sample> samples;
  samples.reserve(clips.size());
  for (const auto& clip : clips) {
    auto sample = read_cache_entry(cache_entry_path(cache_dir, clip.clip_id));
    sample.clip = clip;
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::filesystem::path cache_root(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("AVSF_CACHE_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

}  // namespace avsf
