#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>

#include "avsf/lip_extraction.hpp"
#include "avsf/manifest.hpp"

namespace avsf {

/// Rendered talking heads. Each video's mouth opening follows a per-frame
/// signal in [0, 1]. Real clips carry audio whose loudness follows the same
/// signal; fake clips carry audio driven by an independent signal.
struct SyntheticOptions {
  int num_videos = 200;
  double fake_fraction = 0.5;
  int num_subjects = 20;
  int frames = 16;
  int frame_size = 96;
  int sample_rate = 16000;
  std::uint64_t seed = 0;
  int test_subjects = 0;  // the last subjects are tagged TEST
};

struct SyntheticClip {
  MediaClip clip;
  VideoFrames video;
  std::vector<float> audio;
  int sample_rate = 16000;
  std::vector<double> lip_signal, audio_signal;
};

/// Face ellipse on a dark background with a dark mouth ellipse whose height
/// scales with `opening`. `face` is the face bounding box.
cv::Mat render_face(int size, const cv::Rect& face, double opening, int skin_tone);

/// Harmonic tone whose amplitude in each 40 ms frame follows `envelope`.
std::vector<float> envelope_tone(const std::vector<double>& envelope, double f0, int sample_rate);

std::vector<SyntheticClip> synthesize_corpus(const SyntheticOptions& options);

/// Writes <id>.avi (MJPG) and <id>.wav per clip plus manifest.jsonl.
std::vector<MediaClip> write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticOptions& options);

}  // namespace avsf
