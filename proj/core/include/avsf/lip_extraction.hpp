#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <opencv2/core.hpp>
#include <torch/types.h>

#include "avsf/landmarks.hpp"
#include "avsf/manifest.hpp"

namespace avsf {

inline constexpr int kLipSize = 96;
inline constexpr double kTargetFps = 25.0;

/// Grayscale mouth crops laid out C×F×H×W = 1×F×96×96, float32 in [0, 1].
struct LipSequence {
  torch::Tensor frames;
  double fps = kTargetFps;

  std::int64_t num_frames() const { return frames.defined() ? frames.size(1) : 0; }
  void validate() const;
};

/// Decoded RGB uint8 frames (CV_8UC3, RGB channel order).
struct VideoFrames {
  std::vector<cv::Mat> frames;
  double fps = kTargetFps;
};

struct LipOptions {
  double crop_margin = 1.3;  // crop side as a multiple of mouth width
  int output_size = kLipSize;
  double target_fps = kTargetFps;
};

/// Decodes every frame of a video file through OpenCV.
VideoFrames decode_video(const std::filesystem::path& path);

/// Nearest-frame selection for converting `count` frames at `source_fps`
/// into the target rate.
std::vector<std::int64_t> resample_frame_indices(std::int64_t count, double source_fps,
                                                 double target_fps);

/// Square box centred on the landmark centroid with side margin × mouth width,
/// shifted (and if necessary shrunk) to lie inside the image.
cv::Rect mouth_crop_box(const MouthLandmarks& landmarks, cv::Size image_size, double margin);

/// Crops, resizes to size×size and converts to BT.601 luma in [0, 1].
torch::Tensor crop_to_gray(const cv::Mat& rgb_frame, const cv::Rect& box, int size);

/// BT.601 luma of an RGB image, float32 in [0, 1], shape [H, W].
torch::Tensor rgb_to_gray(const cv::Mat& rgb_frame);

LipSequence extract_lip_sequence(const VideoFrames& video, LandmarkProvider& landmarks,
                                 const LipOptions& options = {});

LipSequence extract_lip_sequence(const MediaClip& clip, LandmarkProvider& landmarks,
                                 const LipOptions& options = {});

}  // namespace avsf
