#include "avsf/lip_extraction.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>
#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {

void LipSequence::validate() const {
  if (!frames.defined() || frames.dim() != 4 || frames.size(0) != 1 || frames.size(1) < 1 ||
      frames.size(2) != kLipSize || frames.size(3) != kLipSize) {
    fail(ErrorCode::ShapeMismatch, "lip sequence must be 1×F×96×96 with F ≥ 1");
  }
  if (!torch::isfinite(frames).all().item<bool>() || frames.min().item<float>() < 0.f ||
      frames.max().item<float>() > 1.f) {
    fail(ErrorCode::NonFiniteActivation, "lip pixels must be finite and within [0, 1]");
  }
}

VideoFrames decode_video(const std::filesystem::path& path) {
  cv::VideoCapture capture(path.string());
  if (!capture.isOpened()) fail(ErrorCode::DecodeFailure, "cannot open video " + path.string());
  VideoFrames video;
  const double fps = capture.get(cv::CAP_PROP_FPS);
  video.fps = fps > 0.0 ? fps : kTargetFps;
  cv::Mat bgr;
  while (capture.read(bgr)) {
    if (bgr.empty()) break;
    cv::Mat rgb;
    if (bgr.channels() == 1) {
      cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
    } else {
      cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    }
    video.frames.push_back(std::move(rgb));
  }
  if (video.frames.empty()) fail(ErrorCode::DecodeFailure, "no frames decoded from " + path.string());
  return video;
}

std::vector<std::int64_t> resample_frame_indices(std::int64_t count, double source_fps,
                                                 double target_fps) {
  if (count <= 0) return {};
  if (std::abs(source_fps - target_fps) < 1e-6) {
    std::vector<std::int64_t> identity(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) identity[std::size_t(i)] = i;
    return identity;
  }
  const auto out_count =
      std::max<std::int64_t>(1, std::llround(double(count) * target_fps / source_fps));
  std::vector<std::int64_t> indices(static_cast<std::size_t>(out_count));
  for (std::int64_t j = 0; j < out_count; ++j) {
    const auto src = std::llround(double(j) * source_fps / target_fps);
    indices[std::size_t(j)] = std::clamp<std::int64_t>(src, 0, count - 1);
  }
  return indices;
}

cv::Rect mouth_crop_box(const MouthLandmarks& landmarks, cv::Size image_size, double margin) {
  if (landmarks.points.empty()) fail(ErrorCode::InvalidRecord, "empty mouth landmarks");
  float min_x = landmarks.points.front().x, max_x = min_x;
  cv::Point2d centroid(0, 0);
  for (const auto& p : landmarks.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    centroid += cv::Point2d(p.x, p.y);
  }
  centroid *= 1.0 / double(landmarks.points.size());
  int side = int(std::lround(margin * double(max_x - min_x)));
  side = std::clamp(side, 1, std::min(image_size.width, image_size.height));
  const int x0 = std::clamp(int(std::lround(centroid.x - side / 2.0)), 0, image_size.width - side);
  const int y0 = std::clamp(int(std::lround(centroid.y - side / 2.0)), 0, image_size.height - side);
  return {x0, y0, side, side};
}

torch::Tensor rgb_to_gray(const cv::Mat& rgb_frame) {
  cv::Mat rgb_f;
  rgb_frame.convertTo(rgb_f, CV_32FC3, 1.0 / 255.0);
  cv::Mat gray(rgb_f.size(), CV_32FC1);
  for (int y = 0; y < rgb_f.rows; ++y) {
    const auto* src = rgb_f.ptr<cv::Vec3f>(y);
    auto* dst = gray.ptr<float>(y);
    for (int x = 0; x < rgb_f.cols; ++x) {
      dst[x] = 0.299f * src[x][0] + 0.587f * src[x][1] + 0.114f * src[x][2];
    }
  }
  return torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kFloat32).clone().clamp(0.0, 1.0);
}

torch::Tensor crop_to_gray(const cv::Mat& rgb_frame, const cv::Rect& box, int size) {
  cv::Mat resized;
  const int interpolation = box.width >= size ? cv::INTER_AREA : cv::INTER_LINEAR;
  cv::resize(rgb_frame(box), resized, cv::Size(size, size), 0, 0, interpolation);
  return rgb_to_gray(resized);
}

LipSequence extract_lip_sequence(const VideoFrames& video, LandmarkProvider& landmarks,
                                 const LipOptions& options) {
  if (video.frames.empty()) fail(ErrorCode::DecodeFailure, "video has no frames");
  const auto indices =
      resample_frame_indices(std::int64_t(video.frames.size()), video.fps, options.target_fps);
  auto out = torch::empty({1, std::int64_t(indices.size()), options.output_size, options.output_size},
                          torch::kFloat32);
  std::optional<cv::Rect> previous_box;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const cv::Mat& frame = video.frames[std::size_t(indices[j])];
    if (frame.empty() || frame.type() != CV_8UC3) {
      fail(ErrorCode::DecodeFailure, "frame " + std::to_string(indices[j]) + " is not 8-bit RGB");
    }
    auto detected = landmarks.detect(frame, indices[j]);
    if (detected && !detected->points.empty()) {
      previous_box = mouth_crop_box(*detected, frame.size(), options.crop_margin);
    } else if (!previous_box) {
      fail(ErrorCode::NoFaceInFirstFrame, "no face detected in the first frame");
    }
    out[0][std::int64_t(j)] = crop_to_gray(frame, *previous_box, options.output_size);
  }
  LipSequence lips;
  lips.frames = out;
  lips.fps = options.target_fps;
  return lips;
}

LipSequence extract_lip_sequence(const MediaClip& clip, LandmarkProvider& landmarks,
                                 const LipOptions& options) {
  return extract_lip_sequence(decode_video(clip.video_path), landmarks, options);
}

}  // namespace avsf
