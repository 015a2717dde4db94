#include "avsf/landmarks.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "avsf/error.hpp"

namespace avsf {

MouthLandmarks mouth_ellipse_landmarks(cv::Point2f center, float half_width, float half_height) {
  MouthLandmarks out;
  // 12 outer points starting at the left corner, then 8 inner points.
  for (int i = 0; i < 12; ++i) {
    const double angle = std::numbers::pi + 2.0 * std::numbers::pi * i / 12.0;
    out.points.emplace_back(center.x + half_width * float(std::cos(angle)),
                            center.y + half_height * float(std::sin(angle)));
  }
  for (int i = 0; i < 8; ++i) {
    const double angle = std::numbers::pi + 2.0 * std::numbers::pi * i / 8.0;
    out.points.emplace_back(center.x + 0.8f * half_width * float(std::cos(angle)),
                            center.y + 0.5f * half_height * float(std::sin(angle)));
  }
  return out;
}

std::optional<MouthLandmarks> RenderedFaceLandmarkProvider::detect(const cv::Mat& rgb_frame,
                                                                   std::int64_t) {
  cv::Mat gray;
  cv::cvtColor(rgb_frame, gray, cv::COLOR_RGB2GRAY);
  cv::Mat mask = gray > threshold_;
  std::vector<cv::Point> bright;
  cv::findNonZero(mask, bright);
  if (bright.size() < 16) return std::nullopt;
  const cv::Rect box = cv::boundingRect(bright);
  const cv::Point2f center(box.x + FaceLayout::kMouthCenterX * box.width,
                           box.y + FaceLayout::kMouthCenterY * box.height);
  return mouth_ellipse_landmarks(center, FaceLayout::kMouthHalfWidth * box.width,
                                 FaceLayout::kMouthHalfHeight * box.height);
}

LandmarkFileProvider::LandmarkFileProvider(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open landmarks " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, path.string() + ": " + e.what());
  }
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    fail(ErrorCode::FormatError, path.string() + ": expected a 'frames' array");
  }
  for (const auto& frame : doc["frames"]) {
    if (frame.is_null() || frame.empty()) {
      frames_.emplace_back(std::nullopt);
      continue;
    }
    MouthLandmarks landmarks;
    for (const auto& p : frame) landmarks.points.emplace_back(p.at(0).get<float>(), p.at(1).get<float>());
    frames_.emplace_back(std::move(landmarks));
  }
}

std::optional<MouthLandmarks> LandmarkFileProvider::detect(const cv::Mat&, std::int64_t frame_index) {
  if (frame_index < 0 || frame_index >= std::int64_t(frames_.size())) return std::nullopt;
  return frames_[std::size_t(frame_index)];
}

}  // namespace avsf
