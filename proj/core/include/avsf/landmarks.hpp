#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <opencv2/core.hpp>

namespace avsf {

/// Mouth landmark points in pixel coordinates of the source frame
/// (dlib's 68-point scheme uses indices 48..67).
struct MouthLandmarks {
  std::vector<cv::Point2f> points;
};

/// Source of per-frame mouth landmarks. `detect` returns nullopt when no
/// face is found in the frame.
class LandmarkProvider {
 public:
  virtual ~LandmarkProvider() = default;

  virtual std::optional<MouthLandmarks> detect(const cv::Mat& rgb_frame,
                                               std::int64_t frame_index) = 0;

  /// True when one instance may serve several workers at once.
  virtual bool shareable() const { return false; }
};

/// Returns the same landmarks for every frame.
class FixedLandmarkProvider final : public LandmarkProvider {
 public:
  explicit FixedLandmarkProvider(MouthLandmarks landmarks) : landmarks_(std::move(landmarks)) {}

  std::optional<MouthLandmarks> detect(const cv::Mat&, std::int64_t) override { return landmarks_; }
  bool shareable() const override { return true; }

 private:
  MouthLandmarks landmarks_;
};

/// Geometry of the synthetic talking-head renderer, shared by the renderer
/// and the landmark heuristic so both agree on where the mouth sits.
struct FaceLayout {
  static constexpr float kMouthCenterX = 0.5f;   // fraction of face box width
  static constexpr float kMouthCenterY = 0.74f;  // fraction of face box height
  static constexpr float kMouthHalfWidth = 0.18f;
  static constexpr float kMouthHalfHeight = 0.06f;
};

/// Deterministic detector for rendered faces on a dark background: the face
/// box is the bounding box of pixels brighter than `threshold`, and mouth
/// landmarks are placed at fixed relative positions inside it.
class RenderedFaceLandmarkProvider final : public LandmarkProvider {
 public:
  explicit RenderedFaceLandmarkProvider(int threshold = 24) : threshold_(threshold) {}

  std::optional<MouthLandmarks> detect(const cv::Mat& rgb_frame, std::int64_t frame_index) override;
  bool shareable() const override { return true; }

 private:
  int threshold_;
};

/// Replays landmarks produced offline by an external detector. The JSON file
/// holds {"frames": [[[x, y], ...] | null, ...]} indexed by source frame.
class LandmarkFileProvider final : public LandmarkProvider {
 public:
  explicit LandmarkFileProvider(const std::filesystem::path& path);

  std::optional<MouthLandmarks> detect(const cv::Mat& rgb_frame, std::int64_t frame_index) override;
  bool shareable() const override { return true; }

 private:
  std::vector<std::optional<MouthLandmarks>> frames_;
};

/// 20 points on the outer/inner lip contours of an axis-aligned ellipse.
MouthLandmarks mouth_ellipse_landmarks(cv::Point2f center, float half_width, float half_height);

}  // namespace avsf
