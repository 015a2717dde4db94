#include "avsf/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "avsf/audio_features.hpp"
#include "avsf/error.hpp"
#include "avsf/landmarks.hpp"

namespace avsf {
namespace {

constexpr Manipulation kFakeKinds[] = {Manipulation::Faceswap, Manipulation::Fsgan, Manipulation::Wav2lip,
                                       Manipulation::FaceswapWav2lip, Manipulation::FsganWav2lip, Manipulation::Rtvc};

std::vector<double> random_signal(int frames, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(static_cast<std::size_t>(frames));
  for (auto& v : s) v = u(rng);
  return s;
}

}  // namespace

cv::Mat render_face(int size, const cv::Rect& face, double opening, int skin_tone) {
  cv::Mat img(size, size, CV_8UC3, cv::Scalar(8, 8, 8));
  const cv::Point2f centre(face.x + face.width / 2.0f, face.y + face.height / 2.0f);
  cv::ellipse(img, cv::Point(centre), cv::Size(face.width / 2, face.height / 2), 0, 0, 360,
              cv::Scalar(skin_tone, skin_tone * 0.8, skin_tone * 0.7), cv::FILLED, cv::LINE_AA);
  const cv::Point2f mouth(face.x + FaceLayout::kMouthCenterX * face.width, face.y + FaceLayout::kMouthCenterY * face.height);
  const float half_w = FaceLayout::kMouthHalfWidth * face.width;
  const float half_h = std::max(0.5f, float(FaceLayout::kMouthHalfHeight * face.height * (0.15 + 0.85 * opening)));
  cv::ellipse(img, cv::RotatedRect(mouth, cv::Size2f(2 * half_w, 2 * half_h), 0), cv::Scalar(40, 10, 10), cv::FILLED,
              cv::LINE_AA);
  return img;
}

std::vector<float> envelope_tone(const std::vector<double>& envelope, double f0, int sample_rate) {
  const auto per_frame = std::size_t(sample_rate / 25);
  const std::size_t total = envelope.size() * per_frame + std::size_t(sample_rate * 0.015);
  std::vector<float> out(total);
  for (std::size_t i = 0; i < total; ++i) {
    const double t = double(i) / sample_rate;
    const double amp = 0.02 + 0.5 * envelope[std::min(i / per_frame, envelope.size() - 1)];
    double v = 0.0;
    for (int h = 1; h <= 4; ++h) v += std::sin(2.0 * std::numbers::pi * f0 * h * t) / h;
    out[i] = float(amp * v / 2.1);
  }
  return out;
}

std::vector<SyntheticClip> synthesize_corpus(const SyntheticOptions& options) {
  if (options.num_videos < 2 || options.num_subjects < 1 || options.test_subjects < 0 ||
      options.test_subjects >= options.num_subjects || options.frames < 1 || options.frame_size < 32) {
    fail(ErrorCode::InvalidConfig, "synthetic corpus options out of range");
  }
  std::mt19937_64 rng(options.seed);
  const int fakes = int(std::lround(options.num_videos * options.fake_fraction));
  std::vector<SyntheticClip> clips;
  for (int i = 0; i < options.num_videos; ++i) {
    const bool fake = std::int64_t(i + 1) * fakes / options.num_videos != std::int64_t(i) * fakes / options.num_videos;
    const int subject = int(std::int64_t(i) * options.num_subjects / options.num_videos);
    std::mt19937_64 subject_rng(options.seed * 7919 + std::uint64_t(subject));
    std::uniform_int_distribution<int> jitter(-4, 4), tone(150, 230);
    std::uniform_real_distribution<double> pitch(110.0, 240.0);
    const int s = options.frame_size;
    const cv::Rect face(s / 5 + jitter(subject_rng), s / 8 + jitter(subject_rng), s * 3 / 5, s * 3 / 4);
    const int skin = tone(subject_rng);
    const double f0 = pitch(subject_rng);

    SyntheticClip c;
    c.lip_signal = random_signal(options.frames, rng);
    c.audio_signal = fake ? random_signal(options.frames, rng) : c.lip_signal;
    c.clip.clip_id = (fake ? "fake_" : "real_") + std::to_string(i);
    c.clip.label = fake ? Label::Fake : Label::Real;
    c.clip.manipulation = fake ? kFakeKinds[std::int64_t(i) * fakes / options.num_videos % 6] : Manipulation::None;
    c.clip.subject_id = "subject_" + std::to_string(subject);
    c.clip.split = subject >= options.num_subjects - options.test_subjects ? Split::Test : Split::Train;
    c.video.fps = kTargetFps;
    for (double opening : c.lip_signal) c.video.frames.push_back(render_face(s, face, opening, skin));
    c.audio = envelope_tone(c.audio_signal, f0, options.sample_rate);
    c.sample_rate = options.sample_rate;
    clips.push_back(std::move(c));
  }
  return clips;
}

std::vector<MediaClip> write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<MediaClip> manifest;
  for (auto& c : synthesize_corpus(options)) {
    const auto video_path = dir / (c.clip.clip_id + ".avi");
    const auto audio_path = dir / (c.clip.clip_id + ".wav");
    cv::VideoWriter writer(video_path.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), c.video.fps,
                           cv::Size(options.frame_size, options.frame_size));
    if (!writer.isOpened()) fail(ErrorCode::IoError, "cannot open video writer for " + video_path.string());
    cv::Mat bgr;
    for (const auto& frame : c.video.frames) {
      cv::cvtColor(frame, bgr, cv::COLOR_RGB2BGR);
      writer.write(bgr);
    }
    writer.release();
    write_wav(audio_path, Waveform{c.audio, c.sample_rate});
    c.clip.video_path = video_path.filename();
    c.clip.audio_path = audio_path.filename();
    manifest.push_back(c.clip);
  }
  save_manifest(dir / "manifest.jsonl", manifest);
  for (auto& clip : manifest) {
    clip.video_path = dir / clip.video_path;
    clip.audio_path = dir / clip.audio_path;
  }
  return manifest;
}

}  // namespace avsf
