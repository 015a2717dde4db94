#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include "avsf/alignment.hpp"
#include "avsf/audio_features.hpp"
#include "avsf/dataset.hpp"
#include "avsf/error.hpp"
#include "avsf/landmarks.hpp"
#include "avsf/lip_extraction.hpp"
#include "avsf/manifest.hpp"
#include "avsf/synthetic.hpp"
#include "test_support.hpp"

using namespace avsf;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no avsf::Error thrown";
  return ErrorCode::FormatError;
}

std::string record(const std::string& id, const std::string& label, const std::string& manipulation) {
  return R"({"clip_id":")" + id + R"(","video_path":")" + id + R"(.mp4","audio_path":")" + id +
         R"(.wav","label":")" + label + R"(","subject_id":"s1","manipulation":")" + manipulation +
         R"(","split":"test"})";
}

// Direct definition: pre-emphasis, 25 ms frames, |DFT|^2 / N over 512 bins,
// triangular mel filters between equally spaced mel points, natural log.
std::vector<std::vector<double>> logfbank_oracle(const std::vector<float>& x) {
  const int n_fft = 512, win = 400, hop = 160, bands = 26, rate = 16000;
  auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  auto inv = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  std::vector<int> pts;
  for (int i = 0; i <= bands + 1; ++i) {
    pts.push_back(int(std::floor((n_fft + 1) * inv(mel(rate / 2.0) * i / (bands + 1)) / rate)));
  }
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - (i ? 0.97 * x[i - 1] : 0.0);
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + win <= y.size(); start += hop) {
    std::vector<double> power(n_fft / 2 + 1);
    for (int k = 0; k <= n_fft / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (int t = 0; t < win; ++t) acc += y[start + t] * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n_fft);
      power[k] = std::norm(acc) / n_fft;
    }
    std::vector<double> row;
    for (int b = 0; b < bands; ++b) {
      double e = 0.0;
      for (int k = pts[b]; k < pts[b + 1]; ++k) e += power[k] * (k - pts[b]) / double(pts[b + 1] - pts[b]);
      for (int k = pts[b + 1]; k < pts[b + 2]; ++k) e += power[k] * (pts[b + 2] - k) / double(pts[b + 2] - pts[b + 1]);
      row.push_back(std::log(std::max(e, 1e-10)));
    }
    out.push_back(row);
  }
  return out;
}

std::vector<float> tone(double hz, int samples, int rate, double amp = 0.5) {
  std::vector<float> x(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) x[std::size_t(i)] = float(amp * std::sin(2.0 * std::numbers::pi * hz * i / rate));
  return x;
}

VideoFrames rendered_video(int frames, double fps = 25.0) {
  VideoFrames v;
  v.fps = fps;
  for (int i = 0; i < frames; ++i) v.frames.push_back(render_face(96, {20, 12, 56, 72}, 0.5, 200));
  return v;
}

class MissOnFrame final : public LandmarkProvider {
 public:
  explicit MissOnFrame(std::int64_t miss) : miss_(miss) {}
  std::optional<MouthLandmarks> detect(const cv::Mat& rgb, std::int64_t index) override {
    if (index == miss_) return std::nullopt;
    return inner_.detect(rgb, index);
  }

 private:
  std::int64_t miss_;
  RenderedFaceLandmarkProvider inner_;
};

}  // namespace

TEST(Manifest, ParsesRecordsInFileOrder) {
  const auto text = record("a", "real", "none") + "\n" + record("b", "fake", "faceswap") + "\n" +
                    record("c", "fake", "rtvc") + "\n";
  const auto clips = parse_manifest(text, "/data");
  ASSERT_EQ(clips.size(), 3u);
  EXPECT_EQ(clips[0].clip_id, "a");
  EXPECT_EQ(clips[1].label, Label::Fake);
  EXPECT_EQ(clips[2].manipulation, Manipulation::Rtvc);
  EXPECT_EQ(clips[0].video_path, std::filesystem::path("/data/a.mp4"));
  EXPECT_EQ(clips[0].split, Split::Test);
}

TEST(Manifest, EmptyTextGivesNoClips) { EXPECT_TRUE(parse_manifest("").empty()); }

TEST(Manifest, DuplicateIdsAreRejected) {
  const auto text = record("c1", "real", "none") + "\n" + record("c1", "fake", "fsgan") + "\n";
  try {
    parse_manifest(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateClipId);
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
  }
}

TEST(Manifest, FieldAndEnumErrors) {
  EXPECT_EQ(code_of([] { parse_manifest(R"({"clip_id":"x","label":"real"})"); }), ErrorCode::MissingField);
  EXPECT_EQ(code_of([] { parse_manifest(record("x", "bogus", "none")); }), ErrorCode::UnknownLabel);
  EXPECT_EQ(code_of([] { parse_manifest(record("x", "real", "faceswap")); }), ErrorCode::InvalidRecord);
  EXPECT_EQ(code_of([] { parse_manifest(record("x", "fake", "none")); }), ErrorCode::InvalidRecord);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto dir = fixtures::scratch_dir("manifest_roundtrip");
  std::vector<MediaClip> clips;
  for (int i = 0; i < 8; ++i) {
    MediaClip c;
    c.clip_id = "clip" + std::to_string(i);
    c.video_path = dir / (c.clip_id + ".mp4");
    c.audio_path = c.video_path;
    c.label = i % 2 ? Label::Fake : Label::Real;
    c.manipulation = i % 2 ? Manipulation(1 + i % 7) : Manipulation::None;
    c.subject_id = "s" + std::to_string(i / 3);
    c.split = Split(i % 3);
    clips.push_back(c);
  }
  save_manifest(dir / "m.jsonl", clips);
  EXPECT_EQ(load_manifest(dir / "m.jsonl"), clips);
}

TEST(AudioFeatures, MelScaleRoundTrip) {
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-9);
  for (double hz : {0.0, 100.0, 1000.0, 7999.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(hz)), hz, 1e-6);
}

TEST(AudioFeatures, OneSecondGivesTwentyFourStackedFrames) {
  const auto f = compute_logfbank(tone(300.0, 16000, 16000), 16000);
  EXPECT_EQ(f.features.size(0), 24);
  EXPECT_EQ(f.features.size(1), 104);
  EXPECT_DOUBLE_EQ(f.rate, 25.0);
}

TEST(AudioFeatures, FrameCountLawHoldsForRandomLengths) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> len(1600, 20000);
  for (int trial = 0; trial < 40; ++trial) {
    const int s = len(rng);
    const auto expected = ((s - 400) / 160 + 1) / 4;
    std::vector<float> x(std::size_t(s), 0.1f);
    EXPECT_EQ(compute_logfbank(x, 16000).features.size(0), expected) << "S=" << s;
  }
}

TEST(AudioFeatures, SilenceHitsTheLogFloor) {
  const auto f = compute_logfbank(std::vector<float>(8000, 0.0f), 16000).features;
  EXPECT_TRUE(torch::allclose(f, torch::full_like(f, float(std::log(1e-10)))));
}

TEST(AudioFeatures, PureToneHasAStableArgmaxBand) {
  const auto f = compute_logfbank(tone(440.0, 16000, 16000), 16000).features.reshape({-1, 26});
  const auto arg = f.argmax(1);
  EXPECT_TRUE((arg == arg[0]).all().item<bool>());
}

TEST(AudioFeatures, MatchesDirectDftOracle) {
  std::mt19937 rng(3);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  auto x = tone(523.0, 3000, 16000, 0.3);
  for (auto& v : x) v += noise(rng);
  const auto expected = logfbank_oracle(x);
  const auto got = log_mel_energies(x);
  ASSERT_EQ(got.size(0), std::int64_t(expected.size()));
  for (std::size_t f = 0; f < expected.size(); ++f) {
    for (int b = 0; b < 26; ++b) EXPECT_NEAR(got[std::int64_t(f)][b].item<double>(), expected[f][std::size_t(b)], 1e-6);
  }
  const auto stacked = compute_logfbank(x, 16000).features;
  EXPECT_NEAR(stacked[1][26 * 2 + 5].item<double>(), expected[6][5], 1e-4);
}

TEST(AudioFeatures, FilterbankTrianglesPeakAtOne) {
  const auto bank = mel_filterbank(26, 512, 16000);
  EXPECT_EQ(bank.size(0), 26);
  EXPECT_EQ(bank.size(1), 257);
  EXPECT_TRUE((bank >= 0).all().item<bool>());
  for (int b = 0; b < 26; ++b) EXPECT_NEAR(bank[b].max().item<double>(), 1.0, 1e-12);
}

TEST(AudioFeatures, HigherRatesAreResampled) {
  const auto native = compute_logfbank(tone(440.0, 16000, 16000), 16000).features;
  const auto high = compute_logfbank(tone(440.0, 44100, 44100), 44100).features;
  EXPECT_EQ(high.size(0), native.size(0));
  EXPECT_LT(fixtures::max_abs_diff(high.slice(0, 2, 20), native.slice(0, 2, 20)), 0.1);
}

TEST(AudioFeatures, RejectsLowRatesAndShortInput) {
  EXPECT_EQ(code_of([] { compute_logfbank(std::vector<float>(8000, 0.1f), 8000); }), ErrorCode::UnsupportedSampleRate);
  EXPECT_EQ(code_of([] { compute_logfbank(std::vector<float>{}, 16000); }), ErrorCode::EmptyAudio);
  EXPECT_EQ(code_of([] { compute_logfbank(std::vector<float>(300, 0.1f), 16000); }), ErrorCode::EmptyAudio);
}

TEST(AudioFeatures, WavRoundTrip) {
  const auto dir = fixtures::scratch_dir("wav");
  const auto x = tone(200.0, 1600, 16000);
  write_wav(dir / "a.wav", {x, 16000});
  const auto back = read_wav(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), x.size());
  EXPECT_EQ(back.sample_rate, 16000);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(back.samples[i], x[i], 2.0 / 32767);
}

TEST(LipExtraction, StaticRenderedFaceShape) {
  RenderedFaceLandmarkProvider provider;
  const auto lips = extract_lip_sequence(rendered_video(40), provider);
  EXPECT_EQ(lips.frames.sizes(), (std::vector<std::int64_t>{1, 40, 96, 96}));
  EXPECT_GE(lips.frames.min().item<float>(), 0.0f);
  EXPECT_LE(lips.frames.max().item<float>(), 1.0f);
}

TEST(LipExtraction, BlackVideoHasNoFace) {
  VideoFrames v;
  v.frames.assign(5, cv::Mat::zeros(96, 96, CV_8UC3));
  RenderedFaceLandmarkProvider provider;
  EXPECT_EQ(code_of([&] { extract_lip_sequence(v, provider); }), ErrorCode::NoFaceInFirstFrame);
}

TEST(LipExtraction, UniformGrayGivesHalf) {
  VideoFrames v;
  v.frames.assign(3, cv::Mat(120, 160, CV_8UC3, cv::Scalar(128, 128, 128)));
  FixedLandmarkProvider provider(mouth_ellipse_landmarks({80, 80}, 20, 6));
  const auto lips = extract_lip_sequence(v, provider);
  EXPECT_LE((lips.frames - 0.5).abs().max().item<float>(), 1.0f / 255.0f);
}

TEST(LipExtraction, GrayscaleIsIdempotent) {
  cv::Mat img(32, 32, CV_8UC3);
  cv::randu(img, 0, 255);
  const auto gray = rgb_to_gray(img);
  cv::Mat gray_u8(32, 32, CV_8UC1);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) gray_u8.at<std::uint8_t>(y, x) = cv::saturate_cast<std::uint8_t>(gray[y][x].item<float>() * 255.0f);
  cv::Mat rgb;
  cv::cvtColor(gray_u8, rgb, cv::COLOR_GRAY2RGB);
  EXPECT_LE(fixtures::max_abs_diff(rgb_to_gray(rgb), gray), 1.0 / 255.0 + 1e-6);
}

TEST(LipExtraction, CropBoxFollowsCentroidAndClamps) {
  const auto lm = mouth_ellipse_landmarks({50, 60}, 10, 4);
  const auto box = mouth_crop_box(lm, {200, 200}, 1.3);
  EXPECT_EQ(box.width, 26);
  EXPECT_EQ(box.height, 26);
  EXPECT_NEAR(box.x + box.width / 2.0, 50.0, 1.0);
  EXPECT_NEAR(box.y + box.height / 2.0, 60.0, 1.0);
  const auto edge = mouth_crop_box(mouth_ellipse_landmarks({2, 197}, 10, 4), {200, 200}, 1.3);
  EXPECT_EQ(edge.x, 0);
  EXPECT_EQ(edge.y + edge.height, 200);
}

TEST(LipExtraction, MissedDetectionReusesPreviousBox) {
  MissOnFrame provider(2);
  RenderedFaceLandmarkProvider reference;
  const auto video = rendered_video(4);
  const auto a = extract_lip_sequence(video, provider);
  const auto b = extract_lip_sequence(video, reference);
  EXPECT_TRUE(torch::equal(a.frames, b.frames));
}

TEST(LipExtraction, FrameRateConversionByNearestFrame) {
  const auto idx = resample_frame_indices(60, 30.0, 25.0);
  ASSERT_EQ(idx.size(), 50u);
  EXPECT_EQ(idx[0], 0);
  EXPECT_EQ(idx[5], 6);
  EXPECT_EQ(idx.back(), 59);
  EXPECT_EQ(resample_frame_indices(10, 25.0, 25.0).size(), 10u);
}

TEST(Alignment, TruncatesToShorterModality) {
  auto lips = fixtures::random_pair(40, 1).lips;
  auto audio = fixtures::random_pair(38, 2).audio;
  auto pair = align_pair(lips, audio);
  EXPECT_EQ(pair.length(), 38);
  EXPECT_EQ(pair.audio.num_frames(), 38);
  auto same = align_pair(fixtures::random_pair(25, 1).lips, fixtures::random_pair(25, 2).audio);
  EXPECT_EQ(same.length(), 25);
  LipSequence empty;
  empty.frames = torch::zeros({1, 0, 96, 96});
  EXPECT_EQ(code_of([&] { align_pair(empty, audio); }), ErrorCode::EmptyModality);
}

TEST(Dataset, PreprocessWritesIdempotentCacheAndCollectsFailures) {
  const auto dir = fixtures::scratch_dir("preprocess");
  SyntheticOptions options;
  options.num_videos = 4;
  options.num_subjects = 2;
  auto clips = write_synthetic_corpus(dir / "media", options);
  MediaClip broken = clips.front();
  broken.clip_id = "broken";
  broken.video_path = dir / "media" / "broken.avi";
  std::ofstream(broken.video_path) << "not a video";
  clips.push_back(broken);

  auto factory = [](const MediaClip&) { return std::make_unique<RenderedFaceLandmarkProvider>(); };
  const auto first = preprocess_manifest(clips, dir / "cache", factory, {});
  EXPECT_EQ(first.total, 5);
  EXPECT_EQ(first.recomputed, 4);
  ASSERT_EQ(first.failures.size(), 1u);
  EXPECT_EQ(first.failures[0].clip_id, "broken");

  const auto second = preprocess_manifest(clips, dir / "cache", factory, {});
  EXPECT_EQ(second.recomputed, 0);
  EXPECT_EQ(second.up_to_date, 4);

  clips.pop_back();
  const auto samples = load_samples(clips, dir / "cache");
  ASSERT_EQ(samples.size(), 4u);
  for (const auto& s : samples) {
    EXPECT_EQ(s.pair.lips.num_frames(), s.pair.audio.num_frames());
    EXPECT_EQ(s.pair.length(), options.frames);
  }
  const auto reread = read_cache_entry(cache_entry_path(dir / "cache", clips[0].clip_id));
  EXPECT_TRUE(torch::equal(reread.pair.lips.frames, samples[0].pair.lips.frames));
  EXPECT_TRUE(torch::equal(reread.pair.audio.features, samples[0].pair.audio.features));
}

TEST(Dataset, FileAndMemoryIngestAgreeOnAudio) {
  SyntheticOptions options;
  options.num_videos = 2;
  const auto dir = fixtures::scratch_dir("ingest_paths");
  const auto clips = write_synthetic_corpus(dir, options);
  RenderedFaceLandmarkProvider provider;
  const auto from_file = preprocess_clip(clips[0], provider, {});
  const auto from_memory = fixtures::synthetic_samples(options)[0];
  EXPECT_EQ(from_file.pair.length(), from_memory.pair.length());
  auto voiced = [](const Sample& s) { return s.pair.audio.features.reshape({-1, 26}).slice(1, 1, 7); };
  EXPECT_LT(fixtures::max_abs_diff(voiced(from_file), voiced(from_memory)), 0.05);
}
