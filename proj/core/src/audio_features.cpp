#include "avsf/audio_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {
namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

double decode_sample(const unsigned char* p, int format, int bits) {
  if (format == 3) {
    if (bits == 32) {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  switch (bits) {
    case 8: return (double(p[0]) - 128.0) / 128.0;
    case 16: return double(std::int16_t(read_u16(p))) / 32768.0;
    case 24: {
      std::int32_t v = std::int32_t(p[0]) | (std::int32_t(p[1]) << 8) | (std::int32_t(p[2]) << 16);
      if (v & 0x800000) v |= ~0xFFFFFF;
      return double(v) / 8388608.0;
    }
    case 32: return double(std::int32_t(read_u32(p))) / 2147483648.0;
  }
  return 0.0;
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

void AudioFeatureSequence::validate() const {
  if (!features.defined() || features.dim() != 2 || features.size(1) != kAudioFeatureDim) {
    fail(ErrorCode::ShapeMismatch, "audio features must be [frames, 104]");
  }
  if (!torch::isfinite(features).all().item<bool>()) {
    fail(ErrorCode::NonFiniteActivation, "audio features contain non-finite values");
  }
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::DecodeFailure, "cannot open audio " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), {});
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    fail(ErrorCode::DecodeFailure, path.string() + " is not a RIFF/WAVE file");
  }
  int format = 0, channels = 0, bits = 0;
  Waveform wave;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::size_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = std::min(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0 && available >= 16) {
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      wave.sample_rate = int(read_u32(chunk + 12));
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && available >= 26) format = read_u16(chunk + 32);  // extensible
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = available;
    }
    pos = body + size + (size & 1);
  }
  const bool supported = (format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) ||
                         (format == 3 && (bits == 32 || bits == 64));
  if (!supported || channels <= 0 || data == nullptr) {
    fail(ErrorCode::DecodeFailure, path.string() + ": unsupported WAVE encoding");
  }
  const std::size_t frame_bytes = std::size_t(channels) * std::size_t(bits / 8);
  const std::size_t frames = data_size / frame_bytes;
  wave.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += decode_sample(data + i * frame_bytes + std::size_t(c) * (bits / 8), format, bits);
    }
    wave.samples[i] = float(acc / channels);
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  auto u32 = [&](std::uint32_t v) {
    const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF),
                       char((v >> 24) & 0xFF)};
    out.write(b, 4);
  };
  auto u16 = [&](std::uint16_t v) {
    const char b[2] = {char(v & 0xFF), char((v >> 8) & 0xFF)};
    out.write(b, 2);
  };
  const auto data_bytes = std::uint32_t(wave.samples.size() * 2);
  out.write("RIFF", 4);
  u32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  u32(16);
  u16(1);
  u16(1);
  u32(std::uint32_t(wave.sample_rate));
  u32(std::uint32_t(wave.sample_rate) * 2);
  u16(2);
  u16(16);
  out.write("data", 4);
  u32(data_bytes);
  for (float s : wave.samples) {
    const double clipped = std::clamp(double(s), -1.0, 32767.0 / 32768.0);
    u16(std::uint16_t(std::int16_t(std::lround(clipped * 32768.0))));
  }
}

std::vector<float> resample(std::span<const float> samples, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) fail(ErrorCode::UnsupportedSampleRate, "non-positive rate");
  if (from_rate == to_rate) return {samples.begin(), samples.end()};
  const double step = double(from_rate) / double(to_rate);
  const double cutoff = std::min(1.0, double(to_rate) / double(from_rate));
  const double half_width = 16.0 / cutoff;
  const auto n_in = static_cast<std::int64_t>(samples.size());
  const auto n_out = static_cast<std::int64_t>(std::floor(double(n_in) / step));
  std::vector<float> out(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 0)));
  for (std::int64_t n = 0; n < n_out; ++n) {
    const double t = double(n) * step;
    const auto lo = std::max<std::int64_t>(0, std::int64_t(std::ceil(t - half_width)));
    const auto hi = std::min<std::int64_t>(n_in - 1, std::int64_t(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      const double d = t - double(k);
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * d / half_width);
      acc += samples[std::size_t(k)] * cutoff * sinc(cutoff * d) * window;
    }
    out[std::size_t(n)] = float(acc);
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

torch::Tensor mel_filterbank(int num_bands, int fft_size, int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double low = hz_to_mel(0.0);
  const double high = hz_to_mel(sample_rate / 2.0);
  std::vector<int> edge(std::size_t(num_bands) + 2);
  for (int i = 0; i < num_bands + 2; ++i) {
    const double mel = low + (high - low) * i / (num_bands + 1);
    edge[std::size_t(i)] = int(std::floor((fft_size + 1) * mel_to_hz(mel) / sample_rate));
  }
  auto bank = torch::zeros({num_bands, bins}, torch::kFloat64);
  auto acc = bank.accessor<double, 2>();
  for (int j = 0; j < num_bands; ++j) {
    const int a = edge[std::size_t(j)], b = edge[std::size_t(j) + 1], c = edge[std::size_t(j) + 2];
    for (int i = a; i < b; ++i) acc[j][i] = double(i - a) / double(b - a);
    for (int i = b; i < c; ++i) acc[j][i] = double(c - i) / double(c - b);
  }
  return bank;
}

std::int64_t analysis_frame_count(std::int64_t num_samples) {
  if (num_samples < kWindowSamples) return 0;
  return (num_samples - kWindowSamples) / kHopSamples + 1;
}

torch::Tensor log_mel_energies(std::span<const float> samples, const FbankOptions& options) {
  const std::int64_t frames = analysis_frame_count(std::int64_t(samples.size()));
  if (frames == 0) fail(ErrorCode::EmptyAudio, "fewer samples than one 25 ms window");

  std::vector<double> emphasized(samples.size());
  emphasized[0] = samples[0];
  for (std::size_t i = 1; i < samples.size(); ++i) {
    emphasized[i] = double(samples[i]) - options.preemphasis * double(samples[i - 1]);
  }
  auto framed = torch::empty({frames, kWindowSamples}, torch::kFloat64);
  auto acc = framed.accessor<double, 2>();
  for (std::int64_t f = 0; f < frames; ++f) {
    for (int k = 0; k < kWindowSamples; ++k) acc[f][k] = emphasized[std::size_t(f * kHopSamples + k)];
  }
  auto power = torch::fft::rfft(framed, kFftSize, 1).abs().square() / double(kFftSize);
  auto bank = mel_filterbank(options.num_bands, kFftSize, kTargetSampleRate);
  return torch::matmul(power, bank.t()).clamp_min(kLogFloor).log();
}

AudioFeatureSequence compute_logfbank(std::span<const float> samples, int sample_rate,
                                      const FbankOptions& options) {
  if (samples.empty()) fail(ErrorCode::EmptyAudio, "no samples");
  if (sample_rate < kTargetSampleRate) {
    fail(ErrorCode::UnsupportedSampleRate,
         std::to_string(sample_rate) + " Hz is below 16000 Hz");
  }
  std::vector<float> resampled;
  if (sample_rate != kTargetSampleRate) {
    resampled = resample(samples, sample_rate, kTargetSampleRate);
    samples = resampled;
  }
  auto energies = log_mel_energies(samples, options);
  const std::int64_t stacked = energies.size(0) / options.stack;
  if (stacked == 0) fail(ErrorCode::EmptyAudio, "fewer analysis frames than one stack");
  AudioFeatureSequence out;
  out.features = energies.slice(0, 0, stacked * options.stack)
                     .reshape({stacked, options.stack * options.num_bands})
                     .to(torch::kFloat32)
                     .contiguous();
  out.rate = double(kTargetSampleRate) / double(kHopSamples * options.stack);
  return out;
}

}  // namespace avsf
