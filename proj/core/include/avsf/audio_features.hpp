#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/types.h>

namespace avsf {

inline constexpr int kTargetSampleRate = 16000;
inline constexpr int kWindowSamples = 400;  // 25 ms at 16 kHz
inline constexpr int kHopSamples = 160;     // 10 ms at 16 kHz
inline constexpr int kFftSize = 512;
inline constexpr int kMelBands = 26;
inline constexpr int kStackFrames = 4;
inline constexpr int kAudioFeatureDim = kMelBands * kStackFrames;  // 104
inline constexpr double kLogFloor = 1e-10;

/// Stacked log filterbank energies, shape [frames, 104], float32, 25 frames/s.
struct AudioFeatureSequence {
  torch::Tensor features;
  double rate = 25.0;

  std::int64_t num_frames() const { return features.defined() ? features.size(0) : 0; }
  void validate() const;
};

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kTargetSampleRate;
};

struct FbankOptions {
  double preemphasis = 0.97;
  int num_bands = kMelBands;
  int stack = kStackFrames;
};

/// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit or IEEE float 32/64) and
/// averages channels to mono.
Waveform read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

/// Band-limited (Hann-windowed sinc) sample-rate conversion.
std::vector<float> resample(std::span<const float> samples, int from_rate, int to_rate);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular mel filterbank over the rfft bins, shape [num_bands, fft/2+1].
torch::Tensor mel_filterbank(int num_bands, int fft_size, int sample_rate);

/// Number of 10 ms analysis frames for `num_samples` at 16 kHz (0 if too short).
std::int64_t analysis_frame_count(std::int64_t num_samples);

/// Per-frame 26-band log mel energies before stacking, shape [frames, bands].
torch::Tensor log_mel_energies(std::span<const float> samples_16k, const FbankOptions& options = {});

/// Full acoustic front end: resample to 16 kHz if needed, log mel energies,
/// stack every `stack` consecutive frames (stride `stack`, remainder dropped).
AudioFeatureSequence compute_logfbank(std::span<const float> samples, int sample_rate,
                                      const FbankOptions& options = {});

}  // namespace avsf
