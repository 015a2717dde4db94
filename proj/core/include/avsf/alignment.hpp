#pragma once

#include <cstdint>

#include "avsf/audio_features.hpp"
#include "avsf/lip_extraction.hpp"

namespace avsf {

/// Lips and audio features with an identical frame count T.
struct AlignedPair {
  LipSequence lips;
  AudioFeatureSequence audio;

  std::int64_t length() const { return lips.num_frames(); }
};

/// Truncates both modalities to T = min(lip frames, audio frames).
AlignedPair align_pair(const LipSequence& lips, const AudioFeatureSequence& audio);

}  // namespace avsf
