#include "avsf/alignment.hpp"

#include <algorithm>

#include "avsf/error.hpp"

namespace avsf {

AlignedPair align_pair(const LipSequence& lips, const AudioFeatureSequence& audio) {
  if (lips.num_frames() == 0) fail(ErrorCode::EmptyModality, "lip sequence is empty");
  if (audio.num_frames() == 0) fail(ErrorCode::EmptyModality, "audio sequence is empty");
  const std::int64_t t = std::min(lips.num_frames(), audio.num_frames());
  AlignedPair pair;
  pair.lips.frames = lips.frames.slice(1, 0, t).contiguous();
  pair.lips.fps = lips.fps;
  pair.audio.features = audio.features.slice(0, 0, t).contiguous();
  pair.audio.rate = audio.rate;
  return pair;
}

}  // namespace avsf
