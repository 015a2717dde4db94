#pragma once

#include <torch/types.h>

#include "avsf/embedding.hpp"

namespace avsf {

/// Frame-wise |F_v - F_a| over [..., T, D] tensors. With `normalize`, each
/// frame embedding is L2-normalized first (off by default).
torch::Tensor sync_features(const torch::Tensor& lip_embeddings, const torch::Tensor& audio_embeddings,
                            bool normalize = false);

/// Feature-dimension concatenation [..., T, D] ⊕ [..., T, D] -> [..., T, 2D].
torch::Tensor fuse_features(const torch::Tensor& av_embeddings, const torch::Tensor& sync);

/// Sync-check feature between lip-only (kind V) and audio-only (kind A) embeddings.
EmbeddingSequence sync_check(const EmbeddingSequence& lip, const EmbeddingSequence& audio,
                             bool normalize = false);

/// Joint embeddings (kind AV) followed column-wise by the sync feature.
EmbeddingSequence fuse(const EmbeddingSequence& av, const EmbeddingSequence& sync);

}  // namespace avsf
