#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <torch/types.h>

namespace avsf {

enum class EmbeddingKind { AV, V, A, SYNC, FUSION };

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view text);

/// Per-frame embeddings [T, D] (FUSION: [T, 2D]) for one clip.
struct EmbeddingSequence {
  torch::Tensor values;
  EmbeddingKind kind = EmbeddingKind::AV;
  std::string clip_id;

  std::int64_t length() const { return values.size(0); }
  std::int64_t width() const { return values.size(1); }
};

}  // namespace avsf
