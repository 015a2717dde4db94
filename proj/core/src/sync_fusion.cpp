#include "avsf/sync_fusion.hpp"

#include <torch/torch.h>

#include "avsf/error.hpp"

namespace avsf {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.defined() || !b.defined() || a.sizes() != b.sizes() || a.dim() < 2) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": inputs must share a [T, D] shape");
  }
}

}  // namespace

torch::Tensor sync_features(const torch::Tensor& lip_embeddings, const torch::Tensor& audio_embeddings,
                            bool normalize) {
  require_same_shape(lip_embeddings, audio_embeddings, "sync_check");
  if (!normalize) return (lip_embeddings - audio_embeddings).abs();
  namespace F = torch::nn::functional;
  auto opts = F::NormalizeFuncOptions().dim(-1).p(2);
  return (F::normalize(lip_embeddings, opts) - F::normalize(audio_embeddings, opts)).abs();
}

torch::Tensor fuse_features(const torch::Tensor& av_embeddings, const torch::Tensor& sync) {
  require_same_shape(av_embeddings, sync, "fuse");
  return torch::cat({av_embeddings, sync}, -1);
}

EmbeddingSequence sync_check(const EmbeddingSequence& lip, const EmbeddingSequence& audio, bool normalize) {
  if (lip.kind != EmbeddingKind::V || audio.kind != EmbeddingKind::A) {
    fail(ErrorCode::KindMismatch, "sync_check expects lip (V) and audio (A) embeddings, got " +
                                      std::string(to_string(lip.kind)) + " and " +
                                      std::string(to_string(audio.kind)));
  }
  return {sync_features(lip.values, audio.values, normalize), EmbeddingKind::SYNC, lip.clip_id};
}

EmbeddingSequence fuse(const EmbeddingSequence& av, const EmbeddingSequence& sync) {
  if (av.kind != EmbeddingKind::AV || sync.kind != EmbeddingKind::SYNC) {
    fail(ErrorCode::KindMismatch, "fuse expects AV and SYNC embeddings");
  }
  return {fuse_features(av.values, sync.values), EmbeddingKind::FUSION, av.clip_id};
}

std::string_view to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::AV: return "AV";
    case EmbeddingKind::V: return "V";
    case EmbeddingKind::A: return "A";
    case EmbeddingKind::SYNC: return "SYNC";
    case EmbeddingKind::FUSION: return "FUSION";
  }
  return "AV";
}

EmbeddingKind parse_embedding_kind(std::string_view text) {
  for (auto kind : {EmbeddingKind::AV, EmbeddingKind::V, EmbeddingKind::A, EmbeddingKind::SYNC,
                    EmbeddingKind::FUSION}) {
    if (to_string(kind) == text) return kind;
  }
  fail(ErrorCode::UnknownKind, "unknown embedding kind '" + std::string(text) + "'");
}

}  // namespace avsf
