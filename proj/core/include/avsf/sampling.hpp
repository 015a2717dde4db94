#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "avsf/manifest.hpp"

namespace avsf {

/// Indices into `labels` for one training epoch: minority-class items are
/// drawn uniformly with replacement until both classes have equal counts,
/// then the whole plan is shuffled. Deterministic for a given seed.
std::vector<std::size_t> oversample_plan(std::span<const Label> labels, std::uint64_t seed);

/// Shuffled 0..n-1 without rebalancing.
std::vector<std::size_t> shuffled_plan(std::size_t n, std::uint64_t seed);

struct FoldSplit {
  int k = 0;
  int fold = 0;  // index of the held-out fold
  std::map<std::string, int> assignment;  // subject_id -> fold
  std::vector<std::size_t> train;         // clip indices
  std::vector<std::size_t> test;
};

/// Subject-disjoint k-fold split. Subjects are shuffled by `seed` and dealt
/// into k folds whose sizes differ by at most one (larger folds first).
/// k = 1 yields a single fold whose test set is everything.
std::vector<FoldSplit> make_kfold(const std::vector<MediaClip>& clips, int k, std::uint64_t seed);

/// Moves roughly `fraction` of the subjects in `indices` into a validation
/// set (at least one subject when there are two or more).
struct SubjectHoldout {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};
SubjectHoldout hold_out_subjects(const std::vector<MediaClip>& clips, std::span<const std::size_t> indices,
                                 double fraction, std::uint64_t seed);

}  // namespace avsf
