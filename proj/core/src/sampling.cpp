#include "avsf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "avsf/error.hpp"

namespace avsf {

std::vector<std::size_t> shuffled_plan(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> plan(n);
  for (std::size_t i = 0; i < n; ++i) plan[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(plan.begin(), plan.end(), rng);
  return plan;
}

std::vector<std::size_t> oversample_plan(std::span<const Label> labels, std::uint64_t seed) {
  std::vector<std::size_t> real, fake;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == Label::Real ? real : fake).push_back(i);
  if (real.empty() || fake.empty()) {
    fail(ErrorCode::SingleClassDataset, "oversampling needs both classes (real " + std::to_string(real.size()) +
                                            ", fake " + std::to_string(fake.size()) + ")");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> plan;
  plan.reserve(2 * std::max(real.size(), fake.size()));
  plan.insert(plan.end(), real.begin(), real.end());
  plan.insert(plan.end(), fake.begin(), fake.end());
  const auto& minority = real.size() < fake.size() ? real : fake;
  const auto deficit = std::max(real.size(), fake.size()) - minority.size();
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  for (std::size_t i = 0; i < deficit; ++i) plan.push_back(minority[pick(rng)]);
  std::shuffle(plan.begin(), plan.end(), rng);
  return plan;
}

std::vector<FoldSplit> make_kfold(const std::vector<MediaClip>& clips, int k, std::uint64_t seed) {
  if (k < 1) fail(ErrorCode::InvalidConfig, "k must be at least 1");
  std::vector<std::string> subjects;
  {
    std::set<std::string> unique;
    for (const auto& clip : clips) unique.insert(clip.subject_id);
    subjects.assign(unique.begin(), unique.end());
  }
  if (subjects.size() < std::size_t(k)) {
    fail(ErrorCode::TooFewSubjects, std::to_string(subjects.size()) + " subjects for " + std::to_string(k) + " folds");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);

  std::map<std::string, int> assignment;
  const std::size_t base = subjects.size() / std::size_t(k);
  const std::size_t extra = subjects.size() % std::size_t(k);
  std::size_t next = 0;
  for (int f = 0; f < k; ++f) {
    const std::size_t size = base + (std::size_t(f) < extra ? 1 : 0);
    for (std::size_t i = 0; i < size; ++i) assignment[subjects[next++]] = f;
  }

  std::vector<FoldSplit> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    auto& split = folds[std::size_t(f)];
    split.k = k;
    split.fold = f;
    split.assignment = assignment;
    for (std::size_t i = 0; i < clips.size(); ++i) {
      const bool held_out = assignment.at(clips[i].subject_id) == f;
      (held_out ? split.test : split.train).push_back(i);
    }
  }
  return folds;
}

SubjectHoldout hold_out_subjects(const std::vector<MediaClip>& clips, std::span<const std::size_t> indices,
                                 double fraction, std::uint64_t seed) {
  std::set<std::string> unique;
  for (auto i : indices) unique.insert(clips[i].subject_id);
  std::vector<std::string> subjects(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  std::size_t count = std::size_t(std::llround(fraction * double(subjects.size())));
  if (subjects.size() >= 2) count = std::clamp<std::size_t>(count, 1, subjects.size() - 1);
  else count = 0;
  const std::set<std::string> held(subjects.begin(), subjects.begin() + std::ptrdiff_t(count));
  SubjectHoldout out;
  for (auto i : indices) (held.contains(clips[i].subject_id) ? out.validation : out.train).push_back(i);
  return out;
}

}  // namespace avsf
