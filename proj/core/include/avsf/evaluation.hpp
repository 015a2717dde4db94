#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avsf/dataset.hpp"
#include "avsf/model.hpp"
#include "avsf/temporal_head.hpp"

namespace avsf {

inline constexpr double kDecisionThreshold = 0.5;

/// Mean of the per-window fake probabilities.
double video_score(std::span<const Prediction> predictions);
inline bool is_fake_decision(double score) { return score >= kDecisionThreshold; }

/// FAKE is the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  std::int64_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// labels 0 = real, 1 = fake; a video is fake iff score >= 0.5.
ConfusionCounts confusion_counts(std::span<const int> labels, std::span<const double> scores);

struct ClassMetrics {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool zero_division = false;  // some ratio had a zero denominator and was set to 0
};

struct Metrics {
  ConfusionCounts counts;
  ClassMetrics fake, real;
  double accuracy = 0.0;
};

Metrics compute_metrics(const ConfusionCounts& counts);

struct RocPoint {
  double threshold, fpr, tpr;
};

/// Points sorted by decreasing threshold from (0, 0) to (1, 1); one point
/// per distinct score. The first point's threshold is +inf.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

struct ScoredVideo {
  std::string clip_id;
  Label label = Label::Real;
  Manipulation manipulation = Manipulation::None;
  double score = 0.0;
  std::int64_t windows = 0;
};

struct MetricsReport {
  std::string name;
  Metrics metrics;
  std::optional<RocCurve> roc;
  std::string roc_error;  // why the ROC is missing
  std::map<std::string, Metrics> per_manipulation;
  std::vector<ScoredVideo> videos;

  nlohmann::json to_json() const;
  std::string table() const;
  std::string roc_csv() const;
};

std::vector<ScoredVideo> score_videos(Detector& detector, const std::vector<Sample>& samples,
                                      std::int64_t window_frames = 0);

MetricsReport build_report(const std::string& name, const std::vector<ScoredVideo>& videos);

/// One report per named test set plus "combined" over all of them.
std::map<std::string, MetricsReport> evaluate_testsets(Detector& detector,
                                                       const std::map<std::string, std::vector<Sample>>& testsets,
                                                       std::int64_t window_frames = 0);

/// Writes <name>.json, <name>.txt and, with `roc`, <name>_roc.csv.
void write_report(const std::filesystem::path& dir, const MetricsReport& report, bool roc);

/// Mean of the numeric metrics of several reports (used for k-fold runs).
nlohmann::json average_reports(const std::vector<MetricsReport>& reports);

struct EmbeddingRecord {
  std::string clip_id;
  std::string kind;  // AV, V, A, SYNC, FUSION or pooled
  Label label = Label::Real;
  Manipulation manipulation = Manipulation::None;
  torch::Tensor values;
};

/// Parses kinds (AV, V, A, SYNC, FUSION, pooled); UnknownKind otherwise.
std::vector<std::string> parse_export_kinds(const std::vector<std::string>& kinds);

/// Embeddings of the lip/audio branch for every sample.
std::vector<EmbeddingRecord> compute_embeddings(Detector& detector, const std::vector<Sample>& samples,
                                                const std::vector<std::string>& kinds);

/// Archive: embeddings.bin with the raw tensors back to back, and
/// embeddings.json listing {clip_id, kind, label, manipulation, shape, dtype, offset, nbytes}.
void write_embeddings(const std::filesystem::path& dir, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& dir);

}  // namespace avsf
