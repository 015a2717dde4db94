#include "avsf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <torch/torch.h>

#include "avsf/error.hpp"
#include "avsf/tensor_io.hpp"

namespace avsf {
namespace {

double ratio(std::int64_t num, std::int64_t den, bool& zero_division) {
  if (den == 0) {
    zero_division = true;
    return 0.0;
  }
  return double(num) / double(den);
}

ClassMetrics class_metrics(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  ClassMetrics m;
  m.precision = ratio(tp, tp + fp, m.zero_division);
  m.recall = ratio(tp, tp + fn, m.zero_division);
  if (m.precision + m.recall == 0.0) {
    m.zero_division = true;
    m.f1 = 0.0;
  } else {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

nlohmann::json metrics_json(const Metrics& m) {
  auto cls = [](const ClassMetrics& c) {
    return nlohmann::json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"zero_division", c.zero_division}};
  };
  return {{"counts", {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn}}},
          {"real", cls(m.real)},
          {"fake", cls(m.fake)},
          {"accuracy", m.accuracy}};
}

Metrics metrics_of(const std::vector<ScoredVideo>& videos) {
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& v : videos) {
    labels.push_back(static_cast<int>(v.label));
    scores.push_back(v.score);
  }
  return compute_metrics(confusion_counts(labels, scores));
}

AvLipSyncPlus& av_branch(Detector& detector) {
  if (auto* av = dynamic_cast<AvDetector*>(&detector)) return av->model();
  if (auto* ens = dynamic_cast<EnsembleDetector*>(&detector)) return ens->model()->av;
  fail(ErrorCode::UnknownKind, "no lip/audio branch in detector '" + detector.kind() + "'");
}

std::string fixed2(double v) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << v;
  return out.str();
}

}  // namespace

double video_score(std::span<const Prediction> predictions) {
  if (predictions.empty()) fail(ErrorCode::EmptyPredictionList, "video has no window predictions");
  double total = 0.0;
  for (const auto& p : predictions) total += p.fake_probability();
  return total / double(predictions.size());
}

ConfusionCounts confusion_counts(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels vs " + std::to_string(scores.size()) + " scores");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool fake = labels[i] == 1;
    const bool predicted_fake = is_fake_decision(scores[i]);
    if (fake && predicted_fake) ++c.tp;
    else if (fake) ++c.fn;
    else if (predicted_fake) ++c.fp;
    else ++c.tn;
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& counts) {
  if (counts.tp < 0 || counts.tn < 0 || counts.fp < 0 || counts.fn < 0) {
    fail(ErrorCode::InvalidRecord, "confusion counts must be non-negative");
  }
  if (counts.total() == 0) fail(ErrorCode::EmptyEvaluation, "no scored videos");
  Metrics m;
  m.counts = counts;
  m.fake = class_metrics(counts.tp, counts.fp, counts.fn);
  m.real = class_metrics(counts.tn, counts.fn, counts.fp);
  m.accuracy = double(counts.tp + counts.tn) / double(counts.total());
  return m;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (labels.size() != scores.size()) {
    fail(ErrorCode::LengthMismatch, std::to_string(labels.size()) + " labels vs " + std::to_string(scores.size()) + " scores");
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  const auto negatives = std::int64_t(labels.size()) - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorCode::SingleClassLabels, "ROC needs both real and fake videos");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocCurve roc;
  roc.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i) {
      (labels[order[i]] == 1 ? tp : fp) += 1;
    }
    roc.points.push_back({threshold, double(fp) / double(negatives), double(tp) / double(positives)});
  }
  for (std::size_t i = 1; i < roc.points.size(); ++i) {
    const auto& a = roc.points[i - 1];
    const auto& b = roc.points[i];
    roc.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return roc;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["metrics"] = metrics_json(metrics);
  if (roc) {
    j["auc"] = roc->auc;
    auto points = nlohmann::json::array();
    for (const auto& p : roc->points) {
      points.push_back({{"threshold", std::isinf(p.threshold) ? nlohmann::json("inf") : nlohmann::json(p.threshold)},
                        {"fpr", p.fpr},
                        {"tpr", p.tpr}});
    }
    j["roc"] = points;
  } else {
    j["auc"] = nullptr;
    j["roc_error"] = roc_error;
  }
  auto per = nlohmann::json::object();
  for (const auto& [m, metrics] : per_manipulation) per[m] = metrics_json(metrics);
  j["per_manipulation"] = per;
  auto vids = nlohmann::json::array();
  for (const auto& v : videos) {
    vids.push_back({{"clip_id", v.clip_id},
                    {"label", to_string(v.label)},
                    {"manipulation", to_string(v.manipulation)},
                    {"score", v.score},
                    {"windows", v.windows}});
  }
  j["videos"] = vids;
  return j;
}

std::string MetricsReport::table() const {
  std::ostringstream out;
  out << "Test set: " << name << " (" << metrics.counts.total() << " videos)\n";
  out << std::left << std::setw(8) << "Class" << std::setw(11) << "Precision" << std::setw(8) << "Recall"
      << std::setw(10) << "F1-score" << "Accuracy\n";
  auto row = [&](const char* cls, const ClassMetrics& m, bool with_accuracy) {
    out << std::left << std::setw(8) << cls << std::setw(11) << fixed2(m.precision) << std::setw(8) << fixed2(m.recall)
        << std::setw(10) << fixed2(m.f1) << (with_accuracy ? fixed2(metrics.accuracy) : std::string()) << "\n";
  };
  row("Real", metrics.real, true);
  row("Fake", metrics.fake, false);
  out << "AUC: " << (roc ? fixed2(roc->auc) : "n/a (" + roc_error + ")") << "\n";
  if (!per_manipulation.empty()) {
    out << "\n" << std::left << std::setw(18) << "Manipulation" << "Accuracy\n";
    for (const auto& [m, metrics] : per_manipulation) out << std::setw(18) << m << fixed2(metrics.accuracy) << "\n";
  }
  return out.str();
}

std::string MetricsReport::roc_csv() const {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n" << std::setprecision(17);
  if (roc) {
    for (const auto& p : roc->points) {
      if (std::isinf(p.threshold)) out << "inf";
      else out << p.threshold;
      out << ',' << p.fpr << ',' << p.tpr << '\n';
    }
  }
  return out.str();
}

std::vector<ScoredVideo> score_videos(Detector& detector, const std::vector<Sample>& samples,
                                      std::int64_t window_frames) {
  std::vector<ScoredVideo> videos;
  for (const auto& sample : samples) {
    const auto predictions = predict_windows(detector, sample, window_frames);
    videos.push_back({sample.clip.clip_id, sample.clip.label, sample.clip.manipulation, video_score(predictions),
                      std::int64_t(predictions.size())});
  }
  return videos;
}

MetricsReport build_report(const std::string& name, const std::vector<ScoredVideo>& videos) {
  MetricsReport report;
  report.name = name;
  report.videos = videos;
  report.metrics = metrics_of(videos);
  std::vector<int> labels;
  std::vector<double> scores;
  for (const auto& v : videos) {
    labels.push_back(static_cast<int>(v.label));
    scores.push_back(v.score);
  }
  try {
    report.roc = roc_auc(scores, labels);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingleClassLabels) throw;
    report.roc_error = e.what();
  }
  std::map<std::string, std::vector<ScoredVideo>> groups;
  for (const auto& v : videos) groups[std::string(to_string(v.manipulation))].push_back(v);
  for (const auto& [m, group] : groups) report.per_manipulation[m] = metrics_of(group);
  return report;
}

std::map<std::string, MetricsReport> evaluate_testsets(Detector& detector,
                                                       const std::map<std::string, std::vector<Sample>>& testsets,
                                                       std::int64_t window_frames) {
  if (testsets.empty()) fail(ErrorCode::EmptyEvaluation, "no test sets given");
  if (testsets.contains("combined")) fail(ErrorCode::InvalidConfig, "test set name 'combined' is reserved");
  std::map<std::string, MetricsReport> reports;
  std::vector<ScoredVideo> all;
  for (const auto& [name, samples] : testsets) {
    if (samples.empty()) fail(ErrorCode::EmptyEvaluation, "test set '" + name + "' is empty");
    auto videos = score_videos(detector, samples, window_frames);
    all.insert(all.end(), videos.begin(), videos.end());
    reports.emplace(name, build_report(name, videos));
  }
  reports.emplace("combined", build_report("combined", all));
  return reports;
}

void write_report(const std::filesystem::path& dir, const MetricsReport& report, bool roc) {
  write_json(dir / (report.name + ".json"), report.to_json());
  write_text(dir / (report.name + ".txt"), report.table());
  if (roc) write_text(dir / (report.name + "_roc.csv"), report.roc_csv());
}

nlohmann::json average_reports(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) fail(ErrorCode::EmptyEvaluation, "no reports to average");
  double accuracy = 0.0, real_f1 = 0.0, fake_f1 = 0.0, auc = 0.0;
  int with_auc = 0;
  for (const auto& r : reports) {
    accuracy += r.metrics.accuracy;
    real_f1 += r.metrics.real.f1;
    fake_f1 += r.metrics.fake.f1;
    if (r.roc) {
      auc += r.roc->auc;
      ++with_auc;
    }
  }
  const double n = double(reports.size());
  nlohmann::json j{{"folds", reports.size()},
                   {"accuracy", accuracy / n},
                   {"real_f1", real_f1 / n},
                   {"fake_f1", fake_f1 / n},
                   {"folds_with_auc", with_auc}};
  j["auc"] = with_auc > 0 ? nlohmann::json(auc / with_auc) : nlohmann::json(nullptr);
  return j;
}

std::vector<std::string> parse_export_kinds(const std::vector<std::string>& kinds) {
  if (kinds.empty()) fail(ErrorCode::UnknownKind, "no embedding kinds requested");
  std::vector<std::string> out;
  for (const auto& k : kinds) {
    const std::string name = k == "pooled" ? k : std::string(to_string(parse_embedding_kind(k)));
    if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  }
  return out;
}

std::vector<EmbeddingRecord> compute_embeddings(Detector& detector, const std::vector<Sample>& samples,
                                                const std::vector<std::string>& kinds) {
  const auto parsed = parse_export_kinds(kinds);
  auto& model = av_branch(detector);
  torch::NoGradGuard no_grad;
  const bool was_training = model->is_training();
  model->eval();
  CollateOptions options;
  options.dtype = detector.dtype();
  std::vector<EmbeddingRecord> records;
  for (const auto& sample : samples) {
    const auto batch = collate_one(sample, options);
    const auto out = model->forward(batch.lips, batch.audio, batch.lengths);
    for (const auto& kind : parsed) {
      torch::Tensor values;
      if (kind == "AV") values = out.av[0];
      else if (kind == "V") values = out.v[0];
      else if (kind == "A") values = out.a[0];
      else if (kind == "SYNC") values = out.sync[0];
      else if (kind == "FUSION") values = out.fusion[0];
      else values = out.pooled[0];
      records.push_back({sample.clip.clip_id, kind, sample.clip.label, sample.clip.manipulation,
                         values.contiguous().clone()});
    }
  }
  model->train(was_training);
  return records;
}

void write_embeddings(const std::filesystem::path& dir, const std::vector<EmbeddingRecord>& records) {
  std::filesystem::create_directories(dir);
  std::ofstream bin(dir / "embeddings.bin", std::ios::binary | std::ios::trunc);
  if (!bin) fail(ErrorCode::IoError, "cannot write " + (dir / "embeddings.bin").string());
  auto index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& r : records) {
    const auto bytes = tensor_bytes(r.values);
    bin.write(bytes.data(), std::streamsize(bytes.size()));
    index.push_back({{"clip_id", r.clip_id},
                     {"kind", r.kind},
                     {"label", to_string(r.label)},
                     {"manipulation", to_string(r.manipulation)},
                     {"shape", r.values.sizes().vec()},
                     {"dtype", dtype_name(r.values.scalar_type())},
                     {"offset", offset},
                     {"nbytes", bytes.size()}});
    offset += bytes.size();
  }
  if (!bin) fail(ErrorCode::IoError, "short write to " + (dir / "embeddings.bin").string());
  bin.close();
  write_json(dir / "embeddings.json", {{"format_version", 1}, {"records", index}});
}

std::vector<EmbeddingRecord> read_embeddings(const std::filesystem::path& dir) {
  const auto index = read_json(dir / "embeddings.json");
  std::ifstream in(dir / "embeddings.bin", std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot read " + (dir / "embeddings.bin").string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<EmbeddingRecord> records;
  try {
    for (const auto& e : index.at("records")) {
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("nbytes").get<std::uint64_t>();
      if (offset + nbytes > blob.size()) fail(ErrorCode::FormatError, "embedding record past end of archive");
      EmbeddingRecord r;
      r.clip_id = e.at("clip_id").get<std::string>();
      r.kind = e.at("kind").get<std::string>();
      r.label = parse_label(e.at("label").get<std::string>());
      r.manipulation = parse_manipulation(e.at("manipulation").get<std::string>());
      r.values = tensor_from_bytes(e.at("dtype").get<std::string>(), e.at("shape").get<std::vector<std::int64_t>>(),
                                   blob.data() + offset, nbytes);
      records.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::FormatError, std::string("embeddings.json: ") + e.what());
  }
  return records;
}

}  // namespace avsf
