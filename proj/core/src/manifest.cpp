#include "avsf/manifest.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "avsf/error.hpp"

namespace avsf {
namespace {

using nlohmann::json;

constexpr std::string_view kLabels[] = {"real", "fake"};
constexpr std::string_view kManipulations[] = {
    "none", "faceswap", "fsgan", "wav2lip", "faceswap_wav2lip", "fsgan_wav2lip", "rtvc", "other"};
constexpr std::string_view kSplits[] = {"train", "val", "test"};

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::string_view (&names)[N], ErrorCode code,
                std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  fail(code, "unknown " + std::string(what) + " '" + std::string(text) + "'");
}

std::string record_name(std::size_t line_no, const json& record) {
  std::string name = "line " + std::to_string(line_no);
  if (record.is_object() && record.contains("clip_id") && record["clip_id"].is_string()) {
    name += " (clip_id '" + record["clip_id"].get<std::string>() + "')";
  }
  return name;
}

std::string required_string(const json& record, const char* field, const std::string& where) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) {
    fail(ErrorCode::MissingField, where + ": missing field '" + field + "'");
  }
  if (!it->is_string()) {
    fail(ErrorCode::InvalidRecord, where + ": field '" + field + "' must be a string");
  }
  return it->get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

std::string_view to_string(Label label) { return kLabels[static_cast<int>(label)]; }
std::string_view to_string(Manipulation m) { return kManipulations[static_cast<int>(m)]; }
std::string_view to_string(Split split) { return kSplits[static_cast<int>(split)]; }

Label parse_label(std::string_view text) {
  return parse_enum<Label>(text, kLabels, ErrorCode::UnknownLabel, "label");
}
Manipulation parse_manipulation(std::string_view text) {
  return parse_enum<Manipulation>(text, kManipulations, ErrorCode::InvalidRecord, "manipulation");
}
Split parse_split(std::string_view text) {
  return parse_enum<Split>(text, kSplits, ErrorCode::InvalidRecord, "split");
}

void validate_clip(const MediaClip& clip) {
  if (clip.clip_id.empty()) fail(ErrorCode::InvalidRecord, "empty clip_id");
  const bool none = clip.manipulation == Manipulation::None;
  if (clip.label == Label::Real && !none) {
    fail(ErrorCode::InvalidRecord,
         "clip '" + clip.clip_id + "': real clip with manipulation '" +
             std::string(to_string(clip.manipulation)) + "'");
  }
  if (clip.label == Label::Fake && none) {
    fail(ErrorCode::InvalidRecord, "clip '" + clip.clip_id + "': fake clip with manipulation 'none'");
  }
}

std::vector<MediaClip> parse_manifest(std::string_view text, const std::filesystem::path& base_dir) {
  std::vector<MediaClip> clips;
  std::unordered_set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = record_name(line_no, record);
    if (!record.is_object()) fail(ErrorCode::InvalidRecord, where + ": not a JSON object");

    MediaClip clip;
    clip.clip_id = required_string(record, "clip_id", where);
    clip.video_path = resolve(base_dir, required_string(record, "video_path", where));
    clip.audio_path = resolve(base_dir, required_string(record, "audio_path", where));
    const std::string label = required_string(record, "label", where);
    try {
      clip.label = parse_label(label);
    } catch (const Error&) {
      fail(ErrorCode::UnknownLabel, where + ": unknown label '" + label + "'");
    }
    clip.subject_id = required_string(record, "subject_id", where);
    clip.manipulation = parse_manipulation(required_string(record, "manipulation", where));
    clip.split = parse_split(required_string(record, "split", where));
    try {
      validate_clip(clip);
    } catch (const Error& e) {
      fail(e.code(), where + ": " + e.what());
    }
    if (!seen.insert(clip.clip_id).second) {
      fail(ErrorCode::DuplicateClipId, clip.clip_id);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

std::vector<MediaClip> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str(), path.parent_path());
}

void save_manifest(const std::filesystem::path& path, const std::vector<MediaClip>& clips) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write manifest " + path.string());
  for (const auto& clip : clips) {
    json record = {
        {"clip_id", clip.clip_id},
        {"video_path", clip.video_path.string()},
        {"audio_path", clip.audio_path.string()},
        {"label", to_string(clip.label)},
        {"subject_id", clip.subject_id},
        {"manipulation", to_string(clip.manipulation)},
        {"split", to_string(clip.split)},
    };
    out << record.dump() << '\n';
  }
}

}  // namespace avsf
