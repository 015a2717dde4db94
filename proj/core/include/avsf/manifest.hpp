#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace avsf {

enum class Label { Real = 0, Fake = 1 };

enum class Manipulation {
  None,
  Faceswap,
  Fsgan,
  Wav2lip,
  FaceswapWav2lip,
  FsganWav2lip,
  Rtvc,
  Other,
};

enum class Split { Train, Val, Test };

std::string_view to_string(Label label);
std::string_view to_string(Manipulation manipulation);
std::string_view to_string(Split split);

Label parse_label(std::string_view text);
Manipulation parse_manipulation(std::string_view text);
Split parse_split(std::string_view text);

/// One video sample as listed in a dataset manifest.
struct MediaClip {
  std::string clip_id;
  std::filesystem::path video_path;
  std::filesystem::path audio_path;  // may equal video_path for muxed media
  Label label = Label::Real;
  std::string subject_id;
  Manipulation manipulation = Manipulation::None;
  Split split = Split::Train;

  friend bool operator==(const MediaClip&, const MediaClip&) = default;
};

/// Throws InvalidRecord when label and manipulation disagree.
void validate_clip(const MediaClip& clip);

/// Parses a JSON Lines manifest. Relative media paths resolve against the
/// manifest's directory. Blank lines are skipped.
std::vector<MediaClip> load_manifest(const std::filesystem::path& path);

/// Parses manifest text directly; `base_dir` resolves relative paths.
std::vector<MediaClip> parse_manifest(std::string_view text,
                                      const std::filesystem::path& base_dir = {});

void save_manifest(const std::filesystem::path& path, const std::vector<MediaClip>& clips);

}  // namespace avsf
