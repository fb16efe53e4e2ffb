#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hic/config.hpp"
#include "hic/gating.hpp"

namespace hic {

inline constexpr const char* kFrameFormat = "hic-frames";
inline constexpr const char* kFrameFormatVersion = "1.0";
inline constexpr int kFrameFormatMajor = 1;

Json frame_to_json(const FrameRecord& frame, bool with_truth);
/// Throws std::invalid_argument (or a json exception) on malformed input.
FrameRecord frame_from_json(const Json& j);

/// JSON-lines writer. The first line is the header carrying the format tag,
/// version and the config echo; each further line is one frame.
class FrameWriter {
 public:
  FrameWriter(std::ostream& os, const Json& config_echo, bool with_truth);
  void write(const FrameRecord& frame);
  std::uint64_t frames_written() const { return written_; }

 private:
  std::ostream& os_;
  bool with_truth_;
  std::uint64_t written_ = 0;
  std::optional<std::uint64_t> last_id_;
};

struct FrameFile {
  Json config;  // header echo
  std::vector<FrameRecord> frames;
  std::uint64_t frame_lines = 0;
  std::uint64_t corrupt_lines = 0;
};

/// Reads a frame stream. Corrupt frame lines are skipped and counted; more
/// than 1% corrupt, a missing or foreign header, an unknown major version,
/// non-monotone frame ids or no frames at all raise IoError.
FrameFile read_frames(std::istream& is);
FrameFile read_frames_file(const std::filesystem::path& path);

}  // namespace hic
