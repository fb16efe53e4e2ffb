#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hic/analysis.hpp"
#include "hic/config.hpp"
#include "hic/frame_io.hpp"
#include "hic/timetag.hpp"

namespace hic {

inline constexpr const char* kResultsFormat = "hic-results";
inline constexpr const char* kResultsVersion = "1.0";

/// Everything cmd_analyze computes, before serialisation.
struct AnalysisOutput {
  std::uint64_t frames = 0;
  std::uint64_t photons = 0;
  JointHistogram xx, yy;  // accidental-subtracted
  SumProjection sum;
  JointHistogram singles;
  CorrelationFit correlation;
  RingFit ring;
  ModeCount modes;
  double analytic_modes = 0.0;
  GatingStats photon_counts;
};

AnalysisOutput analyze_frames(std::span<const FrameRecord> frames, const RunConfig& config);
Json analysis_json(const AnalysisOutput& a);

/// Photons per frame for one gating configuration, frames simulated in
/// parallel and reduced in frame order.
std::vector<std::uint64_t> photon_counts(const RunConfig& config, const GatingConfig& gating, std::uint64_t n_frames,
                                         int workers);

struct GatingComparison {
  std::vector<GatingStats> stats;
  std::optional<std::size_t> adaptive_index;
  std::optional<std::size_t> fixed_index;  // fixed 150 ns if present, else the first fixed mode
  std::optional<double> success_ratio;     // adaptive / fixed
  std::optional<double> empty_ratio;       // fixed / adaptive
};

GatingComparison compare_gating(const RunConfig& config, int workers);
Json gating_json(const GatingComparison& c);

struct TimetagOutput {
  std::vector<BrightnessPair> pairs;
  CollectStats collect;
  double pearson = 0.0;
  SweepResult sweep;
};

TimetagOutput timetag_frames(std::span<const FrameRecord> frames, const RunConfig& config);
/// Simulates config.timetag.source_frames frames first.
TimetagOutput timetag_simulated(const RunConfig& config, int workers);
Json timetag_json(const TimetagOutput& t, const RunConfig& config);

std::vector<FrameRecord> simulate_frames(const RunConfig& config, int workers);

// Commands. Each writes into `out_dir` (created if needed) and returns the
// main output path. Result documents are deterministic for a given config;
// run-specific facts go to metadata.json.
std::filesystem::path cmd_simulate(const RunConfig& config, const std::filesystem::path& out_dir, int workers);
std::filesystem::path cmd_analyze(const std::filesystem::path& frames_file, const std::optional<RunConfig>& config,
                                  const std::filesystem::path& out_dir, int workers);
std::filesystem::path cmd_compare_gating(const RunConfig& config, const std::filesystem::path& out_dir, int workers);
std::filesystem::path cmd_timetag(const std::optional<std::filesystem::path>& frames_file,
                                  const std::optional<RunConfig>& config, const std::filesystem::path& out_dir,
                                  int workers);
std::filesystem::path cmd_end_to_end(const RunConfig& config, const std::filesystem::path& out_dir, int workers);

}  // namespace hic
