#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hic/analysis.hpp"
#include "hic/gating.hpp"
#include "hic/timetag.hpp"

namespace hic {

using Json = nlohmann::json;

struct AnalysisConfig {
  bool auto_geometry = true;  // derive the histogram range from the source block
  HistGeometry geometry;
  CrosstalkFilter crosstalk;
  friend bool operator==(const AnalysisConfig& a, const AnalysisConfig& b) {
    return a.auto_geometry == b.auto_geometry && a.geometry == b.geometry &&
           a.crosstalk.enabled == b.crosstalk.enabled && a.crosstalk.min_sep_px == b.crosstalk.min_sep_px &&
           a.crosstalk.mode == b.crosstalk.mode;
  }
};

struct TimetagConfig {
  std::vector<int> n_values{2, 3, 4, 5, 6};
  std::vector<double> thresholds;  // empty: 0 to 0.5 in steps of 0.01
  std::uint64_t m_tuples = 100000;
  std::uint64_t source_frames = 100000;  // simulated when no frame file is given
  friend bool operator==(const TimetagConfig&, const TimetagConfig&) = default;
};

struct OutputConfig {
  bool write_truth = true;
  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

/// Everything that influences results. Worker count is deliberately not
/// part of it: outputs must not depend on it.
struct RunConfig {
  std::uint64_t seed = 1;
  std::uint64_t n_frames = 10000;
  bool render = false;
  SourceParams source;
  IntensifierParams intensifier;
  OpticsMap optics;
  ReadoutParams readout;
  ExtractionParams extraction;
  GatingConfig gating;
  std::vector<GatingConfig> gating_comparison{GatingConfig::adaptive(1), GatingConfig::fixed(150.0),
                                              GatingConfig::fixed(500.0), GatingConfig::fixed(5000.0)};
  AnalysisConfig analysis;
  TimetagConfig timetag;
  OutputConfig output;

  SimulationSetup setup() const;
  SimulationSetup setup(const GatingConfig& g) const;
  HistGeometry geometry() const;
  SweepOptions sweep_options() const;
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

Json to_json(const RunConfig& config);

/// Strict reader: unknown keys and wrong types are ConfigErrors carrying the
/// dotted field path. Missing keys keep their defaults except `seed`, which
/// must be present.
RunConfig run_config_from_json(const Json& j);

/// Reads and validates a config file. IoError when unreadable, ConfigError
/// for malformed JSON or invalid values.
RunConfig load_config(const std::filesystem::path& path);
Json load_json_file(const std::filesystem::path& path);

/// Calibrated defaults matching the hybrid-camera measurements.
RunConfig paper_like_config();

}  // namespace hic
