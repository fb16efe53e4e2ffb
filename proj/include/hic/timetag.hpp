#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "hic/gating.hpp"
#include "hic/rng.hpp"

namespace hic {

struct BrightnessPair {
  double b_pmt = 0.0;   // volts
  double b_cmos = 0.0;  // counts
  double true_time_ns = 0.0;
  std::uint64_t frame_id = 0;
};

struct CollectStats {
  std::uint64_t frames = 0;
  std::uint64_t collected = 0;
  std::uint64_t wrong_spot_count = 0;
  std::uint64_t wrong_pulse_count = 0;
};

/// Frames with exactly one spot and exactly one pulse at or above the
/// discriminator threshold give one (PMT, sCMOS) brightness pair.
std::vector<BrightnessPair> collect_single_photon_pairs(std::span<const FrameRecord> frames,
                                                        double discriminator_threshold, CollectStats* stats = nullptr);

/// A synthetic n-photon frame: `members` index the pair list (distinct),
/// member i arrives `arrival_rank[i]`-th.
struct PhotonTuple {
  std::vector<std::uint32_t> members;
  std::vector<std::uint32_t> arrival_rank;
};

std::vector<PhotonTuple> synthesize_tuples(std::span<const BrightnessPair> pairs, int n, std::size_t m_tuples, Rng& rng);

enum class TagStatus { Accepted, Rejected };
enum class RejectReason { None, TooClose, CountMismatch };

const char* to_string(RejectReason reason);

struct TagAssignment {
  TagStatus status = TagStatus::Rejected;
  RejectReason reason = RejectReason::None;
  std::vector<int> spot_to_pulse;  // accepted only; a permutation
};

/// Relative difference |a - b| / mean(a, b).
double relative_gap(double a, double b);

/// Rank matching of spots to pulses by brightness. Rejected as TooClose
/// when any two PMT amplitudes or any two sCMOS amplitudes are closer than
/// `closeness_threshold` in relative terms (strictly less; 0 never rejects).
TagAssignment match_by_brightness(std::span<const double> pulse_amplitudes, std::span<const double> spot_amplitudes,
                                  double closeness_threshold);

/// Pulse amplitudes in arrival order and spot amplitudes in member order.
void tuple_amplitudes(const PhotonTuple& tuple, std::span<const BrightnessPair> pairs, std::vector<double>& pulses,
                      std::vector<double>& spots);

/// True when every spot got the pulse of its own photon.
bool assignment_correct(const PhotonTuple& tuple, const TagAssignment& assignment);

struct AccuracyPoint {
  double threshold = 0.0;
  double rejected_fraction = 0.0;
  double accuracy = 0.0;         // frame level: all n photons tagged correctly
  double photon_accuracy = 0.0;  // per photon, over accepted tuples
  std::uint64_t total = 0;
  std::uint64_t rejected = 0;
  std::uint64_t correct = 0;
};

struct AccuracyCurve {
  int n = 0;
  std::vector<AccuracyPoint> points;  // sorted by rejected_fraction
};

struct SweepOptions {
  std::vector<int> n_values{2, 3, 4, 5, 6};
  std::vector<double> thresholds;  // empty: default grid 0, 0.01, ..., 0.50
  std::size_t m_tuples = 100000;
  std::uint64_t seed = 1;
};

std::vector<double> default_threshold_grid();

struct SweepResult {
  std::vector<AccuracyCurve> curves;
  std::vector<std::string> warnings;  // omitted all-rejected points
};

SweepResult accuracy_sweep(std::span<const BrightnessPair> pairs, const SweepOptions& options);
SweepResult accuracy_sweep_serial(std::span<const BrightnessPair> pairs, const SweepOptions& options);

double pearson_correlation(std::span<const BrightnessPair> pairs);

/// Log-binned (PMT, sCMOS) occurrence map of the single-photon pairs.
void write_brightness_map_csv(std::ostream& os, std::span<const BrightnessPair> pairs, int bins = 64);
void write_accuracy_csv(std::ostream& os, std::span<const AccuracyCurve> curves);

}  // namespace hic
