#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hic/config.hpp"

namespace hic {

struct CalibrationTargets {
  double adaptive_success = 0.776;
  double fixed150_success = 0.137;
  double n2_accuracy = 0.90;
};

struct CalibrationOptions {
  std::uint64_t gating_frames = 20000;
  std::uint64_t timetag_frames = 20000;
  std::size_t tuples = 50000;
  int rounds = 2;
  int bisection_steps = 18;
  int workers = 0;
};

struct CalibrationStep {
  std::string parameter;
  double value = 0.0;
  double achieved = 0.0;
  double target = 0.0;
};

struct CalibrationReport {
  RunConfig config;
  std::vector<CalibrationStep> steps;
};

/// Root of a monotone function on [lo, hi] by bisection. `increasing`
/// tells which way f goes; the bracket end is returned when the target lies
/// outside.
double bisect(const std::function<double(double)>& f, double target, double lo, double hi, bool increasing, int steps);

double measured_success(const RunConfig& config, const GatingConfig& gating, std::uint64_t frames, int workers);
double measured_n2_accuracy(const RunConfig& config, std::uint64_t frames, std::size_t tuples, int workers);

/// Tunes, in turn, the shared lognormal brightness noise (two-photon tagging
/// accuracy), the pair rate (fixed 150 ns success) and the PMT false-pulse
/// rate (adaptive success), repeated `rounds` times since they interact
/// weakly. qe stays fixed.
CalibrationReport calibrate(const RunConfig& start, const CalibrationTargets& targets, const CalibrationOptions& options,
                            std::ostream* log = nullptr);

}  // namespace hic
