#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "hic/intensifier.hpp"
#include "hic/readout.hpp"

namespace hic {

struct ExtractionParams {
  double detect_threshold = 60.0;  // counts above zero
  int roi_half_size = 5;
  int max_iterations = 60;
  double convergence_tol = 1e-10;
  double sigma_min = 0.5;
  double sigma_max = 5.0;
  double sigma_prior = 1.5;
  double min_peak_separation = 4.0;

  void validate(const ReadoutParams& readout, const std::string& path = "extraction") const;
  friend bool operator==(const ExtractionParams&, const ExtractionParams&) = default;
};

struct PeakCandidate {
  int x = 0;  // absolute channel coordinates
  int y = 0;
  double value = 0.0;
};

struct DetectedSpot {
  double x = 0.0;
  double y = 0.0;
  double amplitude = 0.0;
  double sigma = 0.0;
  double offset = 0.0;
  double residual_norm = 0.0;
  int roi_origin_x = 0;
  int roi_origin_y = 0;
  int iterations = 0;
};

enum class FitFailureReason { NoPeak, RoiOutOfBounds, Diverged, SigmaOutOfBounds, NegativeAmplitude, CenterOutsideRoi };

const char* to_string(FitFailureReason reason);

struct FitFailure {
  FitFailureReason reason;
};

using FitOutcome = std::variant<DetectedSpot, FitFailure>;

/// Isotropic Gaussian plus offset. Parameter order: amplitude, x0, y0, sigma, offset.
using SpotParams = Eigen::Matrix<double, 5, 1>;

double gaussian_spot_value(const SpotParams& p, double x, double y);
/// Analytic gradient of gaussian_spot_value with respect to the parameters.
SpotParams gaussian_spot_gradient(const SpotParams& p, double x, double y);

/// Local maxima above the threshold with non-maximum suppression. Higher
/// peaks win; equal peaks resolve in (y, x) order.
std::vector<PeakCandidate> detect_candidates(const Image& image, const ExtractionParams& params);

/// `cost_history`, when given, receives the cost after every accepted step.
FitOutcome fit_gaussian(const Image& image, const PeakCandidate& candidate, const ExtractionParams& params,
                        std::vector<double>* cost_history = nullptr);

struct ExtractedEvent {
  DetectedSpot spot;
  TransverseMomentum k;
};

struct ExtractionResult {
  std::vector<ExtractedEvent> events;
  std::uint64_t candidates = 0;
  std::array<std::uint64_t, 6> failures{};  // indexed by FitFailureReason

  std::uint64_t failure_count() const;
};

ExtractionResult extract_events(const Image& image, const ExtractionParams& params, const OpticsMap& optics);

}  // namespace hic
