#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "hic/gating.hpp"
#include "hic/intensifier.hpp"
#include "hic/source.hpp"

namespace hic {

struct DetectedPhoton {
  double x_px = 0.0;
  double y_px = 0.0;
  TransverseMomentum k;
};

struct FramePhotons {
  std::uint64_t frame_id = 0;
  std::vector<DetectedPhoton> photons;
};

FramePhotons to_frame_photons(const FrameRecord& record, const OpticsMap& optics);

enum class CrosstalkMode {
  ExcludePairs,  // close pairs are skipped, both photons stay available for other pairings
  DropPhotons,   // every photon that has a close partner is removed from the frame
};

struct CrosstalkFilter {
  bool enabled = true;
  double min_sep_px = 100.0;
  CrosstalkMode mode = CrosstalkMode::ExcludePairs;
};

struct PairSelection {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;  // indices into the frame, a < b
  std::uint64_t candidates = 0;
  std::uint64_t excluded = 0;
};

/// Unordered same-frame pairs surviving the close-pair rule (separation
/// strictly below min_sep_px is excluded).
PairSelection crosstalk_filter(const FramePhotons& frame, const CrosstalkFilter& filter);

enum class HistAxis { XvsX, YvsY, SumPlane, Singles };

const char* to_string(HistAxis axis);

/// Square grid of `bins` per axis covering [-range, range) in mm^-1.
struct HistGeometry {
  int bins = 128;
  double range = 678.0;

  double bin_width() const { return 2.0 * range / bins; }
  double center(int i) const { return -range + (i + 0.5) * bin_width(); }
  int index(double v) const;  // -1 when outside
  friend bool operator==(const HistGeometry&, const HistGeometry&) = default;
};

/// Default geometry: 128 bins spanning +-1.5 (k_r + 5 sigma_sum).
HistGeometry default_geometry(const SourceParams& source);

struct JointHistogram {
  HistAxis axis = HistAxis::XvsX;
  HistGeometry geometry;
  std::vector<double> counts;  // counts[i * bins + j], i along the first coordinate
  double overflow = 0.0;
  std::uint64_t accepted_pairs = 0;
  std::uint64_t excluded_pairs = 0;
  // Pair-sampling effort: unordered same-frame candidate pairs, and for an
  // accidental histogram also the cross-frame candidates and the scale that
  // puts it on the same-frame footing.
  std::uint64_t same_frame_candidates = 0;
  std::uint64_t cross_frame_candidates = 0;
  double scale = 1.0;

  JointHistogram() = default;
  JointHistogram(HistAxis a, HistGeometry g)
      : axis(a), geometry(g), counts(static_cast<std::size_t>(g.bins) * g.bins, 0.0) {}

  double& at(int i, int j) { return counts[static_cast<std::size_t>(i) * geometry.bins + j]; }
  double at(int i, int j) const { return counts[static_cast<std::size_t>(i) * geometry.bins + j]; }
  double total() const;
  void add(double u, double v, double weight = 1.0);
  /// Bin-wise sum; counters add too.
  void merge(const JointHistogram& other);
};

/// Same-frame pairs, both orderings of each pair (symmetrised).
JointHistogram accumulate_joint(std::span<const FramePhotons> frames, HistAxis axis, const HistGeometry& geometry,
                                const CrosstalkFilter& filter);
JointHistogram accumulate_joint_serial(std::span<const FramePhotons> frames, HistAxis axis,
                                       const HistGeometry& geometry, const CrosstalkFilter& filter);

/// Pairs of one photon from frame i and one from frame i + 1 (consecutive
/// frame ids only), same filter and symmetrisation; `scale` is the ratio of
/// same-frame to cross-frame candidate pairs.
JointHistogram accumulate_accidentals(std::span<const FramePhotons> frames, HistAxis axis,
                                      const HistGeometry& geometry, const CrosstalkFilter& filter);
JointHistogram accumulate_accidentals_serial(std::span<const FramePhotons> frames, HistAxis axis,
                                             const HistGeometry& geometry, const CrosstalkFilter& filter);

/// Far-field single-photon histogram (kx, ky) of every detected photon.
JointHistogram accumulate_singles(std::span<const FramePhotons> frames, const HistGeometry& geometry);

/// h_same - scale * h_acc. Throws AnalysisError on geometry or axis mismatch.
JointHistogram subtract(const JointHistogram& same, const JointHistogram& accidental);

struct SumProjection {
  JointHistogram same;
  JointHistogram accidental;
  JointHistogram subtracted;
};

SumProjection sum_projection(std::span<const FramePhotons> frames, const HistGeometry& geometry,
                             const CrosstalkFilter& filter);

struct CorrelationFit {
  TransverseMomentum center;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double peak_amplitude = 0.0;
  double offset = 0.0;
  double fit_residual = 0.0;  // RMS residual per fitted bin
  int window_half_bins = 0;
};

/// Axis-aligned Gaussian with offset fitted to the bins around the maximum.
/// The model is averaged over each bin, so the widths carry no binning bias.
/// AnalysisError unless the maximum exceeds five times the median absolute
/// bin and stands five Poisson deviations above it.
CorrelationFit fit_peak(const JointHistogram& h);

struct RingFit {
  double k_radius = 0.0;
  double radial_width = 0.0;
  TransverseMomentum center;
  double amplitude = 0.0;
  double background = 0.0;  // counts per bin of the flat far-field background
};

/// Radial profile about the intensity centroid, fitted with a Gaussian in
/// radius plus a uniform-background term.
RingFit fit_ring(const JointHistogram& far_field);

struct ModeCount {
  double value = 0.0;
  double ring_area = 0.0;         // 2 pi k_r sqrt(2 pi) w, mm^-2
  double correlation_area = 0.0;  // sigma_x sigma_y, mm^-2
};

inline constexpr const char* kModeCountDefinition =
    "N = (2*pi*k_radius * sqrt(2*pi)*radial_width) / (sigma_x*sigma_y); ring area is the circumference "
    "times the equivalent width of a Gaussian annulus, squared correlation length is sigma_x*sigma_y";

ModeCount mode_count(const RingFit& ring, const CorrelationFit& fit);

/// Same quantity computed from generator parameters: the single-photon
/// radial width and the configured momentum-sum widths.
double analytic_mode_count(const SourceParams& source);

struct GatingStats {
  std::string label;
  std::vector<std::uint64_t> histogram;  // frames with 0, 1, ..., max_count-1, and >= max_count photons
  std::uint64_t frames = 0;
  double success_rate = 0.0;  // exactly 1 or 2 photons
  double empty_fraction = 0.0;
};

GatingStats gating_stats(std::span<const std::uint64_t> photons_per_frame, std::string label = {},
                         int max_count = 5);

/// Bin-averaged anisotropic Gaussian used by fit_peak. Parameter order:
/// amplitude, mean_x, mean_y, sigma_x, sigma_y, offset.
using PeakParams = Eigen::Matrix<double, 6, 1>;
double binned_gaussian_value(const PeakParams& p, double x_lo, double x_hi, double y_lo, double y_hi);
PeakParams binned_gaussian_gradient(const PeakParams& p, double x_lo, double x_hi, double y_lo, double y_hi);

void write_histogram_csv(std::ostream& os, const JointHistogram& h);

}  // namespace hic
