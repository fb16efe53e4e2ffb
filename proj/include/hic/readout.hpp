#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hic/intensifier.hpp"
#include "hic/rng.hpp"

namespace hic {

struct ReadoutParams {
  // sCMOS. Camera pixels coincide with intensifier channels; the rendered
  // image is the ROI window of that grid.
  double psf_sigma_px = 1.5;
  double cmos_gain = 1000.0;       // peak counts per brightness unit of undivided light
  double cmos_noise_sigma = 10.0;  // counts, per pixel
  double cmos_lognormal_sigma = 0.1;
  int roi_x0 = 0;
  int roi_y0 = 0;
  int roi_width = 3000;
  int roi_height = 3000;

  // PMT on the reflected share of the light.
  double pmt_fraction = 0.10;
  double pmt_gain = 1.0;  // volts per brightness unit
  double pmt_noise_sigma = 0.002;
  double pmt_lognormal_sigma = 0.1;
  double pmt_false_pulse_rate = 0.0;        // 1/s
  double false_pulse_mean_amplitude = 0.02;  // volts, exponential amplitudes
  double discriminator_threshold = 0.01;     // volts
  double pulse_pair_resolution_ns = 5.0;

  void validate(const std::string& path = "readout") const;
  friend bool operator==(const ReadoutParams&, const ReadoutParams&) = default;
};

struct PmtPulse {
  double t_ns = 0.0;
  double amplitude = 0.0;  // volts
  friend bool operator==(const PmtPulse&, const PmtPulse&) = default;
};

struct CmosSpotTruth {
  double true_x = 0.0;
  double true_y = 0.0;
  double true_amplitude = 0.0;  // peak counts
  std::size_t flash_index = 0;
};

/// Row-major image with an offset into the channel grid.
struct Image {
  int width = 0;
  int height = 0;
  int origin_x = 0;
  int origin_y = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int w, int h, int ox = 0, int oy = 0)
      : width(w), height(h), origin_x(ox), origin_y(oy), pixels(static_cast<std::size_t>(w) * h, 0.0) {}

  double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

struct RenderedFrame {
  Image image;
  std::vector<CmosSpotTruth> truth;
};

/// Peak sCMOS counts for a flash, including the multiplicative detector noise.
double cmos_peak_amplitude(double brightness, const ReadoutParams& params, Rng& rng);

/// PMT amplitude for a flash; empty when additive noise drives it to <= 0.
std::optional<double> pmt_amplitude(double brightness, const ReadoutParams& params, Rng& rng);

/// Draws sCMOS amplitudes for the flashes inside the ROI, then renders them.
RenderedFrame render_frame(std::span<const FlashEvent> flashes, const ReadoutParams& params, Rng& rng);

/// Adds one isotropic Gaussian per spot plus per-pixel read noise. Spot
/// coordinates are absolute channel coordinates.
Image render_spots(std::span<const CmosSpotTruth> spots, const ReadoutParams& params, Rng& rng);

/// Adds a single Gaussian spot (no noise) to `image`, truncated at 6 sigma.
void add_gaussian_spot(Image& image, double x, double y, double peak, double sigma);

/// One pulse per flash plus Poisson false pulses in [t_begin, t_end), sorted by time.
std::vector<PmtPulse> pmt_pulse_train(std::span<const FlashEvent> flashes, const ReadoutParams& params,
                                      double t_begin_ns, double t_end_ns, Rng& rng);

/// Poisson false pulses only, in [t_begin, t_end).
std::vector<PmtPulse> false_pulses(const ReadoutParams& params, double t_begin_ns, double t_end_ns, Rng& rng);

/// Leading-edge discriminator with a non-extending dead time: after a
/// trigger, above-threshold pulses within the pulse-pair resolution are
/// absorbed and do not restart the dead time. Unlike an extending dead time
/// this keeps the trigger count monotone in the threshold.
class OnlineDiscriminator {
 public:
  OnlineDiscriminator(double threshold, double resolution_ns) : threshold_(threshold), resolution_(resolution_ns) {}
  explicit OnlineDiscriminator(const ReadoutParams& p)
      : OnlineDiscriminator(p.discriminator_threshold, p.pulse_pair_resolution_ns) {}

  /// Pulses must arrive in time order. Returns the trigger time if one fires.
  std::optional<double> feed(const PmtPulse& pulse);

 private:
  double threshold_;
  double resolution_;
  std::optional<double> last_trigger_;
  std::optional<double> last_seen_;
};

std::vector<double> discriminate(std::span<const PmtPulse> train, const ReadoutParams& params);

/// Sampled voltage trace of a pulse train (Gaussian pulse shape), for plots only.
std::vector<double> sample_pmt_trace(std::span<const PmtPulse> train, double t0_ns, double dt_ns,
                                     std::size_t samples, double pulse_sigma_ns = 1.0);

}  // namespace hic
