#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hic/rng.hpp"
#include "hic/source.hpp"

namespace hic {

enum class BrightnessModel { Gamma, Uniform };

struct IntensifierParams {
  double qe = 0.20;
  int channels_x = 3000;
  int channels_y = 3000;
  // Phosphor flash brightness, arbitrary units. Uniform draws from
  // (0, 2 * shape * scale], i.e. the same mean as the Gamma preset.
  BrightnessModel brightness_model = BrightnessModel::Gamma;
  double brightness_shape = 1.3;
  double brightness_scale = 1.0;
  double crosstalk_prob = 0.05;
  double crosstalk_radius_px = 50.0;
  double crosstalk_brightness_factor = 0.5;
  double crosstalk_brightness_shape = 4.0;  // Gamma noise with unit mean on the secondary
  double phosphor_delay_ns = 0.0;

  void validate(const std::string& path = "intensifier") const;
  double mean_brightness() const { return brightness_shape * brightness_scale; }
  friend bool operator==(const IntensifierParams&, const IntensifierParams&) = default;
};

/// Affine far-field mapping between momentum and channel (pixel) coordinates.
struct OpticsMap {
  double k_to_pixel_scale = 1400.0 / 480.0;  // pixels per mm^-1
  double center_x = 1500.0;
  double center_y = 1500.0;

  void validate(const IntensifierParams& ii, double k_max, const std::string& path = "optics") const;
  friend bool operator==(const OpticsMap&, const OpticsMap&) = default;
};

struct PixelPoint {
  double x = 0.0;
  double y = 0.0;
};

PixelPoint map_momentum_to_pixel(const TransverseMomentum& k, const OpticsMap& optics);
TransverseMomentum map_pixel_to_momentum(const PixelPoint& px, const OpticsMap& optics);

/// A phosphor-screen burst. Channel centres sit on integer coordinates; the
/// flash is emitted from the channel centre, the photon's sub-channel
/// landing point is kept for validation only.
struct FlashEvent {
  int channel_x = 0;
  int channel_y = 0;
  double true_x = 0.0;
  double true_y = 0.0;
  double brightness = 0.0;
  double t_ns = 0.0;
  bool is_crosstalk = false;
  std::optional<std::uint64_t> parent_pair_id;

  double x() const { return static_cast<double>(channel_x); }
  double y() const { return static_cast<double>(channel_y); }
};

struct DetectStats {
  std::uint64_t photons = 0;
  std::uint64_t converted = 0;
  std::uint64_t off_grid = 0;
  std::uint64_t crosstalk_secondaries = 0;
  std::uint64_t crosstalk_off_grid = 0;
};

double sample_brightness(const IntensifierParams& params, Rng& rng);

/// Photocathode conversion with probability qe followed by channel
/// quantisation and a brightness draw. Photons mapping outside the channel
/// grid are counted in `stats.off_grid` and produce nothing.
std::optional<FlashEvent> detect(const PhotonEvent& photon, const IntensifierParams& params, const OpticsMap& optics,
                                 Rng& rng, DetectStats* stats = nullptr);

/// Primary first, then at most one back-scatter secondary.
std::vector<FlashEvent> apply_crosstalk(const FlashEvent& flash, const IntensifierParams& params, Rng& rng,
                                        DetectStats* stats = nullptr);

}  // namespace hic
