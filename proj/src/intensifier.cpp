#include "hic/intensifier.hpp"

#include <cmath>
#include <numbers>

#include "hic/errors.hpp"

namespace hic {

namespace {

bool on_grid(int cx, int cy, const IntensifierParams& p) {
  return cx >= 0 && cy >= 0 && cx < p.channels_x && cy < p.channels_y;
}

int to_channel(double coord) { return static_cast<int>(std::lround(coord)); }

}  // namespace

void IntensifierParams::validate(const std::string& path) const {
  auto fail = [&](const char* field, const char* what) { throw ConfigError(path + "." + field, what); };
  if (!(qe >= 0.0 && qe <= 1.0)) fail("qe", "must be in [0, 1]");
  if (channels_x <= 0) fail("channels_x", "must be positive");
  if (channels_y <= 0) fail("channels_y", "must be positive");
  if (!(brightness_shape > 0.0)) fail("brightness_shape", "must be positive");
  if (!(brightness_scale > 0.0)) fail("brightness_scale", "must be positive");
  if (!(crosstalk_prob >= 0.0 && crosstalk_prob <= 1.0)) fail("crosstalk_prob", "must be in [0, 1]");
  if (!(crosstalk_radius_px > 0.0)) fail("crosstalk_radius_px", "must be positive");
  if (!(crosstalk_brightness_factor > 0.0 && crosstalk_brightness_factor <= 1.0))
    fail("crosstalk_brightness_factor", "must be in (0, 1]");
  if (!(crosstalk_brightness_shape > 0.0)) fail("crosstalk_brightness_shape", "must be positive");
  if (!(phosphor_delay_ns >= 0.0)) fail("phosphor_delay_ns", "must be >= 0");
}

void OpticsMap::validate(const IntensifierParams& ii, double k_max, const std::string& path) const {
  if (!(k_to_pixel_scale > 0.0)) throw ConfigError(path + ".k_to_pixel_scale", "must be positive");
  const double reach = k_max * k_to_pixel_scale;
  if (center_x - reach < -0.5 || center_x + reach > ii.channels_x - 0.5)
    throw ConfigError(path + ".center_x", "acceptance disk does not fit the channel grid along x");
  if (center_y - reach < -0.5 || center_y + reach > ii.channels_y - 0.5)
    throw ConfigError(path + ".center_y", "acceptance disk does not fit the channel grid along y");
}

PixelPoint map_momentum_to_pixel(const TransverseMomentum& k, const OpticsMap& optics) {
  return {optics.center_x + optics.k_to_pixel_scale * k.kx, optics.center_y + optics.k_to_pixel_scale * k.ky};
}

TransverseMomentum map_pixel_to_momentum(const PixelPoint& px, const OpticsMap& optics) {
  return {(px.x - optics.center_x) / optics.k_to_pixel_scale, (px.y - optics.center_y) / optics.k_to_pixel_scale};
}

double sample_brightness(const IntensifierParams& params, Rng& rng) {
  if (params.brightness_model == BrightnessModel::Uniform) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return (1.0 - u(rng)) * 2.0 * params.mean_brightness();
  }
  std::gamma_distribution<double> gamma(params.brightness_shape, params.brightness_scale);
  double b = gamma(rng);
  // Gamma draws can underflow to exactly zero for small shapes.
  while (!(b > 0.0)) b = gamma(rng);
  return b;
}

std::optional<FlashEvent> detect(const PhotonEvent& photon, const IntensifierParams& params, const OpticsMap& optics,
                                 Rng& rng, DetectStats* stats) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (stats) ++stats->photons;
  if (!(u(rng) < params.qe)) return std::nullopt;

  const PixelPoint p = map_momentum_to_pixel(photon.k, optics);
  const int cx = to_channel(p.x);
  const int cy = to_channel(p.y);
  if (!on_grid(cx, cy, params)) {
    if (stats) ++stats->off_grid;
    return std::nullopt;
  }
  if (stats) ++stats->converted;

  FlashEvent flash;
  flash.channel_x = cx;
  flash.channel_y = cy;
  flash.true_x = p.x;
  flash.true_y = p.y;
  flash.brightness = sample_brightness(params, rng);
  flash.t_ns = photon.t_ns + params.phosphor_delay_ns;
  flash.parent_pair_id = photon.pair_id;
  return flash;
}

std::vector<FlashEvent> apply_crosstalk(const FlashEvent& flash, const IntensifierParams& params, Rng& rng,
                                        DetectStats* stats) {
  if (flash.is_crosstalk) throw SimulationError("apply_crosstalk called on a secondary flash");
  std::vector<FlashEvent> out{flash};
  if (params.crosstalk_prob <= 0.0) return out;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (!(u(rng) < params.crosstalk_prob)) return out;

  // (0, R]: 1 - u lies in (0, 1].
  const double distance = params.crosstalk_radius_px * (1.0 - u(rng));
  const double theta = 2.0 * std::numbers::pi * u(rng);
  std::gamma_distribution<double> noise(params.crosstalk_brightness_shape, 1.0 / params.crosstalk_brightness_shape);
  double factor = noise(rng);
  while (!(factor > 0.0)) factor = noise(rng);

  FlashEvent secondary = flash;
  secondary.true_x = flash.x() + distance * std::cos(theta);
  secondary.true_y = flash.y() + distance * std::sin(theta);
  secondary.channel_x = to_channel(secondary.true_x);
  secondary.channel_y = to_channel(secondary.true_y);
  secondary.brightness = flash.brightness * params.crosstalk_brightness_factor * factor;
  secondary.is_crosstalk = true;
  if (stats) ++stats->crosstalk_secondaries;
  if (!on_grid(secondary.channel_x, secondary.channel_y, params)) {
    if (stats) ++stats->crosstalk_off_grid;
    return out;
  }
  out.push_back(secondary);
  return out;
}

}  // namespace hic
