#include "hic/readout.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include "hic/errors.hpp"

namespace hic {

void ReadoutParams::validate(const std::string& path) const {
  auto fail = [&](const char* field, const char* what) { throw ConfigError(path + "." + field, what); };
  if (!(psf_sigma_px > 0.0)) fail("psf_sigma_px", "must be positive");
  if (!(cmos_gain > 0.0)) fail("cmos_gain", "must be positive");
  if (!(cmos_noise_sigma >= 0.0)) fail("cmos_noise_sigma", "must be >= 0");
  if (!(cmos_lognormal_sigma >= 0.0)) fail("cmos_lognormal_sigma", "must be >= 0");
  if (roi_width <= 0) fail("roi_width", "must be positive");
  if (roi_height <= 0) fail("roi_height", "must be positive");
  if (!(pmt_fraction >= 0.0 && pmt_fraction <= 1.0)) fail("pmt_fraction", "must be in [0, 1]");
  if (!(pmt_gain > 0.0)) fail("pmt_gain", "must be positive");
  if (!(pmt_noise_sigma >= 0.0)) fail("pmt_noise_sigma", "must be >= 0");
  if (!(pmt_lognormal_sigma >= 0.0)) fail("pmt_lognormal_sigma", "must be >= 0");
  if (!(pmt_false_pulse_rate >= 0.0)) fail("pmt_false_pulse_rate", "must be >= 0");
  if (!(false_pulse_mean_amplitude > 0.0)) fail("false_pulse_mean_amplitude", "must be positive");
  if (!(discriminator_threshold > 0.0)) fail("discriminator_threshold", "must be positive");
  if (!(pulse_pair_resolution_ns >= 0.0)) fail("pulse_pair_resolution_ns", "must be >= 0");
}

namespace {

double lognormal_factor(double sigma, Rng& rng) {
  if (sigma <= 0.0) return 1.0;
  std::normal_distribution<double> n(0.0, sigma);
  return std::exp(n(rng));
}

bool inside_roi(const FlashEvent& f, const ReadoutParams& p) {
  return f.channel_x >= p.roi_x0 && f.channel_y >= p.roi_y0 && f.channel_x < p.roi_x0 + p.roi_width &&
         f.channel_y < p.roi_y0 + p.roi_height;
}

}  // namespace

double cmos_peak_amplitude(double brightness, const ReadoutParams& params, Rng& rng) {
  return (1.0 - params.pmt_fraction) * params.cmos_gain * brightness * lognormal_factor(params.cmos_lognormal_sigma, rng);
}

std::optional<double> pmt_amplitude(double brightness, const ReadoutParams& params, Rng& rng) {
  double a = params.pmt_fraction * params.pmt_gain * brightness * lognormal_factor(params.pmt_lognormal_sigma, rng);
  if (params.pmt_noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, params.pmt_noise_sigma);
    a += n(rng);
  }
  if (!(a > 0.0)) return std::nullopt;
  return a;
}

void add_gaussian_spot(Image& image, double x, double y, double peak, double sigma) {
  const double reach = 6.0 * sigma;
  const int x_lo = std::max(0, static_cast<int>(std::floor(x - reach)) - image.origin_x);
  const int x_hi = std::min(image.width - 1, static_cast<int>(std::ceil(x + reach)) - image.origin_x);
  const int y_lo = std::max(0, static_cast<int>(std::floor(y - reach)) - image.origin_y);
  const int y_hi = std::min(image.height - 1, static_cast<int>(std::ceil(y + reach)) - image.origin_y);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int iy = y_lo; iy <= y_hi; ++iy) {
    const double dy = (iy + image.origin_y) - y;
    const double gy = std::exp(-dy * dy * inv);
    for (int ix = x_lo; ix <= x_hi; ++ix) {
      const double dx = (ix + image.origin_x) - x;
      image.at(ix, iy) += peak * gy * std::exp(-dx * dx * inv);
    }
  }
}

Image render_spots(std::span<const CmosSpotTruth> spots, const ReadoutParams& params, Rng& rng) {
  Image image(params.roi_width, params.roi_height, params.roi_x0, params.roi_y0);
  for (const auto& s : spots) add_gaussian_spot(image, s.true_x, s.true_y, s.true_amplitude, params.psf_sigma_px);
  if (params.cmos_noise_sigma > 0.0) {
    // Read noise dominates render cost; a ziggurat normal on a generator
    // seeded from the frame stream is several times faster per pixel.
    boost::random::mt19937_64 pixel_rng(rng());
    boost::random::normal_distribution<double> noise(0.0, params.cmos_noise_sigma);
    for (double& v : image.pixels) v += noise(pixel_rng);
  }
  return image;
}

RenderedFrame render_frame(std::span<const FlashEvent> flashes, const ReadoutParams& params, Rng& rng) {
  RenderedFrame out;
  for (std::size_t i = 0; i < flashes.size(); ++i) {
    if (!inside_roi(flashes[i], params)) continue;
    out.truth.push_back({flashes[i].x(), flashes[i].y(), cmos_peak_amplitude(flashes[i].brightness, params, rng), i});
  }
  out.image = render_spots(out.truth, params, rng);
  return out;
}

std::vector<PmtPulse> false_pulses(const ReadoutParams& params, double t_begin_ns, double t_end_ns, Rng& rng) {
  std::vector<PmtPulse> out;
  if (params.pmt_false_pulse_rate <= 0.0 || !(t_end_ns > t_begin_ns)) return out;
  std::exponential_distribution<double> gap(params.pmt_false_pulse_rate * 1e-9);
  std::exponential_distribution<double> amp(1.0 / params.false_pulse_mean_amplitude);
  for (double t = t_begin_ns + gap(rng); t < t_end_ns; t += gap(rng)) out.push_back({t, amp(rng)});
  return out;
}

std::vector<PmtPulse> pmt_pulse_train(std::span<const FlashEvent> flashes, const ReadoutParams& params,
                                      double t_begin_ns, double t_end_ns, Rng& rng) {
  std::vector<PmtPulse> out;
  out.reserve(flashes.size());
  for (const auto& f : flashes) {
    if (auto a = pmt_amplitude(f.brightness, params, rng)) out.push_back({f.t_ns, *a});
  }
  auto noise = false_pulses(params, t_begin_ns, t_end_ns, rng);
  out.insert(out.end(), noise.begin(), noise.end());
  std::stable_sort(out.begin(), out.end(), [](const PmtPulse& a, const PmtPulse& b) { return a.t_ns < b.t_ns; });
  return out;
}

std::optional<double> OnlineDiscriminator::feed(const PmtPulse& pulse) {
  if (last_seen_ && pulse.t_ns < *last_seen_) throw SimulationError("discriminator fed out of time order");
  last_seen_ = pulse.t_ns;
  if (pulse.amplitude < threshold_) return std::nullopt;
  if (last_trigger_ && pulse.t_ns - *last_trigger_ < resolution_) return std::nullopt;
  last_trigger_ = pulse.t_ns;
  return pulse.t_ns;
}

std::vector<double> discriminate(std::span<const PmtPulse> train, const ReadoutParams& params) {
  OnlineDiscriminator disc(params);
  std::vector<double> triggers;
  for (const auto& p : train) {
    if (auto t = disc.feed(p)) triggers.push_back(*t);
  }
  return triggers;
}

std::vector<double> sample_pmt_trace(std::span<const PmtPulse> train, double t0_ns, double dt_ns, std::size_t samples,
                                     double pulse_sigma_ns) {
  std::vector<double> trace(samples, 0.0);
  const double inv = 1.0 / (2.0 * pulse_sigma_ns * pulse_sigma_ns);
  for (const auto& p : train) {
    for (std::size_t i = 0; i < samples; ++i) {
      const double d = t0_ns + dt_ns * static_cast<double>(i) - p.t_ns;
      if (std::abs(d) < 8.0 * pulse_sigma_ns) trace[i] += p.amplitude * std::exp(-d * d * inv);
    }
  }
  return trace;
}

}  // namespace hic
