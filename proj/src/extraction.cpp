#include "hic/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hic/errors.hpp"
#include "hic/lm.hpp"

namespace hic {

void ExtractionParams::validate(const ReadoutParams& readout, const std::string& path) const {
  auto fail = [&](const char* field, const char* what) { throw ConfigError(path + "." + field, what); };
  if (!(detect_threshold > 0.0)) fail("detect_threshold", "must be positive");
  if (roi_half_size < 1 || roi_half_size < 2.0 * readout.psf_sigma_px) fail("roi_half_size", "must be >= 2 * psf_sigma_px");
  if (max_iterations < 1) fail("max_iterations", "must be >= 1");
  if (!(convergence_tol > 0.0)) fail("convergence_tol", "must be positive");
  if (!(sigma_min > 0.0 && sigma_max > sigma_min)) fail("sigma_max", "need 0 < sigma_min < sigma_max");
  if (!(sigma_prior >= sigma_min && sigma_prior <= sigma_max)) fail("sigma_prior", "must lie within the sigma bounds");
  if (!(min_peak_separation >= 1.0)) fail("min_peak_separation", "must be >= 1");
}

const char* to_string(FitFailureReason reason) {
  switch (reason) {
    case FitFailureReason::NoPeak: return "no_peak";
    case FitFailureReason::RoiOutOfBounds: return "roi_out_of_bounds";
    case FitFailureReason::Diverged: return "diverged";
    case FitFailureReason::SigmaOutOfBounds: return "sigma_out_of_bounds";
    case FitFailureReason::NegativeAmplitude: return "negative_amplitude";
    case FitFailureReason::CenterOutsideRoi: return "center_outside_roi";
  }
  return "unknown";
}

double gaussian_spot_value(const SpotParams& p, double x, double y) {
  const double dx = x - p[1];
  const double dy = y - p[2];
  return p[0] * std::exp(-(dx * dx + dy * dy) / (2.0 * p[3] * p[3])) + p[4];
}

SpotParams gaussian_spot_gradient(const SpotParams& p, double x, double y) {
  const double dx = x - p[1];
  const double dy = y - p[2];
  const double s2 = p[3] * p[3];
  const double e = std::exp(-(dx * dx + dy * dy) / (2.0 * s2));
  SpotParams g;
  g << e, p[0] * e * dx / s2, p[0] * e * dy / s2, p[0] * e * (dx * dx + dy * dy) / (s2 * p[3]), 1.0;
  return g;
}

namespace {

struct SpotModel {
  const Image& image;
  int x0, y0, size;  // ROI in image-local coordinates

  bool evaluate(const SpotParams& p, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 5>* jac) const {
    if (!(p[3] > 0.0)) return false;
    const int n = size * size;
    r.resize(n);
    if (jac) jac->resize(n, 5);
    int row = 0;
    for (int iy = 0; iy < size; ++iy) {
      for (int ix = 0; ix < size; ++ix, ++row) {
        const double x = image.origin_x + x0 + ix;
        const double y = image.origin_y + y0 + iy;
        r[row] = gaussian_spot_value(p, x, y) - image.at(x0 + ix, y0 + iy);
        if (jac) jac->row(row) = gaussian_spot_gradient(p, x, y).transpose();
      }
    }
    return true;
  }
};

}  // namespace

std::vector<PeakCandidate> detect_candidates(const Image& image, const ExtractionParams& params) {
  std::vector<PeakCandidate> maxima;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double v = image.at(x, y);
      if (!(v > params.detect_threshold)) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dx == 0 && dy == 0) || !image.contains(x + dx, y + dy)) continue;
          const double w = image.at(x + dx, y + dy);
          // Plateaus: the first pixel in (y, x) order keeps the peak.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (w > v || (earlier && w == v)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) maxima.push_back({x + image.origin_x, y + image.origin_y, v});
    }
  }
  std::stable_sort(maxima.begin(), maxima.end(), [](const PeakCandidate& a, const PeakCandidate& b) {
    if (a.value != b.value) return a.value > b.value;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  const double sep2 = params.min_peak_separation * params.min_peak_separation;
  std::vector<PeakCandidate> kept;
  for (const auto& c : maxima) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const PeakCandidate& k) {
      const double dx = c.x - k.x;
      const double dy = c.y - k.y;
      return dx * dx + dy * dy < sep2;
    });
    if (!suppressed) kept.push_back(c);
  }
  return kept;
}

FitOutcome fit_gaussian(const Image& image, const PeakCandidate& candidate, const ExtractionParams& params,
                        std::vector<double>* cost_history) {
  const int h = params.roi_half_size;
  const int lx = candidate.x - image.origin_x - h;
  const int ly = candidate.y - image.origin_y - h;
  const int size = 2 * h + 1;
  if (lx < 0 || ly < 0 || lx + size > image.width || ly + size > image.height)
    return FitFailure{FitFailureReason::RoiOutOfBounds};

  std::vector<double> roi;
  roi.reserve(static_cast<std::size_t>(size) * size);
  double peak = -std::numeric_limits<double>::infinity();
  for (int iy = 0; iy < size; ++iy)
    for (int ix = 0; ix < size; ++ix) {
      roi.push_back(image.at(lx + ix, ly + iy));
      peak = std::max(peak, roi.back());
    }
  std::vector<double> sorted = roi;
  auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double median = *mid;
  if (!(peak - median > 0.0)) return FitFailure{FitFailureReason::NoPeak};

  double wsum = 0.0, wx = 0.0, wy = 0.0;
  for (int iy = 0; iy < size; ++iy)
    for (int ix = 0; ix < size; ++ix) {
      const double w = roi[static_cast<std::size_t>(iy) * size + ix] - median;
      if (w <= 0.0) continue;
      wsum += w;
      wx += w * (image.origin_x + lx + ix);
      wy += w * (image.origin_y + ly + iy);
    }

  SpotParams start;
  start << peak - median, wx / wsum, wy / wsum, params.sigma_prior, median;

  LmOptions options;
  options.max_iterations = params.max_iterations;
  options.convergence_tol = params.convergence_tol;
  options.record_history = cost_history != nullptr;
  const SpotModel model{image, lx, ly, size};
  const auto fit = levenberg_marquardt<5>(model, start, options);
  if (cost_history) *cost_history = fit.cost_history;

  if (fit.status == LmStatus::Diverged || fit.status == LmStatus::InvalidStart || !fit.params.allFinite())
    return FitFailure{FitFailureReason::Diverged};
  const SpotParams& p = fit.params;
  if (!(p[0] > 0.0)) return FitFailure{FitFailureReason::NegativeAmplitude};
  const double sigma = std::abs(p[3]);
  if (sigma < params.sigma_min || sigma > params.sigma_max) return FitFailure{FitFailureReason::SigmaOutOfBounds};
  const double rx0 = image.origin_x + lx - 0.5;
  const double ry0 = image.origin_y + ly - 0.5;
  if (p[1] < rx0 || p[1] > rx0 + size || p[2] < ry0 || p[2] > ry0 + size)
    return FitFailure{FitFailureReason::CenterOutsideRoi};

  DetectedSpot spot;
  spot.x = p[1];
  spot.y = p[2];
  spot.amplitude = p[0];
  spot.sigma = sigma;
  spot.offset = p[4];
  spot.residual_norm = std::sqrt(2.0 * fit.cost);
  spot.roi_origin_x = image.origin_x + lx;
  spot.roi_origin_y = image.origin_y + ly;
  spot.iterations = fit.iterations;
  return spot;
}

std::uint64_t ExtractionResult::failure_count() const {
  return std::accumulate(failures.begin(), failures.end(), std::uint64_t{0});
}

ExtractionResult extract_events(const Image& image, const ExtractionParams& params, const OpticsMap& optics) {
  ExtractionResult out;
  const auto candidates = detect_candidates(image, params);
  out.candidates = candidates.size();
  for (const auto& c : candidates) {
    auto outcome = fit_gaussian(image, c, params);
    if (auto* failure = std::get_if<FitFailure>(&outcome)) {
      ++out.failures[static_cast<std::size_t>(failure->reason)];
      continue;
    }
    const auto& spot = std::get<DetectedSpot>(outcome);
    out.events.push_back({spot, map_pixel_to_momentum({spot.x, spot.y}, optics)});
  }
  std::sort(out.events.begin(), out.events.end(), [](const ExtractedEvent& a, const ExtractedEvent& b) {
    if (a.spot.x != b.spot.x) return a.spot.x < b.spot.x;
    return a.spot.y < b.spot.y;
  });
  return out;
}

}  // namespace hic
