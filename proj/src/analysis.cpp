#include "hic/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include <omp.h>

#include "hic/errors.hpp"
#include "hic/lm.hpp"

namespace hic {

FramePhotons to_frame_photons(const FrameRecord& record, const OpticsMap& optics) {
  FramePhotons out;
  out.frame_id = record.frame_id;
  out.photons.reserve(record.spots.size());
  for (const auto& s : record.spots) out.photons.push_back({s.x, s.y, map_pixel_to_momentum({s.x, s.y}, optics)});
  return out;
}

namespace {

bool too_close(const DetectedPhoton& a, const DetectedPhoton& b, double min_sep) {
  const double dx = a.x_px - b.x_px;
  const double dy = a.y_px - b.y_px;
  return dx * dx + dy * dy < min_sep * min_sep;
}

// Photons kept after DropPhotons filtering; all of them otherwise.
std::vector<std::uint32_t> surviving(const FramePhotons& frame, const CrosstalkFilter& filter) {
  const auto n = static_cast<std::uint32_t>(frame.photons.size());
  std::vector<std::uint32_t> keep;
  keep.reserve(n);
  for (std::uint32_t a = 0; a < n; ++a) {
    bool drop = false;
    if (filter.enabled && filter.mode == CrosstalkMode::DropPhotons) {
      for (std::uint32_t b = 0; b < n && !drop; ++b)
        drop = b != a && too_close(frame.photons[a], frame.photons[b], filter.min_sep_px);
    }
    if (!drop) keep.push_back(a);
  }
  return keep;
}

void add_pair(JointHistogram& h, const DetectedPhoton& a, const DetectedPhoton& b) {
  switch (h.axis) {
    case HistAxis::XvsX:
      h.add(a.k.kx, b.k.kx);
      h.add(b.k.kx, a.k.kx);
      break;
    case HistAxis::YvsY:
      h.add(a.k.ky, b.k.ky);
      h.add(b.k.ky, a.k.ky);
      break;
    case HistAxis::SumPlane:
    case HistAxis::Singles: {
      const TransverseMomentum s = a.k + b.k;
      h.add(s.kx, s.ky);
      h.add(s.kx, s.ky);
      break;
    }
  }
}

void accumulate_same_frame(JointHistogram& h, const FramePhotons& frame, const CrosstalkFilter& filter) {
  const auto sel = crosstalk_filter(frame, filter);
  h.same_frame_candidates += sel.candidates;
  h.excluded_pairs += sel.excluded;
  h.accepted_pairs += sel.pairs.size();
  for (const auto& [a, b] : sel.pairs) add_pair(h, frame.photons[a], frame.photons[b]);
}

std::uint64_t same_frame_candidates(const FramePhotons& f) {
  const std::uint64_t n = f.photons.size();
  return n * (n > 0 ? n - 1 : 0) / 2;
}

void accumulate_cross_frame(JointHistogram& h, const FramePhotons& first, const FramePhotons& second,
                            const CrosstalkFilter& filter) {
  if (second.frame_id != first.frame_id + 1) return;
  h.cross_frame_candidates += first.photons.size() * second.photons.size();
  const auto keep_a = surviving(first, filter);
  const auto keep_b = surviving(second, filter);
  const bool exclude_close = filter.enabled && filter.mode == CrosstalkMode::ExcludePairs;
  h.excluded_pairs += first.photons.size() * second.photons.size() - keep_a.size() * keep_b.size();
  for (auto a : keep_a) {
    for (auto b : keep_b) {
      if (exclude_close && too_close(first.photons[a], second.photons[b], filter.min_sep_px)) {
        ++h.excluded_pairs;
        continue;
      }
      ++h.accepted_pairs;
      add_pair(h, first.photons[a], second.photons[b]);
    }
  }
}

template <class Kernel>
JointHistogram parallel_accumulate(std::size_t items, HistAxis axis, const HistGeometry& geometry, Kernel kernel) {
  const int threads = omp_get_max_threads();
  std::vector<JointHistogram> partial(static_cast<std::size_t>(threads), JointHistogram(axis, geometry));
#pragma omp parallel num_threads(threads)
  {
    JointHistogram& mine = partial[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(items); ++i) kernel(mine, static_cast<std::size_t>(i));
  }
  JointHistogram out(axis, geometry);
  for (const auto& p : partial) out.merge(p);
  return out;
}

void finish_accidentals(JointHistogram& h, std::span<const FramePhotons> frames) {
  h.same_frame_candidates = 0;
  for (const auto& f : frames) h.same_frame_candidates += same_frame_candidates(f);
  h.scale = h.cross_frame_candidates > 0
                ? static_cast<double>(h.same_frame_candidates) / static_cast<double>(h.cross_frame_candidates)
                : 0.0;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

PairSelection crosstalk_filter(const FramePhotons& frame, const CrosstalkFilter& filter) {
  PairSelection sel;
  const auto n = static_cast<std::uint32_t>(frame.photons.size());
  sel.candidates = same_frame_candidates(frame);
  if (filter.enabled && filter.mode == CrosstalkMode::DropPhotons) {
    const auto keep = surviving(frame, filter);
    for (std::size_t i = 0; i < keep.size(); ++i)
      for (std::size_t j = i + 1; j < keep.size(); ++j) sel.pairs.emplace_back(keep[i], keep[j]);
  } else {
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = a + 1; b < n; ++b) {
        if (filter.enabled && too_close(frame.photons[a], frame.photons[b], filter.min_sep_px)) continue;
        sel.pairs.emplace_back(a, b);
      }
  }
  sel.excluded = sel.candidates - sel.pairs.size();
  return sel;
}

const char* to_string(HistAxis axis) {
  switch (axis) {
    case HistAxis::XvsX: return "kx1_vs_kx2";
    case HistAxis::YvsY: return "ky1_vs_ky2";
    case HistAxis::SumPlane: return "sum_plane";
    case HistAxis::Singles: return "singles";
  }
  return "unknown";
}

int HistGeometry::index(double v) const {
  if (!(v >= -range && v < range)) return -1;
  const int i = static_cast<int>(std::floor((v + range) / bin_width()));
  return std::min(i, bins - 1);
}

HistGeometry default_geometry(const SourceParams& source) {
  const double sigma = std::max(source.sum_sigma_x, source.sum_sigma_y);
  return HistGeometry{128, 1.5 * (source.ring_radius + 5.0 * sigma)};
}

double JointHistogram::total() const {
  double s = 0.0;
  for (double c : counts) s += c;
  return s;
}

void JointHistogram::add(double u, double v, double weight) {
  const int i = geometry.index(u);
  const int j = geometry.index(v);
  if (i < 0 || j < 0) {
    overflow += weight;
    return;
  }
  at(i, j) += weight;
}

void JointHistogram::merge(const JointHistogram& other) {
  if (!(other.geometry == geometry) || other.axis != axis) throw AnalysisError("merging histograms of different geometry");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  overflow += other.overflow;
  accepted_pairs += other.accepted_pairs;
  excluded_pairs += other.excluded_pairs;
  same_frame_candidates += other.same_frame_candidates;
  cross_frame_candidates += other.cross_frame_candidates;
}

JointHistogram accumulate_joint(std::span<const FramePhotons> frames, HistAxis axis, const HistGeometry& geometry,
                                const CrosstalkFilter& filter) {
  return parallel_accumulate(frames.size(), axis, geometry, [&](JointHistogram& h, std::size_t i) {
    accumulate_same_frame(h, frames[i], filter);
  });
}

JointHistogram accumulate_joint_serial(std::span<const FramePhotons> frames, HistAxis axis,
                                       const HistGeometry& geometry, const CrosstalkFilter& filter) {
  JointHistogram h(axis, geometry);
  for (const auto& f : frames) accumulate_same_frame(h, f, filter);
  return h;
}

JointHistogram accumulate_accidentals(std::span<const FramePhotons> frames, HistAxis axis,
                                      const HistGeometry& geometry, const CrosstalkFilter& filter) {
  const std::size_t links = frames.size() > 0 ? frames.size() - 1 : 0;
  JointHistogram h = parallel_accumulate(links, axis, geometry, [&](JointHistogram& part, std::size_t i) {
    accumulate_cross_frame(part, frames[i], frames[i + 1], filter);
  });
  finish_accidentals(h, frames);
  return h;
}

JointHistogram accumulate_accidentals_serial(std::span<const FramePhotons> frames, HistAxis axis,
                                             const HistGeometry& geometry, const CrosstalkFilter& filter) {
  JointHistogram h(axis, geometry);
  for (std::size_t i = 0; i + 1 < frames.size(); ++i) accumulate_cross_frame(h, frames[i], frames[i + 1], filter);
  finish_accidentals(h, frames);
  return h;
}

JointHistogram accumulate_singles(std::span<const FramePhotons> frames, const HistGeometry& geometry) {
  return parallel_accumulate(frames.size(), HistAxis::Singles, geometry, [&](JointHistogram& h, std::size_t i) {
    for (const auto& p : frames[i].photons) h.add(p.k.kx, p.k.ky);
  });
}

JointHistogram subtract(const JointHistogram& same, const JointHistogram& accidental) {
  if (!(same.geometry == accidental.geometry)) throw AnalysisError("subtract: histogram geometries differ");
  if (same.axis != accidental.axis) throw AnalysisError("subtract: histogram axes differ");
  JointHistogram out = same;
  for (std::size_t i = 0; i < out.counts.size(); ++i) out.counts[i] -= accidental.scale * accidental.counts[i];
  out.overflow -= accidental.scale * accidental.overflow;
  out.scale = 1.0;
  return out;
}

SumProjection sum_projection(std::span<const FramePhotons> frames, const HistGeometry& geometry,
                             const CrosstalkFilter& filter) {
  SumProjection p;
  p.same = accumulate_joint(frames, HistAxis::SumPlane, geometry, filter);
  p.accidental = accumulate_accidentals(frames, HistAxis::SumPlane, geometry, filter);
  p.subtracted = subtract(p.same, p.accidental);
  return p;
}

double binned_gaussian_value(const PeakParams& p, double x_lo, double x_hi, double y_lo, double y_hi) {
  const double kx = std::sqrt(2.0 * std::numbers::pi) / (x_hi - x_lo);
  const double ky = std::sqrt(2.0 * std::numbers::pi) / (y_hi - y_lo);
  const double gx = kx * p[3] * (normal_cdf((x_hi - p[1]) / p[3]) - normal_cdf((x_lo - p[1]) / p[3]));
  const double gy = ky * p[4] * (normal_cdf((y_hi - p[2]) / p[4]) - normal_cdf((y_lo - p[2]) / p[4]));
  return p[0] * gx * gy + p[5];
}

PeakParams binned_gaussian_gradient(const PeakParams& p, double x_lo, double x_hi, double y_lo, double y_hi) {
  struct Axis {
    double g, dmean, dsigma;
  };
  auto axis = [](double lo, double hi, double mean, double sigma) {
    const double k = std::sqrt(2.0 * std::numbers::pi) / (hi - lo);
    const double a = (hi - mean) / sigma;
    const double b = (lo - mean) / sigma;
    const double d = normal_cdf(a) - normal_cdf(b);
    return Axis{k * sigma * d, k * (normal_pdf(b) - normal_pdf(a)), k * (d - a * normal_pdf(a) + b * normal_pdf(b))};
  };
  const Axis x = axis(x_lo, x_hi, p[1], p[3]);
  const Axis y = axis(y_lo, y_hi, p[2], p[4]);
  PeakParams g;
  g << x.g * y.g, p[0] * x.dmean * y.g, p[0] * x.g * y.dmean, p[0] * x.dsigma * y.g, p[0] * x.g * y.dsigma, 1.0;
  return g;
}

namespace {

struct PeakModel {
  const JointHistogram& h;
  int i_lo, i_hi, j_lo, j_hi;

  bool evaluate(const PeakParams& p, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 6>* jac) const {
    if (!(p[3] > 0.0 && p[4] > 0.0)) return false;
    const auto& g = h.geometry;
    const int n = (i_hi - i_lo + 1) * (j_hi - j_lo + 1);
    r.resize(n);
    if (jac) jac->resize(n, 6);
    int row = 0;
    const double w = g.bin_width();
    for (int i = i_lo; i <= i_hi; ++i) {
      const double x_lo = -g.range + i * w;
      for (int j = j_lo; j <= j_hi; ++j, ++row) {
        const double y_lo = -g.range + j * w;
        r[row] = binned_gaussian_value(p, x_lo, x_lo + w, y_lo, y_lo + w) - h.at(i, j);
        if (jac) jac->row(row) = binned_gaussian_gradient(p, x_lo, x_lo + w, y_lo, y_lo + w).transpose();
      }
    }
    return true;
  }
};

using RingParams = Eigen::Matrix<double, 4, 1>;

struct RingModel {
  const std::vector<double>& radius;
  const std::vector<double>& counts;
  const std::vector<double>& bins_in_shell;

  bool evaluate(const RingParams& p, Eigen::VectorXd& r, Eigen::Matrix<double, Eigen::Dynamic, 4>* jac) const {
    if (!(p[2] > 0.0)) return false;
    const auto n = static_cast<Eigen::Index>(radius.size());
    r.resize(n);
    if (jac) jac->resize(n, 4);
    for (Eigen::Index s = 0; s < n; ++s) {
      const double d = radius[s] - p[1];
      const double e = std::exp(-d * d / (2.0 * p[2] * p[2]));
      r[s] = p[0] * e + p[3] * bins_in_shell[s] - counts[s];
      if (jac) {
        (*jac)(s, 0) = e;
        (*jac)(s, 1) = p[0] * e * d / (p[2] * p[2]);
        (*jac)(s, 2) = p[0] * e * d * d / (p[2] * p[2] * p[2]);
        (*jac)(s, 3) = bins_in_shell[s];
      }
    }
    return true;
  }
};

}  // namespace

CorrelationFit fit_peak(const JointHistogram& h) {
  const auto& g = h.geometry;
  const int n = g.bins;
  const auto max_it = std::max_element(h.counts.begin(), h.counts.end());
  const double peak = *max_it;
  std::vector<double> magnitudes(h.counts.size());
  std::transform(h.counts.begin(), h.counts.end(), magnitudes.begin(), [](double c) { return std::abs(c); });
  auto mid = magnitudes.begin() + static_cast<std::ptrdiff_t>(magnitudes.size() / 2);
  std::nth_element(magnitudes.begin(), mid, magnitudes.end());
  // A sparse histogram has median zero, so the maximum must also clear the
  // median by five Poisson standard deviations of its own count.
  if (!(peak > 0.0) || !(peak > 5.0 * *mid) || !(peak - *mid > 5.0 * std::sqrt(peak)))
    throw AnalysisError("fit_peak: no significant correlation peak");

  const auto flat = static_cast<int>(max_it - h.counts.begin());
  const int pi = flat / n;
  const int pj = flat % n;
  const double w = g.bin_width();

  // Second moments of the positive mass near the maximum seed the widths.
  double m = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
  const int seed_half = 8;
  for (int i = std::max(0, pi - seed_half); i <= std::min(n - 1, pi + seed_half); ++i)
    for (int j = std::max(0, pj - seed_half); j <= std::min(n - 1, pj + seed_half); ++j) {
      const double c = std::max(h.at(i, j), 0.0);
      m += c;
      sx += c * g.center(i);
      sy += c * g.center(j);
      sxx += c * g.center(i) * g.center(i);
      syy += c * g.center(j) * g.center(j);
    }
  auto clamp_sigma = [&](double v) { return std::clamp(v, 0.5 * w, 0.5 * g.range); };
  double sigma_x = clamp_sigma(std::sqrt(std::max(sxx / m - (sx / m) * (sx / m), 0.0)));
  double sigma_y = clamp_sigma(std::sqrt(std::max(syy / m - (sy / m) * (sy / m), 0.0)));

  PeakParams p;
  p << peak, g.center(pi), g.center(pj), sigma_x, sigma_y, 0.0;
  CorrelationFit out;
  for (int pass = 0; pass < 2; ++pass) {
    const int half = std::clamp(static_cast<int>(std::ceil(4.0 * std::max(p[3], p[4]) / w)), 3, n / 2);
    const PeakModel model{h, std::max(0, pi - half), std::min(n - 1, pi + half), std::max(0, pj - half),
                          std::min(n - 1, pj + half)};
    LmOptions options;
    options.max_iterations = 200;
    const auto fit = levenberg_marquardt<6>(model, p, options);
    if (fit.status == LmStatus::Diverged || fit.status == LmStatus::InvalidStart || !fit.params.allFinite())
      throw AnalysisError("fit_peak: Gaussian fit failed");
    p = fit.params;
    const int bins_fitted = (model.i_hi - model.i_lo + 1) * (model.j_hi - model.j_lo + 1);
    out.fit_residual = std::sqrt(2.0 * fit.cost / bins_fitted);
    out.window_half_bins = half;
  }
  if (!(p[0] > 0.0)) throw AnalysisError("fit_peak: fitted amplitude is not positive");
  out.center = {p[1], p[2]};
  out.sigma_x = p[3];
  out.sigma_y = p[4];
  out.peak_amplitude = p[0];
  out.offset = p[5];
  return out;
}

RingFit fit_ring(const JointHistogram& far_field) {
  const auto& g = far_field.geometry;
  const int n = g.bins;
  double m = 0.0, mx = 0.0, my = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double c = std::max(far_field.at(i, j), 0.0);
      m += c;
      mx += c * g.center(i);
      my += c * g.center(j);
    }
  if (!(m > 0.0)) throw AnalysisError("fit_ring: empty far-field histogram");
  const double cx = mx / m;
  const double cy = my / m;

  const double dr = g.bin_width();
  const double r_usable = g.range - std::max(std::abs(cx), std::abs(cy)) - dr;
  const int shells = static_cast<int>(r_usable / dr);
  if (shells < 6) throw AnalysisError("fit_ring: centroid too close to the histogram edge");

  std::vector<double> counts(shells, 0.0), bins(shells, 0.0), rsum(shells, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double r = std::hypot(g.center(i) - cx, g.center(j) - cy);
      const int s = static_cast<int>(r / dr);
      if (s >= shells) continue;
      counts[s] += far_field.at(i, j);
      bins[s] += 1.0;
      rsum[s] += r;
    }
  std::vector<double> radius, shell_counts, shell_bins, per_area;
  for (int s = 0; s < shells; ++s) {
    if (bins[s] == 0.0) continue;
    radius.push_back(rsum[s] / bins[s]);
    shell_counts.push_back(counts[s]);
    shell_bins.push_back(bins[s]);
    per_area.push_back(counts[s] / bins[s]);
  }

  const auto peak_it = std::max_element(per_area.begin(), per_area.end());
  const auto peak_shell = static_cast<std::size_t>(peak_it - per_area.begin());
  const double inner = (per_area[0] * shell_bins[0] + per_area[1] * shell_bins[1]) / (shell_bins[0] + shell_bins[1]);
  if (peak_shell < 2 || !(*peak_it > 1.5 * std::max(inner, 0.0)))
    throw AnalysisError("fit_ring: radial profile has no off-centre maximum");

  const double background = std::max(*std::min_element(per_area.begin(), per_area.end()), 0.0);
  RingParams p;
  p << shell_counts[peak_shell] - background * shell_bins[peak_shell], radius[peak_shell], 2.0 * dr, background;
  const RingModel model{radius, shell_counts, shell_bins};
  LmOptions options;
  options.max_iterations = 200;
  const auto fit = levenberg_marquardt<4>(model, p, options);
  if (fit.status == LmStatus::Diverged || fit.status == LmStatus::InvalidStart || !fit.params.allFinite())
    throw AnalysisError("fit_ring: radial fit failed");

  // Shell sampling and bin-centre quantisation each add dr^2/12 of variance.
  const double width2 = fit.params[2] * fit.params[2] - dr * dr / 6.0;
  RingFit ring;
  ring.k_radius = fit.params[1];
  ring.radial_width = std::sqrt(std::max(width2, 0.25 * fit.params[2] * fit.params[2]));
  ring.center = {cx, cy};
  ring.amplitude = fit.params[0];
  ring.background = fit.params[3];
  if (!(ring.k_radius > ring.radial_width && ring.radial_width > 0.0))
    throw AnalysisError("fit_ring: fitted ring is degenerate");
  return ring;
}

ModeCount mode_count(const RingFit& ring, const CorrelationFit& fit) {
  ModeCount out;
  out.ring_area = 2.0 * std::numbers::pi * ring.k_radius * std::sqrt(2.0 * std::numbers::pi) * ring.radial_width;
  out.correlation_area = fit.sigma_x * fit.sigma_y;
  out.value = out.ring_area / out.correlation_area;
  return out;
}

double analytic_mode_count(const SourceParams& source) {
  const double area = 2.0 * std::numbers::pi * source.ring_radius * std::sqrt(2.0 * std::numbers::pi) *
                      single_photon_radial_width(source);
  return area / (source.sum_sigma_x * source.sum_sigma_y);
}

GatingStats gating_stats(std::span<const std::uint64_t> photons_per_frame, std::string label, int max_count) {
  GatingStats s;
  s.label = std::move(label);
  s.histogram.assign(static_cast<std::size_t>(max_count) + 1, 0);
  for (auto c : photons_per_frame) ++s.histogram[std::min<std::uint64_t>(c, static_cast<std::uint64_t>(max_count))];
  s.frames = photons_per_frame.size();
  if (s.frames > 0) {
    const double total = static_cast<double>(s.frames);
    s.success_rate = static_cast<double>(s.histogram[1] + (max_count > 2 ? s.histogram[2] : 0)) / total;
    s.empty_fraction = static_cast<double>(s.histogram[0]) / total;
  }
  return s;
}

void write_histogram_csv(std::ostream& os, const JointHistogram& h) {
  os << "i,j,u_center,v_center,count\n";
  const auto& g = h.geometry;
  for (int i = 0; i < g.bins; ++i)
    for (int j = 0; j < g.bins; ++j) os << i << ',' << j << ',' << g.center(i) << ',' << g.center(j) << ',' << h.at(i, j) << '\n';
}

}  // namespace hic
