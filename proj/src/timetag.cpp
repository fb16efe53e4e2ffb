#include "hic/timetag.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include <omp.h>

#include "hic/errors.hpp"

namespace hic {

std::vector<BrightnessPair> collect_single_photon_pairs(std::span<const FrameRecord> frames,
                                                        double discriminator_threshold, CollectStats* stats) {
  std::vector<BrightnessPair> out;
  CollectStats local;
  for (const auto& f : frames) {
    ++local.frames;
    if (f.spots.size() != 1) {
      ++local.wrong_spot_count;
      continue;
    }
    const PmtPulse* only = nullptr;
    int above = 0;
    for (const auto& p : f.pulses) {
      if (p.amplitude >= discriminator_threshold) {
        ++above;
        only = &p;
      }
    }
    if (above != 1) {
      ++local.wrong_pulse_count;
      continue;
    }
    out.push_back({only->amplitude, f.spots.front().amplitude, only->t_ns, f.frame_id});
  }
  local.collected = out.size();
  if (stats) *stats = local;
  return out;
}

std::vector<PhotonTuple> synthesize_tuples(std::span<const BrightnessPair> pairs, int n, std::size_t m_tuples, Rng& rng) {
  if (n < 2) throw ConfigError("timetag.n_values", "photon multiplicity must be >= 2");
  if (pairs.size() < static_cast<std::size_t>(n))
    throw AnalysisError("synthesize_tuples: " + std::to_string(pairs.size()) + " single-photon pairs, need at least " +
                        std::to_string(n));
  const auto pool = static_cast<std::uint32_t>(pairs.size());
  std::uniform_int_distribution<std::uint32_t> pick(0, pool - 1);
  std::vector<PhotonTuple> out(m_tuples);
  std::vector<std::uint32_t> scratch;
  for (auto& t : out) {
    t.members.clear();
    if (pool < 4u * static_cast<std::uint32_t>(n)) {
      scratch.resize(pool);
      std::iota(scratch.begin(), scratch.end(), 0u);
      for (int i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::uint32_t> rest(static_cast<std::uint32_t>(i), pool - 1);
        std::swap(scratch[static_cast<std::size_t>(i)], scratch[rest(rng)]);
        t.members.push_back(scratch[static_cast<std::size_t>(i)]);
      }
    } else {
      while (t.members.size() < static_cast<std::size_t>(n)) {
        const auto c = pick(rng);
        if (std::find(t.members.begin(), t.members.end(), c) == t.members.end()) t.members.push_back(c);
      }
    }
    t.arrival_rank.resize(static_cast<std::size_t>(n));
    std::iota(t.arrival_rank.begin(), t.arrival_rank.end(), 0u);
    std::shuffle(t.arrival_rank.begin(), t.arrival_rank.end(), rng);
  }
  return out;
}

const char* to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::None: return "none";
    case RejectReason::TooClose: return "too_close";
    case RejectReason::CountMismatch: return "count_mismatch";
  }
  return "none";
}

double relative_gap(double a, double b) {
  const double mean = 0.5 * (a + b);
  if (mean == 0.0) return a == b ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(a - b) / std::abs(mean);
}

namespace {

double min_relative_gap(std::span<const double> v) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (std::size_t j = i + 1; j < v.size(); ++j) best = std::min(best, relative_gap(v[i], v[j]));
  return best;
}

std::vector<int> rank_order(std::span<const double> v) {
  std::vector<int> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return v[static_cast<std::size_t>(a)] < v[static_cast<std::size_t>(b)]; });
  return idx;
}

}  // namespace

TagAssignment match_by_brightness(std::span<const double> pulse_amplitudes, std::span<const double> spot_amplitudes,
                                  double closeness_threshold) {
  TagAssignment out;
  if (pulse_amplitudes.size() != spot_amplitudes.size()) {
    out.reason = RejectReason::CountMismatch;
    return out;
  }
  if (min_relative_gap(pulse_amplitudes) < closeness_threshold ||
      min_relative_gap(spot_amplitudes) < closeness_threshold) {
    out.reason = RejectReason::TooClose;
    return out;
  }
  const auto pulse_rank = rank_order(pulse_amplitudes);
  const auto spot_rank = rank_order(spot_amplitudes);
  out.spot_to_pulse.assign(spot_amplitudes.size(), -1);
  for (std::size_t r = 0; r < spot_rank.size(); ++r)
    out.spot_to_pulse[static_cast<std::size_t>(spot_rank[r])] = pulse_rank[r];
  out.status = TagStatus::Accepted;
  return out;
}

void tuple_amplitudes(const PhotonTuple& tuple, std::span<const BrightnessPair> pairs, std::vector<double>& pulses,
                      std::vector<double>& spots) {
  const std::size_t n = tuple.members.size();
  pulses.assign(n, 0.0);
  spots.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = pairs[tuple.members[i]];
    pulses[tuple.arrival_rank[i]] = p.b_pmt;
    spots[i] = p.b_cmos;
  }
}

bool assignment_correct(const PhotonTuple& tuple, const TagAssignment& assignment) {
  if (assignment.status != TagStatus::Accepted) return false;
  for (std::size_t i = 0; i < tuple.members.size(); ++i)
    if (assignment.spot_to_pulse[i] != static_cast<int>(tuple.arrival_rank[i])) return false;
  return true;
}

std::vector<double> default_threshold_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(0.01 * i);
  return grid;
}

namespace {

// Per-tuple outcome at threshold 0 plus the rejection margin: the tuple is
// rejected at threshold t exactly when margin < t, and rank matching does
// not depend on the threshold otherwise.
struct TupleOutcome {
  double margin = 0.0;
  bool correct = false;
  int correct_photons = 0;
};

TupleOutcome evaluate_tuple(const PhotonTuple& t, std::span<const BrightnessPair> pairs, std::vector<double>& pulses,
                            std::vector<double>& spots) {
  tuple_amplitudes(t, pairs, pulses, spots);
  TupleOutcome o;
  o.margin = std::min(min_relative_gap(pulses), min_relative_gap(spots));
  const auto a = match_by_brightness(pulses, spots, 0.0);
  for (std::size_t i = 0; i < t.members.size(); ++i)
    if (a.spot_to_pulse[i] == static_cast<int>(t.arrival_rank[i])) ++o.correct_photons;
  o.correct = o.correct_photons == static_cast<int>(t.members.size());
  return o;
}

AccuracyCurve build_curve(int n, std::span<const TupleOutcome> outcomes, std::span<const double> thresholds,
                          std::vector<std::string>& warnings) {
  AccuracyCurve curve;
  curve.n = n;
  for (double thr : thresholds) {
    AccuracyPoint pt;
    pt.threshold = thr;
    pt.total = outcomes.size();
    std::uint64_t photons_ok = 0;
    for (const auto& o : outcomes) {
      if (o.margin < thr) {
        ++pt.rejected;
        continue;
      }
      if (o.correct) ++pt.correct;
      photons_ok += static_cast<std::uint64_t>(o.correct_photons);
    }
    const std::uint64_t accepted = pt.total - pt.rejected;
    if (accepted == 0) {
      std::ostringstream os;
      os << "n=" << n << " threshold=" << thr << ": every tuple rejected, point omitted";
      warnings.push_back(os.str());
      continue;
    }
    pt.rejected_fraction = static_cast<double>(pt.rejected) / static_cast<double>(pt.total);
    pt.accuracy = static_cast<double>(pt.correct) / static_cast<double>(accepted);
    pt.photon_accuracy = static_cast<double>(photons_ok) / (static_cast<double>(accepted) * n);
    curve.points.push_back(pt);
  }
  std::stable_sort(curve.points.begin(), curve.points.end(),
                   [](const AccuracyPoint& a, const AccuracyPoint& b) { return a.rejected_fraction < b.rejected_fraction; });
  return curve;
}

template <bool Parallel>
SweepResult sweep(std::span<const BrightnessPair> pairs, const SweepOptions& options) {
  const auto thresholds = options.thresholds.empty() ? default_threshold_grid() : options.thresholds;
  SweepResult result;
  for (int n : options.n_values) {
    Rng rng = derive_stream(options.seed, StreamTag::Tuples, static_cast<std::uint64_t>(n));
    const auto tuples = synthesize_tuples(pairs, n, options.m_tuples, rng);
    std::vector<TupleOutcome> outcomes(tuples.size());
    if constexpr (Parallel) {
#pragma omp parallel
      {
        std::vector<double> pulses, spots;
#pragma omp for schedule(static)
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(tuples.size()); ++i)
          outcomes[static_cast<std::size_t>(i)] = evaluate_tuple(tuples[static_cast<std::size_t>(i)], pairs, pulses, spots);
      }
    } else {
      std::vector<double> pulses, spots;
      for (std::size_t i = 0; i < tuples.size(); ++i) outcomes[i] = evaluate_tuple(tuples[i], pairs, pulses, spots);
    }
    result.curves.push_back(build_curve(n, outcomes, thresholds, result.warnings));
  }
  return result;
}

}  // namespace

SweepResult accuracy_sweep(std::span<const BrightnessPair> pairs, const SweepOptions& options) {
  return sweep<true>(pairs, options);
}

SweepResult accuracy_sweep_serial(std::span<const BrightnessPair> pairs, const SweepOptions& options) {
  return sweep<false>(pairs, options);
}

double pearson_correlation(std::span<const BrightnessPair> pairs) {
  const double n = static_cast<double>(pairs.size());
  if (pairs.size() < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += p.b_pmt;
    my += p.b_cmos;
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (const auto& p : pairs) {
    sxy += (p.b_pmt - mx) * (p.b_cmos - my);
    sxx += (p.b_pmt - mx) * (p.b_pmt - mx);
    syy += (p.b_cmos - my) * (p.b_cmos - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

void write_brightness_map_csv(std::ostream& os, std::span<const BrightnessPair> pairs, int bins) {
  os << "i,j,pmt_lo,pmt_hi,cmos_lo,cmos_hi,count\n";
  if (pairs.empty()) return;
  double pmin = std::numeric_limits<double>::infinity(), pmax = 0.0;
  double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
  for (const auto& p : pairs) {
    if (p.b_pmt > 0.0) {
      pmin = std::min(pmin, p.b_pmt);
      pmax = std::max(pmax, p.b_pmt);
    }
    if (p.b_cmos > 0.0) {
      cmin = std::min(cmin, p.b_cmos);
      cmax = std::max(cmax, p.b_cmos);
    }
  }
  const double lp0 = std::log10(pmin), lp1 = std::log10(pmax) + 1e-9;
  const double lc0 = std::log10(cmin), lc1 = std::log10(cmax) + 1e-9;
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(bins) * bins, 0);
  for (const auto& p : pairs) {
    if (!(p.b_pmt > 0.0 && p.b_cmos > 0.0)) continue;
    const int i = std::clamp(static_cast<int>((std::log10(p.b_pmt) - lp0) / (lp1 - lp0) * bins), 0, bins - 1);
    const int j = std::clamp(static_cast<int>((std::log10(p.b_cmos) - lc0) / (lc1 - lc0) * bins), 0, bins - 1);
    ++counts[static_cast<std::size_t>(i) * bins + j];
  }
  auto edge = [&](double lo, double hi, int k) { return std::pow(10.0, lo + (hi - lo) * k / bins); };
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j)
      os << i << ',' << j << ',' << edge(lp0, lp1, i) << ',' << edge(lp0, lp1, i + 1) << ',' << edge(lc0, lc1, j) << ','
         << edge(lc0, lc1, j + 1) << ',' << counts[static_cast<std::size_t>(i) * bins + j] << '\n';
}

void write_accuracy_csv(std::ostream& os, std::span<const AccuracyCurve> curves) {
  os << "n,threshold,rejected_fraction,accuracy,photon_accuracy,total,rejected,correct\n";
  for (const auto& c : curves)
    for (const auto& p : c.points)
      os << c.n << ',' << p.threshold << ',' << p.rejected_fraction << ',' << p.accuracy << ',' << p.photon_accuracy
         << ',' << p.total << ',' << p.rejected << ',' << p.correct << '\n';
}

}  // namespace hic
