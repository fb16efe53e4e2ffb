#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "hic/config.hpp"
#include "hic/errors.hpp"
#include "hic/pipeline.hpp"
#include "hic/timetag.hpp"
#include "test_util.hpp"

using namespace hic;

namespace {

FrameRecord record(std::uint64_t id, std::vector<double> spot_amps, std::vector<double> pulse_amps) {
  FrameRecord r;
  r.frame_id = id;
  double x = 100.0;
  for (double a : spot_amps) r.spots.push_back({x += 200.0, 500.0, a, 1.5});
  double t = 10.0;
  for (double a : pulse_amps) r.pulses.push_back({t += 50.0, a});
  return r;
}

// Gamma brightness seen through two detectors with independent log-normal
// noise; sigma = 0 gives exact linearity.
std::vector<BrightnessPair> synthetic_pairs(std::size_t n, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  std::gamma_distribution<double> brightness(1.3, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<BrightnessPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = brightness(rng);
    out.push_back({0.05 * b * std::exp(sigma * z(rng)), 3000.0 * b * std::exp(sigma * z(rng)), 0.0, i});
  }
  return out;
}

bool is_bijection(const TagAssignment& a, std::size_t n) {
  if (a.spot_to_pulse.size() != n) return false;
  std::set<int> seen(a.spot_to_pulse.begin(), a.spot_to_pulse.end());
  return seen.size() == n && *seen.begin() == 0 && *seen.rbegin() == static_cast<int>(n) - 1;
}

const AccuracyCurve& curve_for(const SweepResult& r, int n) {
  auto it = std::find_if(r.curves.begin(), r.curves.end(), [&](const AccuracyCurve& c) { return c.n == n; });
  REQUIRE(it != r.curves.end());
  return *it;
}

const AccuracyPoint* point_at(const AccuracyCurve& c, double threshold) {
  for (const auto& p : c.points)
    if (p.threshold == threshold) return &p;
  return nullptr;
}

double binomial_se(double p, double n) { return std::sqrt(std::max(p * (1.0 - p), 1e-12) / n); }

}  // namespace

TEST_CASE("collect_single_photon_pairs") {
  std::vector<FrameRecord> frames{
      record(0, {100.0, 200.0}, {0.02}),        // two spots
      record(1, {150.0}, {0.03}),               // the one good frame
      record(2, {150.0}, {}),                   // no pulse
      record(3, {150.0}, {0.03, 0.04}),         // two pulses
      record(4, {120.0}, {0.005, 0.04}),        // one pulse below threshold
      record(5, {}, {0.03}),                    // no spot
  };
  CollectStats stats;
  auto pairs = collect_single_photon_pairs(frames, 0.01, &stats);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[0].frame_id == 1);
  CHECK(pairs[0].b_cmos == 150.0);
  CHECK(pairs[0].b_pmt == 0.03);
  CHECK(pairs[0].true_time_ns == 60.0);
  CHECK(pairs[1].frame_id == 4);
  CHECK(pairs[1].b_pmt == 0.04);
  CHECK(stats.frames == 6);
  CHECK(stats.collected == 2);
  CHECK(stats.wrong_spot_count == 2);
  CHECK(stats.wrong_pulse_count == 2);
}

TEST_CASE("synthesize_tuples: distinct members and uniform rank order") {
  auto pairs = synthetic_pairs(1000, 0.2, 1);
  Rng rng(2);
  auto one = synthesize_tuples(pairs, 2, 1, rng);
  REQUIRE(one.size() == 1);
  CHECK(one[0].members.size() == 2);
  CHECK(pairs[one[0].members[0]].frame_id != pairs[one[0].members[1]].frame_id);

  // Small pool exercises the partial shuffle path, large pool the rejection path.
  for (std::size_t pool : {7u, 1000u}) {
    auto sub = std::span<const BrightnessPair>(pairs).first(pool);
    for (int n : {2, 3, 6}) {
      auto tuples = synthesize_tuples(sub, n, 5000, rng);
      for (const auto& t : tuples) {
        REQUIRE(t.members.size() == static_cast<std::size_t>(n));
        CHECK(std::set<std::uint32_t>(t.members.begin(), t.members.end()).size() == t.members.size());
        CHECK(std::all_of(t.members.begin(), t.members.end(), [&](std::uint32_t m) { return m < pool; }));
        std::vector<std::uint32_t> r = t.arrival_rank;
        std::sort(r.begin(), r.end());
        for (int i = 0; i < n; ++i) CHECK(r[static_cast<std::size_t>(i)] == static_cast<std::uint32_t>(i));
      }
    }
  }

  auto tuples = synthesize_tuples(pairs, 3, 100000, rng);
  std::map<std::vector<std::uint32_t>, double> orders;
  for (const auto& t : tuples) orders[t.arrival_rank] += 1.0;
  REQUIRE(orders.size() == 6);
  std::vector<double> counts;
  for (const auto& [k, v] : orders) counts.push_back(v);
  CHECK(test::chi_square(counts, 100000.0 / 6.0) < test::chi2_crit_1pct(5));
}

TEST_CASE("synthesize_tuples: errors") {
  auto pairs = synthetic_pairs(3, 0.2, 1);
  Rng rng(1);
  CHECK_THROWS_AS(synthesize_tuples(pairs, 1, 10, rng), ConfigError);
  CHECK_THROWS_AS(synthesize_tuples(pairs, 4, 10, rng), AnalysisError);
  CHECK(synthesize_tuples(pairs, 3, 10, rng).size() == 10);
}

TEST_CASE("match_by_brightness: rank matching and rejection") {
  const std::vector<double> pulses{0.03, 0.01, 0.02};
  const std::vector<double> spots{200.0, 100.0, 300.0};
  auto a = match_by_brightness(pulses, spots, 0.0);
  REQUIRE(a.status == TagStatus::Accepted);
  CHECK(a.reason == RejectReason::None);
  CHECK(a.spot_to_pulse == std::vector<int>{2, 1, 0});
  CHECK(is_bijection(a, 3));

  const std::vector<double> twin{0.02, 0.02};
  const std::vector<double> two_spots{100.0, 300.0};
  auto tc = match_by_brightness(twin, two_spots, 0.01);
  CHECK(tc.status == TagStatus::Rejected);
  CHECK(tc.reason == RejectReason::TooClose);
  CHECK(tc.spot_to_pulse.empty());
  // Spot list alone can trigger rejection too.
  const std::vector<double> apart{0.01, 0.03};
  const std::vector<double> twin_spots{200.0, 201.0};
  CHECK(match_by_brightness(apart, twin_spots, 0.01).reason == RejectReason::TooClose);
  // Threshold zero never rejects, ties included.
  CHECK(match_by_brightness(twin, two_spots, 0.0).status == TagStatus::Accepted);

  auto cm = match_by_brightness(pulses, two_spots, 0.0);
  CHECK(cm.status == TagStatus::Rejected);
  CHECK(cm.reason == RejectReason::CountMismatch);

  CHECK(relative_gap(1.0, 3.0) == doctest::Approx(1.0));
  CHECK(relative_gap(2.0, 2.0) == 0.0);
  // Strictly-less rule at the boundary.
  const std::vector<double> edge{1.0, 3.0};
  CHECK(match_by_brightness(edge, edge, 1.0).status == TagStatus::Accepted);
  CHECK(match_by_brightness(edge, edge, 1.0 + 1e-12).reason == RejectReason::TooClose);
}

TEST_CASE("exact linearity gives perfect accuracy for every n and threshold") {
  auto pairs = synthetic_pairs(5000, 0.0, 3);
  SweepOptions o;
  o.n_values = {2, 3, 4, 5, 6};
  o.thresholds = {0.0, 0.05, 0.2};
  o.m_tuples = 20000;
  o.seed = 4;
  auto r = accuracy_sweep(pairs, o);
  REQUIRE(r.curves.size() == 5);
  for (const auto& c : r.curves)
    for (const auto& p : c.points) {
      CAPTURE(c.n);
      CAPTURE(p.threshold);
      CHECK(p.accuracy == 1.0);
      CHECK(p.photon_accuracy == 1.0);
    }

  Rng rng(5);
  std::vector<double> pulses, spots;
  for (int n = 2; n <= 6; ++n)
    for (const auto& t : synthesize_tuples(pairs, n, 2000, rng)) {
      tuple_amplitudes(t, pairs, pulses, spots);
      auto a = match_by_brightness(pulses, spots, 0.0);
      REQUIRE(a.status == TagStatus::Accepted);
      CHECK(is_bijection(a, static_cast<std::size_t>(n)));
      CHECK(assignment_correct(t, a));
    }
}

TEST_CASE("accuracy sweep: monotone rejection, accuracy trend and n ordering") {
  auto pairs = synthetic_pairs(20000, 0.2, 7);
  SweepOptions o;
  o.m_tuples = 100000;
  o.seed = 8;
  auto r = accuracy_sweep(pairs, o);
  REQUIRE(r.curves.size() == 5);
  const auto grid = default_threshold_grid();
  CHECK(grid.size() == 51);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == doctest::Approx(0.5));

  for (const auto& c : r.curves) {
    CAPTURE(c.n);
    REQUIRE(!c.points.empty());
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      const auto& a = c.points[i - 1];
      const auto& b = c.points[i];
      CHECK(a.rejected_fraction <= b.rejected_fraction);
      // Sorted by rejection, which is non-decreasing in threshold.
      CHECK(a.threshold <= b.threshold);
      CHECK(a.rejected <= b.rejected);
      const double accepted_a = double(a.total - a.rejected), accepted_b = double(b.total - b.rejected);
      const double se = std::hypot(binomial_se(a.accuracy, accepted_a), binomial_se(b.accuracy, accepted_b));
      CHECK(b.accuracy >= a.accuracy - 3.0 * se);
    }
    for (const auto& p : c.points) {
      CHECK(p.rejected_fraction >= 0.0);
      CHECK(p.rejected_fraction <= 1.0);
      CHECK(p.accuracy >= 0.0);
      CHECK(p.accuracy <= 1.0);
      CHECK(p.photon_accuracy >= p.accuracy);
      CHECK(p.total == o.m_tuples);
    }
    if (c.n == 2) {
      const auto* zero = point_at(c, 0.0);
      REQUIRE(zero);
      CHECK(zero->rejected_fraction == 0.0);
    }
  }

  for (int n = 3; n <= 6; ++n) {
    const auto& hi = curve_for(r, n);
    const auto& lo = curve_for(r, n - 1);
    for (const auto& p : hi.points) {
      const auto* q = point_at(lo, p.threshold);
      if (!q) continue;
      const double se = std::hypot(binomial_se(p.accuracy, double(p.total - p.rejected)),
                                   binomial_se(q->accuracy, double(q->total - q->rejected)));
      CAPTURE(n);
      CAPTURE(p.threshold);
      CHECK(p.accuracy <= q->accuracy + 3.0 * se);
    }
  }
}

TEST_CASE("accuracy sweep: all-rejected points are omitted with a warning") {
  auto pairs = synthetic_pairs(2000, 0.2, 9);
  SweepOptions o;
  o.n_values = {6};
  o.thresholds = {0.0, 5.0};
  o.m_tuples = 1000;
  auto r = accuracy_sweep(pairs, o);
  REQUIRE(r.curves.size() == 1);
  CHECK(r.curves[0].points.size() == 1);
  CHECK(r.warnings.size() == 1);

  std::ostringstream csv;
  write_accuracy_csv(csv, r.curves);
  const auto text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);  // header and one row
}

TEST_CASE("accuracy sweep: insufficient pairs and parallel equals serial") {
  auto few = synthetic_pairs(4, 0.2, 10);
  SweepOptions o;
  o.m_tuples = 100;
  CHECK_THROWS_AS(accuracy_sweep(few, o), AnalysisError);

  auto pairs = synthetic_pairs(3000, 0.2, 11);
  o.m_tuples = 20000;
  o.seed = 12;
  auto p = accuracy_sweep(pairs, o);
  auto s = accuracy_sweep_serial(pairs, o);
  REQUIRE(p.curves.size() == s.curves.size());
  for (std::size_t i = 0; i < p.curves.size(); ++i) {
    REQUIRE(p.curves[i].points.size() == s.curves[i].points.size());
    for (std::size_t j = 0; j < p.curves[i].points.size(); ++j) {
      const auto& a = p.curves[i].points[j];
      const auto& b = s.curves[i].points[j];
      CHECK(a.threshold == b.threshold);
      CHECK(a.rejected == b.rejected);
      CHECK(a.correct == b.correct);
      CHECK(a.accuracy == b.accuracy);
      CHECK(a.photon_accuracy == b.photon_accuracy);
    }
  }
}

TEST_CASE("calibrated simulation: brightness correlation") {
  auto cfg = paper_like_config();
  cfg.n_frames = 10000;
  const auto frames = simulate_frames(cfg, 0);
  auto pairs = collect_single_photon_pairs(frames, cfg.readout.discriminator_threshold);
  MESSAGE(pairs.size() << " single-photon pairs, Pearson " << pearson_correlation(pairs));
  REQUIRE(pairs.size() > 1000);
  for (const auto& p : pairs) {
    CHECK(p.b_pmt > 0.0);
    CHECK(p.b_cmos > 0.0);
  }
  CHECK(pearson_correlation(pairs) > 0.9);

  std::ostringstream map;
  write_brightness_map_csv(map, pairs, 16);
  const auto text = map.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 16 * 16);
}
