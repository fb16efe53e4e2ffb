#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

#include "hic/rng.hpp"

namespace hic {

/// Transverse momentum in inverse millimetres.
struct TransverseMomentum {
  double kx = 0.0;
  double ky = 0.0;

  double norm() const { return std::hypot(kx, ky); }
  friend TransverseMomentum operator+(TransverseMomentum a, TransverseMomentum b) {
    return {a.kx + b.kx, a.ky + b.ky};
  }
  friend TransverseMomentum operator-(TransverseMomentum a, TransverseMomentum b) {
    return {a.kx - b.kx, a.ky - b.ky};
  }
  friend TransverseMomentum operator*(double s, TransverseMomentum a) { return {s * a.kx, s * a.ky}; }
  friend TransverseMomentum operator-(TransverseMomentum a) { return {-a.kx, -a.ky}; }
  friend bool operator==(const TransverseMomentum&, const TransverseMomentum&) = default;
};

enum class Origin { Signal, Idler, Noise };

const char* to_string(Origin origin);
Origin origin_from_string(const std::string& name);

struct PhotonEvent {
  double t_ns = 0.0;  // since frame (gate) epoch
  TransverseMomentum k;
  Origin origin = Origin::Noise;
  std::optional<std::uint64_t> pair_id;
};

/// Effective far-field source description. Momenta in mm^-1, rates in 1/s.
struct SourceParams {
  double ring_radius = 330.0;
  double ring_radial_sigma = 16.98;
  double sum_sigma_x = 24.43;
  double sum_sigma_y = 22.67;
  double pair_rate = 1.0e6;
  double noise_rate = 0.0;
  double pair_time_jitter_ns = 0.0;
  // Detector acceptance: noise fills this disk and momenta beyond it never reach the grid.
  double k_max = 480.0;

  /// Throws ConfigError naming the offending field under `path`.
  void validate(const std::string& path = "source") const;
  friend bool operator==(const SourceParams&, const SourceParams&) = default;
};

/// Width of the single-photon radial profile: ring spread plus the radial
/// share of half the momentum-sum spread, averaged over azimuth.
double single_photon_radial_width(const SourceParams& params);

/// Draws one signal/idler pair created at `t_ns`.
std::pair<PhotonEvent, PhotonEvent> sample_pair(const SourceParams& params, Rng& rng, double t_ns,
                                                std::uint64_t pair_id);

/// Noise photon uniform over the acceptance disk.
PhotonEvent sample_noise(const SourceParams& params, Rng& rng, double t_ns);

/// Lazily merged Poisson streams of pair creations and noise photons.
///
/// Photons come out in non-decreasing time. Pair ids count up from zero in
/// creation order. Generating on demand keeps a frame cost proportional to
/// the time the gate is actually open rather than the whole frame period.
class PhotonStream {
 public:
  PhotonStream(const SourceParams& params, Rng& rng, double t_start_ns = 0.0);

  /// Time of the next photon, +inf when both rates are zero.
  double peek_time();
  PhotonEvent next();

 private:
  struct Later {
    bool operator()(const PhotonEvent& a, const PhotonEvent& b) const;
  };
  void refill();

  const SourceParams& params_;
  Rng& rng_;
  double next_pair_t_;
  double next_noise_t_;
  std::uint64_t next_pair_id_ = 0;
  std::priority_queue<PhotonEvent, std::vector<PhotonEvent>, Later> pending_;
};

/// All photons in [0, window_ns), sorted by time.
std::vector<PhotonEvent> sample_event_stream(const SourceParams& params, double window_ns, Rng& rng);

}  // namespace hic
