#include "hic/source.hpp"

#include <limits>
#include <numbers>
#include <string>

#include "hic/errors.hpp"

namespace hic {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double next_arrival(double now, double rate_per_s, Rng& rng) {
  if (rate_per_s <= 0.0) return kInf;
  std::exponential_distribution<double> gap(rate_per_s * 1e-9);
  return now + gap(rng);
}

void require(bool ok, const std::string& path, const char* field, const char* what) {
  if (!ok) throw ConfigError(path + "." + field, what);
}

}  // namespace

const char* to_string(Origin origin) {
  switch (origin) {
    case Origin::Signal: return "signal";
    case Origin::Idler: return "idler";
    case Origin::Noise: return "noise";
  }
  return "noise";
}

Origin origin_from_string(const std::string& name) {
  if (name == "signal") return Origin::Signal;
  if (name == "idler") return Origin::Idler;
  if (name == "noise") return Origin::Noise;
  throw std::invalid_argument("unknown photon origin '" + name + "'");
}

void SourceParams::validate(const std::string& path) const {
  auto finite = [](double v) { return std::isfinite(v); };
  require(finite(ring_radius) && ring_radius > 0.0, path, "ring_radius", "must be positive");
  require(finite(ring_radial_sigma) && ring_radial_sigma > 0.0, path, "ring_radial_sigma", "must be positive");
  require(finite(sum_sigma_x) && sum_sigma_x > 0.0, path, "sum_sigma_x", "must be positive");
  require(finite(sum_sigma_y) && sum_sigma_y > 0.0, path, "sum_sigma_y", "must be positive");
  require(finite(pair_rate) && pair_rate >= 0.0, path, "pair_rate", "must be >= 0");
  require(finite(noise_rate) && noise_rate >= 0.0, path, "noise_rate", "must be >= 0");
  require(finite(pair_time_jitter_ns) && pair_time_jitter_ns >= 0.0, path, "pair_time_jitter_ns", "must be >= 0");
  require(ring_radius > 3.0 * ring_radial_sigma, path, "ring_radius", "must exceed 3 * ring_radial_sigma");
  require(finite(k_max) && k_max > ring_radius, path, "k_max", "must exceed ring_radius");
}

double single_photon_radial_width(const SourceParams& p) {
  return std::sqrt(p.ring_radial_sigma * p.ring_radial_sigma +
                   (p.sum_sigma_x * p.sum_sigma_x + p.sum_sigma_y * p.sum_sigma_y) / 8.0);
}

std::pair<PhotonEvent, PhotonEvent> sample_pair(const SourceParams& params, Rng& rng, double t_ns,
                                                std::uint64_t pair_id) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> unit(0.0, 1.0);

  const double theta = angle(rng);
  const double radius = params.ring_radius + params.ring_radial_sigma * unit(rng);
  const TransverseMomentum center{radius * std::cos(theta), radius * std::sin(theta)};
  const TransverseMomentum half_sum{0.5 * params.sum_sigma_x * unit(rng), 0.5 * params.sum_sigma_y * unit(rng)};

  double t_idler = t_ns;
  if (params.pair_time_jitter_ns > 0.0) {
    std::uniform_real_distribution<double> jitter(0.0, params.pair_time_jitter_ns);
    t_idler += jitter(rng);
  }
  PhotonEvent signal{t_ns, center + half_sum, Origin::Signal, pair_id};
  PhotonEvent idler{t_idler, -center + half_sum, Origin::Idler, pair_id};
  return {signal, idler};
}

PhotonEvent sample_noise(const SourceParams& params, Rng& rng, double t_ns) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = params.k_max * std::sqrt(u(rng));
  const double theta = 2.0 * std::numbers::pi * u(rng);
  return PhotonEvent{t_ns, {r * std::cos(theta), r * std::sin(theta)}, Origin::Noise, std::nullopt};
}

bool PhotonStream::Later::operator()(const PhotonEvent& a, const PhotonEvent& b) const {
  if (a.t_ns != b.t_ns) return a.t_ns > b.t_ns;
  const auto ida = a.pair_id.value_or(std::numeric_limits<std::uint64_t>::max());
  const auto idb = b.pair_id.value_or(std::numeric_limits<std::uint64_t>::max());
  if (ida != idb) return ida > idb;
  return static_cast<int>(a.origin) > static_cast<int>(b.origin);
}

PhotonStream::PhotonStream(const SourceParams& params, Rng& rng, double t_start_ns)
    : params_(params),
      rng_(rng),
      next_pair_t_(next_arrival(t_start_ns, params.pair_rate, rng)),
      next_noise_t_(next_arrival(t_start_ns, params.noise_rate, rng)) {}

void PhotonStream::refill() {
  // A buffered photon is safe to release once no process can still produce
  // something earlier. Pair members are never earlier than their creation time.
  while (pending_.empty() || pending_.top().t_ns > std::min(next_pair_t_, next_noise_t_)) {
    if (next_pair_t_ == kInf && next_noise_t_ == kInf) return;
    if (next_pair_t_ <= next_noise_t_) {
      auto [a, b] = sample_pair(params_, rng_, next_pair_t_, next_pair_id_++);
      pending_.push(a);
      pending_.push(b);
      next_pair_t_ = next_arrival(next_pair_t_, params_.pair_rate, rng_);
    } else {
      pending_.push(sample_noise(params_, rng_, next_noise_t_));
      next_noise_t_ = next_arrival(next_noise_t_, params_.noise_rate, rng_);
    }
  }
}

double PhotonStream::peek_time() {
  refill();
  return pending_.empty() ? kInf : pending_.top().t_ns;
}

PhotonEvent PhotonStream::next() {
  refill();
  if (pending_.empty()) throw SimulationError("PhotonStream::next on an exhausted stream");
  PhotonEvent e = pending_.top();
  pending_.pop();
  return e;
}

std::vector<PhotonEvent> sample_event_stream(const SourceParams& params, double window_ns, Rng& rng) {
  if (!(window_ns > 0.0)) throw ConfigError("window_ns", "must be positive");
  std::vector<PhotonEvent> out;
  PhotonStream stream(params, rng);
  while (stream.peek_time() < window_ns) out.push_back(stream.next());
  return out;
}

}  // namespace hic
