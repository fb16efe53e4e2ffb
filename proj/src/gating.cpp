#include "hic/gating.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <sstream>

#include <omp.h>

#include "hic/errors.hpp"

namespace hic {

GatingConfig GatingConfig::adaptive(int n_target) {
  GatingConfig c;
  c.mode = GatingMode::Adaptive;
  c.n_target = n_target;
  return c;
}

GatingConfig GatingConfig::fixed(double gate_ns) {
  GatingConfig c;
  c.mode = GatingMode::Fixed;
  c.gate_ns = gate_ns;
  return c;
}

std::string GatingConfig::label() const {
  std::ostringstream os;
  if (mode == GatingMode::Adaptive) {
    os << "adaptive-n" << n_target;
  } else {
    os << "fixed-" << gate_ns << "ns";
  }
  return os.str();
}

void GatingConfig::validate(const std::string& path) const {
  auto fail = [&](const char* field, const char* what) { throw ConfigError(path + "." + field, what); };
  if (mode == GatingMode::Adaptive && n_target < 1) fail("n_target", "must be >= 1");
  if (mode == GatingMode::Fixed && !(gate_ns > 0.0)) fail("gate_ns", "must be positive");
  if (!(feedback_latency_ns >= 0.0)) fail("feedback_latency_ns", "must be >= 0");
  if (!(fire_all_duration_ns > 0.0)) fail("fire_all_duration_ns", "must be positive");
  if (!(frame_period_ns >= fire_all_duration_ns)) fail("fire_all_duration_ns", "must not exceed frame_period_ns");
}

const char* to_string(GatePhase phase) {
  switch (phase) {
    case GatePhase::Idle: return "idle";
    case GatePhase::WaitFireAll: return "wait_fire_all";
    case GatePhase::Open: return "open";
    case GatePhase::ClosePending: return "close_pending";
    case GatePhase::Closed: return "closed";
  }
  return "idle";
}

const char* to_string(CloseCause cause) {
  switch (cause) {
    case CloseCause::TargetReached: return "TargetReached";
    case CloseCause::FireAllEnded: return "FireAllEnded";
    case CloseCause::FixedExpiry: return "FixedExpiry";
  }
  return "FireAllEnded";
}

CloseCause close_cause_from_string(const std::string& name) {
  if (name == "TargetReached") return CloseCause::TargetReached;
  if (name == "FireAllEnded") return CloseCause::FireAllEnded;
  if (name == "FixedExpiry") return CloseCause::FixedExpiry;
  throw std::invalid_argument("unknown gate close cause '" + name + "'");
}

namespace {

void close_gate(ControllerStep& step, double t, CloseCause cause, GatePhase next) {
  auto& s = step.state;
  s.trace = GateTrace{s.open_t.value_or(t), t, cause};
  s.close_scheduled_t.reset();
  s.phase = next;
  step.actions.push_back({GateActionKind::CloseGate, t, cause});
}

void fire_timer(ControllerStep& step, const GatingConfig& config) {
  const double t = *step.state.close_scheduled_t;
  close_gate(step, t, config.mode == GatingMode::Adaptive ? CloseCause::TargetReached : CloseCause::FixedExpiry,
             GatePhase::WaitFireAll);
}

}  // namespace

ControllerStep controller_step(const GateControllerState& state, const ControllerEvent& event,
                               const GatingConfig& config) {
  if (event.t_ns < state.last_event_t) throw SimulationError("controller events out of time order");
  ControllerStep step{state, {}};
  auto& s = step.state;
  s.last_event_t = event.t_ns;

  // Overdue close: a timer strictly in the past always fires first; at an
  // exact tie it still outranks a trigger but yields to Fire-All fall.
  if (s.close_scheduled_t && s.gate_open()) {
    const double due = *s.close_scheduled_t;
    const bool overdue = event.t_ns > due;
    const bool tied = event.t_ns == due && event.kind == ControllerEventKind::DiscriminatorTrigger;
    if (overdue || tied) fire_timer(step, config);
  }

  switch (event.kind) {
    case ControllerEventKind::FireAllRise:
      if (s.phase == GatePhase::Idle || s.phase == GatePhase::Closed) {
        s.phase = GatePhase::Open;
        s.trigger_count = 0;
        s.open_t = event.t_ns;
        s.first_trigger_t.reset();
        s.trace.reset();
        s.close_pending_entries = 0;
        s.close_scheduled_t.reset();
        if (config.mode == GatingMode::Fixed) s.close_scheduled_t = event.t_ns + config.gate_ns;
        step.actions.push_back({GateActionKind::OpenGate, event.t_ns, std::nullopt});
      } else {
        ++s.spurious_fire_all;
      }
      break;

    case ControllerEventKind::FireAllFall:
      if (s.gate_open()) {
        close_gate(step, event.t_ns, CloseCause::FireAllEnded, GatePhase::Closed);
      } else if (s.phase == GatePhase::WaitFireAll) {
        s.phase = GatePhase::Closed;
      } else {
        ++s.spurious_fire_all;
      }
      break;

    case ControllerEventKind::DiscriminatorTrigger:
      if (!s.gate_open()) {
        ++s.ignored_triggers;
        break;
      }
      ++s.trigger_count;
      if (!s.first_trigger_t) s.first_trigger_t = event.t_ns;
      if (config.mode == GatingMode::Adaptive && s.phase == GatePhase::Open && s.trigger_count >= config.n_target) {
        s.phase = GatePhase::ClosePending;
        s.close_scheduled_t = event.t_ns + config.feedback_latency_ns;
        ++s.close_pending_entries;
      }
      break;

    case ControllerEventKind::TimerExpiry:
      if (s.gate_open() && s.close_scheduled_t && *s.close_scheduled_t == event.t_ns) {
        fire_timer(step, config);
      } else {
        ++s.stale_timers;
      }
      break;
  }
  return step;
}

void SimulationSetup::validate() const {
  source.validate("source");
  intensifier.validate("intensifier");
  optics.validate(intensifier, source.k_max, "optics");
  readout.validate("readout");
  extraction.validate(readout, "extraction");
  gating.validate("gating");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct QueuedPulse {
  double t_ns;
  double amplitude;
  std::uint64_t seq;
};

struct PulseLater {
  bool operator()(const QueuedPulse& a, const QueuedPulse& b) const {
    if (a.t_ns != b.t_ns) return a.t_ns > b.t_ns;
    return a.seq > b.seq;
  }
};

// Candidates at the same time are processed in this order. Photons precede
// the close timer so the gate interval is closed on both ends.
enum class Next { FireAllFall = 0, Photon = 1, Timer = 2, Pulse = 3, None = 4 };

class FrameRun {
 public:
  FrameRun(const SimulationSetup& setup, std::uint64_t frame_id, Rng& rng)
      : setup_(setup), rng_(rng), photons_(setup.source, rng, 0.0), disc_(setup.readout) {
    record_.frame_id = frame_id;
    next_false_t_ = draw_false_gap(0.0);
  }

  FrameRecord run() {
    apply({ControllerEventKind::FireAllRise, 0.0});
    const double fire_all_end = setup_.gating.fire_all_duration_ns;

    while (state_.gate_open()) {
      const double t_fall = fire_all_end;
      const double t_photon = photons_.peek_time();
      const double t_timer = state_.close_scheduled_t.value_or(kInf);
      const double t_pulse = std::min(pulses_.empty() ? kInf : pulses_.top().t_ns, next_false_t_);

      Next pick = Next::FireAllFall;
      double t = t_fall;
      auto consider = [&](Next kind, double when) {
        if (when < t) {
          t = when;
          pick = kind;
        }
      };
      consider(Next::Photon, t_photon);
      consider(Next::Timer, t_timer);
      consider(Next::Pulse, t_pulse);

      switch (pick) {
        case Next::FireAllFall: apply({ControllerEventKind::FireAllFall, t}); break;
        case Next::Photon: on_photon(photons_.next()); break;
        case Next::Timer: apply({ControllerEventKind::TimerExpiry, t}); break;
        case Next::Pulse: on_pulse(); break;
        case Next::None: break;
      }
    }

    // Phosphor-delayed pulses of flashes that were recorded before closing.
    while (!pulses_.empty()) {
      record_.pulses.push_back({pulses_.top().t_ns, pulses_.top().amplitude});
      pulses_.pop();
    }
    if (state_.phase == GatePhase::WaitFireAll) apply({ControllerEventKind::FireAllFall, fire_all_end});

    record_.gate = state_.trace.value_or(GateTrace{0.0, fire_all_end, CloseCause::FireAllEnded});
    record_.diagnostics.triggers = static_cast<std::uint64_t>(state_.trigger_count);
    record_.diagnostics.ignored_triggers = state_.ignored_triggers;
    make_spots();
    std::stable_sort(record_.pulses.begin(), record_.pulses.end(),
                     [](const PmtPulse& a, const PmtPulse& b) { return a.t_ns < b.t_ns; });
    return std::move(record_);
  }

 private:
  double draw_false_gap(double now) {
    const double rate = setup_.readout.pmt_false_pulse_rate;
    if (rate <= 0.0) return kInf;
    std::exponential_distribution<double> gap(rate * 1e-9);
    return now + gap(rng_);
  }

  void apply(const ControllerEvent& e) { state_ = controller_step(state_, e, setup_.gating).state; }

  void on_photon(const PhotonEvent& photon) {
    ++record_.diagnostics.photons_in_gate;
    auto flash = detect(photon, setup_.intensifier, setup_.optics, rng_);
    if (!flash) return;
    ++record_.diagnostics.converted;
    record_.truth.push_back({photon.t_ns, photon.k, photon.origin, photon.pair_id});
    for (auto& f : apply_crosstalk(*flash, setup_.intensifier, rng_)) {
      if (f.is_crosstalk) ++record_.diagnostics.crosstalk_flashes;
      ++record_.diagnostics.flashes;
      cmos_amplitudes_.push_back(cmos_peak_amplitude(f.brightness, setup_.readout, rng_));
      if (auto a = pmt_amplitude(f.brightness, setup_.readout, rng_)) pulses_.push({f.t_ns, *a, pulse_seq_++});
      flashes_.push_back(f);
    }
  }

  void on_pulse() {
    PmtPulse pulse;
    if (!pulses_.empty() && pulses_.top().t_ns <= next_false_t_) {
      pulse = {pulses_.top().t_ns, pulses_.top().amplitude};
      pulses_.pop();
    } else {
      std::exponential_distribution<double> amp(1.0 / setup_.readout.false_pulse_mean_amplitude);
      pulse = {next_false_t_, amp(rng_)};
      next_false_t_ = draw_false_gap(next_false_t_);
      ++record_.diagnostics.false_pulses;
    }
    record_.pulses.push_back(pulse);
    if (auto trigger = disc_.feed(pulse)) apply({ControllerEventKind::DiscriminatorTrigger, *trigger});
  }

  bool inside_roi(const FlashEvent& f) const {
    const auto& r = setup_.readout;
    return f.channel_x >= r.roi_x0 && f.channel_y >= r.roi_y0 && f.channel_x < r.roi_x0 + r.roi_width &&
           f.channel_y < r.roi_y0 + r.roi_height;
  }

  void make_spots() {
    const auto& ro = setup_.readout;
    std::vector<CmosSpotTruth> truth;
    for (std::size_t i = 0; i < flashes_.size(); ++i) {
      if (inside_roi(flashes_[i])) truth.push_back({flashes_[i].x(), flashes_[i].y(), cmos_amplitudes_[i], i});
    }

    if (setup_.render) {
      const Image image = render_spots(truth, ro, rng_);
      const auto extracted = extract_events(image, setup_.extraction, setup_.optics);
      for (const auto& e : extracted.events)
        record_.spots.push_back({e.spot.x, e.spot.y, e.spot.amplitude, e.spot.sigma});
      record_.diagnostics.fit_failures = extracted.failure_count();
    } else {
      // Spot-level fast path: a flash is found when its noisy peak clears
      // the detection threshold; the centroid scatters at the Gaussian-PSF
      // localisation limit sqrt(2/pi) * read_noise / peak per axis.
      std::normal_distribution<double> unit(0.0, 1.0);
      const double noise = ro.cmos_noise_sigma;
      for (const auto& s : truth) {
        const double measured_peak = s.true_amplitude + noise * unit(rng_);
        const double loc = noise > 0.0 ? std::sqrt(2.0 / std::numbers::pi) * noise / s.true_amplitude : 0.0;
        const double dx = loc * unit(rng_);
        const double dy = loc * unit(rng_);
        if (!(measured_peak > setup_.extraction.detect_threshold)) {
          ++record_.diagnostics.spots_missed;
          continue;
        }
        record_.spots.push_back({s.true_x + dx, s.true_y + dy, measured_peak, ro.psf_sigma_px});
      }
    }
    std::sort(record_.spots.begin(), record_.spots.end(), [](const RecordedSpot& a, const RecordedSpot& b) {
      if (a.x != b.x) return a.x < b.x;
      return a.y < b.y;
    });
  }

  const SimulationSetup& setup_;
  Rng& rng_;
  PhotonStream photons_;
  OnlineDiscriminator disc_;
  GateControllerState state_;
  std::priority_queue<QueuedPulse, std::vector<QueuedPulse>, PulseLater> pulses_;
  std::uint64_t pulse_seq_ = 0;
  double next_false_t_ = kInf;
  std::vector<FlashEvent> flashes_;
  std::vector<double> cmos_amplitudes_;
  FrameRecord record_;
};

}  // namespace

FrameRecord run_frame(const SimulationSetup& setup, std::uint64_t frame_id, Rng& rng) {
  return FrameRun(setup, frame_id, rng).run();
}

void run_batch_serial(const SimulationSetup& setup, std::uint64_t n_frames, std::uint64_t seed,
                      const FrameSink& sink, std::uint64_t first_id) {
  if (n_frames == 0) throw ConfigError("n_frames", "must be >= 1");
  setup.validate();
  for (std::uint64_t i = 0; i < n_frames; ++i) {
    const std::uint64_t id = first_id + i;
    Rng rng = derive_stream(seed, StreamTag::Frame, id);
    sink(run_frame(setup, id, rng));
  }
}

void run_batch(const SimulationSetup& setup, std::uint64_t n_frames, std::uint64_t seed, const FrameSink& sink,
               int workers, std::uint64_t first_id) {
  if (n_frames == 0) throw ConfigError("n_frames", "must be >= 1");
  setup.validate();
  const int threads = workers > 0 ? workers : omp_get_max_threads();
  constexpr std::uint64_t kChunk = 4096;
  std::vector<FrameRecord> chunk;
  for (std::uint64_t begin = 0; begin < n_frames; begin += kChunk) {
    const std::uint64_t count = std::min(kChunk, n_frames - begin);
    chunk.assign(count, FrameRecord{});
#pragma omp parallel for schedule(dynamic, 64) num_threads(threads)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(count); ++i) {
      const std::uint64_t id = first_id + begin + static_cast<std::uint64_t>(i);
      Rng rng = derive_stream(seed, StreamTag::Frame, id);
      chunk[static_cast<std::size_t>(i)] = run_frame(setup, id, rng);
    }
    for (auto& record : chunk) sink(std::move(record));
  }
}

}  // namespace hic
