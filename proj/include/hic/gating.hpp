#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "hic/extraction.hpp"
#include "hic/intensifier.hpp"
#include "hic/readout.hpp"
#include "hic/rng.hpp"
#include "hic/source.hpp"

namespace hic {

enum class GatingMode { Adaptive, Fixed };

struct GatingConfig {
  GatingMode mode = GatingMode::Adaptive;
  int n_target = 1;       // adaptive only
  double gate_ns = 150.0;  // fixed only
  double feedback_latency_ns = 150.0;
  double fire_all_duration_ns = 9.0e6;
  double frame_period_ns = 1.0e7;

  static GatingConfig adaptive(int n_target);
  static GatingConfig fixed(double gate_ns);
  std::string label() const;
  void validate(const std::string& path = "gating") const;
  friend bool operator==(const GatingConfig&, const GatingConfig&) = default;
};

enum class GatePhase { Idle, WaitFireAll, Open, ClosePending, Closed };
enum class CloseCause { TargetReached, FireAllEnded, FixedExpiry };

const char* to_string(GatePhase phase);
const char* to_string(CloseCause cause);
CloseCause close_cause_from_string(const std::string& name);

struct GateTrace {
  double open_t = 0.0;
  double close_t = 0.0;
  CloseCause cause = CloseCause::FireAllEnded;
  friend bool operator==(const GateTrace&, const GateTrace&) = default;
};

/// Adaptive-gating controller registers.
///
/// Phases: Idle waits for Fire-All; Open counts triggers; ClosePending has
/// reached the target and waits out the feedback latency (still counting,
/// the gate is physically open); WaitFireAll has closed the gate early and
/// waits for Fire-All to drop; Closed has finished the frame.
struct GateControllerState {
  GatePhase phase = GatePhase::Idle;
  int trigger_count = 0;
  std::optional<double> open_t;
  std::optional<double> first_trigger_t;
  std::optional<double> close_scheduled_t;
  std::optional<GateTrace> trace;  // set when the gate closes
  double last_event_t = -std::numeric_limits<double>::infinity();
  int close_pending_entries = 0;  // per frame
  std::uint64_t ignored_triggers = 0;
  std::uint64_t stale_timers = 0;
  std::uint64_t spurious_fire_all = 0;

  bool gate_open() const { return phase == GatePhase::Open || phase == GatePhase::ClosePending; }
};

enum class ControllerEventKind { FireAllRise, FireAllFall, DiscriminatorTrigger, TimerExpiry };

struct ControllerEvent {
  ControllerEventKind kind;
  double t_ns;
};

enum class GateActionKind { OpenGate, CloseGate };

struct GateAction {
  GateActionKind kind;
  double t_ns;
  std::optional<CloseCause> cause;
};

struct ControllerStep {
  GateControllerState state;
  std::vector<GateAction> actions;
};

/// Deterministic Mealy step. Events must come in non-decreasing time
/// (SimulationError otherwise). A pending close whose time has strictly
/// passed, or is tied with a trigger, fires before the event is handled.
ControllerStep controller_step(const GateControllerState& state, const ControllerEvent& event,
                               const GatingConfig& config);

struct SimulationSetup {
  SourceParams source;
  IntensifierParams intensifier;
  OpticsMap optics;
  ReadoutParams readout;
  ExtractionParams extraction;
  GatingConfig gating;
  bool render = false;  // full image rendering + extraction instead of the spot-level fast path

  void validate() const;
};

struct RecordedSpot {
  double x = 0.0;  // channel pixels
  double y = 0.0;
  double amplitude = 0.0;  // counts
  double sigma = 0.0;
  friend bool operator==(const RecordedSpot&, const RecordedSpot&) = default;
};

struct TruthPhoton {
  double t_ns = 0.0;
  TransverseMomentum k;
  Origin origin = Origin::Noise;
  std::optional<std::uint64_t> pair_id;
  friend bool operator==(const TruthPhoton&, const TruthPhoton&) = default;
};

struct FrameDiagnostics {
  std::uint64_t photons_in_gate = 0;
  std::uint64_t converted = 0;
  std::uint64_t flashes = 0;
  std::uint64_t crosstalk_flashes = 0;
  std::uint64_t triggers = 0;
  std::uint64_t ignored_triggers = 0;
  std::uint64_t false_pulses = 0;
  std::uint64_t spots_missed = 0;
  std::uint64_t fit_failures = 0;
};

struct FrameRecord {
  std::uint64_t frame_id = 0;
  GateTrace gate;
  std::vector<RecordedSpot> spots;   // sorted by (x, y)
  std::vector<PmtPulse> pulses;      // sorted by t
  std::vector<TruthPhoton> truth;    // photons converted to a primary flash, by time
  FrameDiagnostics diagnostics;      // not persisted
};

/// One acquisition cycle: Fire-All rises at t = 0, photons reach the
/// intensifier only while the gate is open, and discriminator triggers from
/// the PMT drive the controller.
FrameRecord run_frame(const SimulationSetup& setup, std::uint64_t frame_id, Rng& rng);

using FrameSink = std::function<void(FrameRecord&&)>;

/// Frames [first_id, first_id + n_frames) with stream derive_stream(seed,
/// Frame, id) each, handed to `sink` in frame order. Frames are produced in
/// parallel chunks so only one chunk is resident at a time. workers <= 0
/// uses the OpenMP default.
void run_batch(const SimulationSetup& setup, std::uint64_t n_frames, std::uint64_t seed, const FrameSink& sink,
               int workers = 0, std::uint64_t first_id = 0);

/// Single-threaded reference for run_batch.
void run_batch_serial(const SimulationSetup& setup, std::uint64_t n_frames, std::uint64_t seed,
                      const FrameSink& sink, std::uint64_t first_id = 0);

}  // namespace hic
