#include "hic/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <omp.h>

#include "hic/errors.hpp"

namespace fs = std::filesystem;

namespace hic {

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

template <class F>
void write_with(const fs::path& path, F&& f) {
  auto out = open_out(path);
  f(out);
  if (!out) throw IoError("failed writing " + path.string());
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_metadata(const fs::path& out_dir, const std::string& command, int workers, double seconds,
                    const Json& extra = Json::object()) {
  Json m = {{"command", command},
            {"created_utc", utc_now()},
            {"workers", workers > 0 ? workers : omp_get_max_threads()},
            {"wall_seconds", seconds}};
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  write_json(out_dir / "metadata.json", m);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Json header(const char* kind, const RunConfig& config) {
  return {{"format", kResultsFormat}, {"version", kResultsVersion}, {"kind", kind}, {"config", to_json(config)}};
}

Json stats_json(const GatingStats& s) {
  return {{"label", s.label},
          {"frames", s.frames},
          {"histogram", s.histogram},
          {"success_rate", s.success_rate},
          {"empty_fraction", s.empty_fraction}};
}

RunConfig config_from_header(const FrameFile& file) {
  if (file.config.is_null() || file.config.empty()) throw ConfigError("config", "frame file header carries no config");
  auto c = run_config_from_json(file.config);
  c.validate();
  return c;
}

}  // namespace

std::vector<FrameRecord> simulate_frames(const RunConfig& config, int workers) {
  config.validate();
  std::vector<FrameRecord> frames;
  frames.reserve(config.n_frames);
  run_batch(config.setup(), config.n_frames, config.seed, [&](FrameRecord&& f) { frames.push_back(std::move(f)); },
            workers);
  return frames;
}

AnalysisOutput analyze_frames(std::span<const FrameRecord> frames, const RunConfig& config) {
  if (frames.empty()) throw AnalysisError("no frames to analyse");
  AnalysisOutput a;
  a.frames = frames.size();
  std::vector<FramePhotons> photons(frames.size());
  std::vector<std::uint64_t> counts(frames.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(frames.size()); ++i) {
    const auto u = static_cast<std::size_t>(i);
    photons[u] = to_frame_photons(frames[u], config.optics);
    counts[u] = photons[u].photons.size();
  }
  for (auto c : counts) a.photons += c;

  const auto geometry = config.geometry();
  const auto& filter = config.analysis.crosstalk;
  a.xx = subtract(accumulate_joint(photons, HistAxis::XvsX, geometry, filter),
                  accumulate_accidentals(photons, HistAxis::XvsX, geometry, filter));
  a.yy = subtract(accumulate_joint(photons, HistAxis::YvsY, geometry, filter),
                  accumulate_accidentals(photons, HistAxis::YvsY, geometry, filter));
  a.sum = sum_projection(photons, geometry, filter);
  a.singles = accumulate_singles(photons, geometry);
  a.correlation = fit_peak(a.sum.subtracted);
  a.ring = fit_ring(a.singles);
  a.modes = mode_count(a.ring, a.correlation);
  a.analytic_modes = analytic_mode_count(config.source);
  a.photon_counts = gating_stats(counts, config.gating.label());
  return a;
}

Json analysis_json(const AnalysisOutput& a) {
  const auto& c = a.correlation;
  const auto& s = a.sum;
  Json j;
  j["input"] = {{"frames", a.frames}, {"photons", a.photons}};
  j["pairs"] = {{"same_frame_candidates", s.same.same_frame_candidates},
                {"accepted", s.same.accepted_pairs},
                {"excluded_close_pairs", s.same.excluded_pairs},
                {"accidental_accepted", s.accidental.accepted_pairs},
                {"accidental_scale", s.accidental.scale},
                {"subtracted_total", s.subtracted.total()}};
  j["correlation"] = {{"sigma_x", c.sigma_x},
                      {"sigma_y", c.sigma_y},
                      {"center_kx", c.center.kx},
                      {"center_ky", c.center.ky},
                      {"peak_amplitude", c.peak_amplitude},
                      {"offset", c.offset},
                      {"fit_residual", c.fit_residual},
                      {"window_half_bins", c.window_half_bins},
                      {"bin_width", s.subtracted.geometry.bin_width()}};
  j["ring"] = {{"k_radius", a.ring.k_radius},
               {"radial_width", a.ring.radial_width},
               {"center_kx", a.ring.center.kx},
               {"center_ky", a.ring.center.ky},
               {"amplitude", a.ring.amplitude},
               {"background", a.ring.background}};
  j["mode_count"] = {{"N", a.modes.value},
                     {"closed_form_N", a.analytic_modes},
                     {"relative_difference", (a.modes.value - a.analytic_modes) / a.analytic_modes},
                     {"ring_area", a.modes.ring_area},
                     {"correlation_area", a.modes.correlation_area},
                     {"definition", kModeCountDefinition}};
  j["photon_counts"] = stats_json(a.photon_counts);
  return j;
}

std::vector<std::uint64_t> photon_counts(const RunConfig& config, const GatingConfig& gating, std::uint64_t n_frames,
                                         int workers) {
  std::vector<std::uint64_t> counts;
  counts.reserve(n_frames);
  run_batch(config.setup(gating), n_frames, config.seed, [&](FrameRecord&& f) { counts.push_back(f.spots.size()); },
            workers);
  return counts;
}

GatingComparison compare_gating(const RunConfig& config, int workers) {
  config.validate();
  if (config.gating_comparison.size() < 2)
    throw ConfigError("gating_comparison", "need at least two gating configurations to compare");
  GatingComparison out;
  for (std::size_t i = 0; i < config.gating_comparison.size(); ++i) {
    const auto& g = config.gating_comparison[i];
    out.stats.push_back(gating_stats(photon_counts(config, g, config.n_frames, workers), g.label()));
    if (g.mode == GatingMode::Adaptive && !out.adaptive_index) out.adaptive_index = i;
    if (g.mode == GatingMode::Fixed) {
      const bool is150 = g.gate_ns == 150.0;
      if (!out.fixed_index || (is150 && config.gating_comparison[*out.fixed_index].gate_ns != 150.0))
        out.fixed_index = i;
    }
  }
  if (out.adaptive_index && out.fixed_index) {
    const auto& a = out.stats[*out.adaptive_index];
    const auto& f = out.stats[*out.fixed_index];
    if (f.success_rate > 0.0) out.success_ratio = a.success_rate / f.success_rate;
    if (a.empty_fraction > 0.0) out.empty_ratio = f.empty_fraction / a.empty_fraction;
  }
  return out;
}

Json gating_json(const GatingComparison& c) {
  Json j;
  j["configurations"] = Json::array();
  for (const auto& s : c.stats) j["configurations"].push_back(stats_json(s));
  j["reference_adaptive"] = c.adaptive_index ? Json(c.stats[*c.adaptive_index].label) : Json(nullptr);
  j["reference_fixed"] = c.fixed_index ? Json(c.stats[*c.fixed_index].label) : Json(nullptr);
  j["success_ratio"] = c.success_ratio ? Json(*c.success_ratio) : Json(nullptr);
  j["empty_ratio"] = c.empty_ratio ? Json(*c.empty_ratio) : Json(nullptr);
  j["success_definition"] = "frames with exactly 1 or 2 detected photons";
  return j;
}

TimetagOutput timetag_frames(std::span<const FrameRecord> frames, const RunConfig& config) {
  TimetagOutput t;
  t.pairs = collect_single_photon_pairs(frames, config.readout.discriminator_threshold, &t.collect);
  const int max_n = *std::max_element(config.timetag.n_values.begin(), config.timetag.n_values.end());
  const std::size_t needed = 10 * static_cast<std::size_t>(max_n);
  if (t.pairs.size() < needed)
    throw AnalysisError("time tagging needs at least " + std::to_string(needed) + " single-photon frames, found " +
                        std::to_string(t.pairs.size()) + " (short by " + std::to_string(needed - t.pairs.size()) + ")");
  t.pearson = pearson_correlation(t.pairs);
  t.sweep = accuracy_sweep(t.pairs, config.sweep_options());
  return t;
}

TimetagOutput timetag_simulated(const RunConfig& config, int workers) {
  RunConfig c = config;
  c.n_frames = config.timetag.source_frames;
  const auto frames = simulate_frames(c, workers);
  return timetag_frames(frames, config);
}

Json timetag_json(const TimetagOutput& t, const RunConfig& config) {
  Json j;
  j["single_photon_frames"] = {{"frames_scanned", t.collect.frames},
                               {"collected", t.collect.collected},
                               {"skipped_spot_count", t.collect.wrong_spot_count},
                               {"skipped_pulse_count", t.collect.wrong_pulse_count}};
  j["pearson_correlation"] = t.pearson;
  j["closeness_rule"] = "relative difference |a-b|/mean(a,b) below threshold on either the PMT or the sCMOS list";
  j["accuracy_definition"] = "accuracy: fraction of accepted tuples with every photon tagged correctly; "
                             "photon_accuracy: fraction of correctly tagged photons in accepted tuples";
  j["m_tuples"] = config.timetag.m_tuples;
  j["curves"] = Json::array();
  for (const auto& c : t.sweep.curves) {
    Json pts = Json::array();
    for (const auto& p : c.points)
      pts.push_back({{"threshold", p.threshold},
                     {"rejected_fraction", p.rejected_fraction},
                     {"accuracy", p.accuracy},
                     {"photon_accuracy", p.photon_accuracy},
                     {"rejected", p.rejected},
                     {"correct", p.correct}});
    j["curves"].push_back({{"n", c.n}, {"points", std::move(pts)}});
  }
  j["warnings"] = t.sweep.warnings;
  return j;
}

fs::path cmd_simulate(const RunConfig& config, const fs::path& out_dir, int workers) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ensure_dir(out_dir);
  const auto path = out_dir / "frames.jsonl";
  auto out = open_out(path);
  FrameWriter writer(out, to_json(config), config.output.write_truth);
  run_batch(config.setup(), config.n_frames, config.seed, [&](FrameRecord&& f) { writer.write(f); }, workers);
  out.close();
  if (!out) throw IoError("failed writing " + path.string());
  write_metadata(out_dir, "simulate", workers, seconds_since(t0), {{"frames", writer.frames_written()}});
  return path;
}

namespace {

fs::path write_analysis(const AnalysisOutput& a, const RunConfig& config, const fs::path& out_dir,
                        std::uint64_t corrupt_lines) {
  Json doc = header("analysis", config);
  auto body = analysis_json(a);
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  doc["input"]["corrupt_lines"] = corrupt_lines;
  write_with(out_dir / "hist_xx.csv", [&](std::ostream& os) { write_histogram_csv(os, a.xx); });
  write_with(out_dir / "hist_yy.csv", [&](std::ostream& os) { write_histogram_csv(os, a.yy); });
  write_with(out_dir / "hist_sum.csv", [&](std::ostream& os) { write_histogram_csv(os, a.sum.subtracted); });
  write_with(out_dir / "hist_sum_raw.csv", [&](std::ostream& os) { write_histogram_csv(os, a.sum.same); });
  write_with(out_dir / "hist_sum_accidental.csv", [&](std::ostream& os) { write_histogram_csv(os, a.sum.accidental); });
  write_with(out_dir / "hist_singles.csv", [&](std::ostream& os) { write_histogram_csv(os, a.singles); });
  const auto path = out_dir / "results.json";
  write_json(path, doc);
  return path;
}

void write_timetag(const TimetagOutput& t, const RunConfig& config, const fs::path& out_dir) {
  write_with(out_dir / "brightness_map.csv", [&](std::ostream& os) { write_brightness_map_csv(os, t.pairs); });
  write_with(out_dir / "accuracy.csv", [&](std::ostream& os) { write_accuracy_csv(os, t.sweep.curves); });
  Json doc = header("timetag", config);
  auto body = timetag_json(t, config);
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  write_json(out_dir / "timetag.json", doc);
}

}  // namespace

fs::path cmd_analyze(const fs::path& frames_file, const std::optional<RunConfig>& config, const fs::path& out_dir,
                     int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto file = read_frames_file(frames_file);
  const RunConfig c = config ? *config : config_from_header(file);
  c.validate();
  ensure_dir(out_dir);
  const auto a = analyze_frames(file.frames, c);
  const auto path = write_analysis(a, c, out_dir, file.corrupt_lines);
  write_metadata(out_dir, "analyze", workers, seconds_since(t0), {{"input", frames_file.string()}});
  return path;
}

fs::path cmd_compare_gating(const RunConfig& config, const fs::path& out_dir, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cmp = compare_gating(config, workers);
  ensure_dir(out_dir);
  write_with(out_dir / "gating.csv", [&](std::ostream& os) {
    os << "label,photons,frames,fraction\n";
    for (const auto& s : cmp.stats)
      for (std::size_t k = 0; k < s.histogram.size(); ++k)
        os << s.label << ',' << (k + 1 == s.histogram.size() ? std::to_string(k) + "+" : std::to_string(k)) << ','
           << s.histogram[k] << ',' << static_cast<double>(s.histogram[k]) / static_cast<double>(s.frames) << '\n';
  });
  Json doc = header("compare-gating", config);
  auto body = gating_json(cmp);
  for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
  const auto path = out_dir / "gating.json";
  write_json(path, doc);
  write_metadata(out_dir, "compare-gating", workers, seconds_since(t0));
  return path;
}

fs::path cmd_timetag(const std::optional<fs::path>& frames_file, const std::optional<RunConfig>& config,
                     const fs::path& out_dir, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  TimetagOutput t;
  RunConfig c;
  if (frames_file) {
    const auto file = read_frames_file(*frames_file);
    c = config ? *config : config_from_header(file);
    c.validate();
    t = timetag_frames(file.frames, c);
  } else {
    if (!config) throw ConfigError("config", "timetag needs a frame file or a config");
    c = *config;
    c.validate();
    t = timetag_simulated(c, workers);
  }
  ensure_dir(out_dir);
  write_timetag(t, c, out_dir);
  write_metadata(out_dir, "timetag", workers, seconds_since(t0));
  return out_dir / "timetag.json";
}

fs::path cmd_end_to_end(const RunConfig& config, const fs::path& out_dir, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto frames_path = cmd_simulate(config, out_dir, workers);
  const auto file = read_frames_file(frames_path);
  const auto a = analyze_frames(file.frames, config);
  const auto path = write_analysis(a, config, out_dir, file.corrupt_lines);
  Json extra = {{"input", frames_path.string()}};
  try {
    write_timetag(timetag_frames(file.frames, config), config, out_dir);
  } catch (const AnalysisError& e) {
    extra["timetag_skipped"] = e.what();
  }
  write_metadata(out_dir, "end-to-end", workers, seconds_since(t0), extra);
  return path;
}

}  // namespace hic
