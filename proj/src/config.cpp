#include "hic/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "hic/errors.hpp"

namespace hic {

SimulationSetup RunConfig::setup() const { return setup(gating); }

SimulationSetup RunConfig::setup(const GatingConfig& g) const {
  SimulationSetup s;
  s.source = source;
  s.intensifier = intensifier;
  s.optics = optics;
  s.readout = readout;
  s.extraction = extraction;
  s.gating = g;
  s.render = render;
  return s;
}

HistGeometry RunConfig::geometry() const { return analysis.auto_geometry ? default_geometry(source) : analysis.geometry; }

SweepOptions RunConfig::sweep_options() const {
  SweepOptions o;
  o.n_values = timetag.n_values;
  o.thresholds = timetag.thresholds;
  o.m_tuples = timetag.m_tuples;
  o.seed = seed;
  return o;
}

void RunConfig::validate() const {
  if (n_frames == 0) throw ConfigError("n_frames", "must be at least 1");
  setup().validate();
  for (std::size_t i = 0; i < gating_comparison.size(); ++i)
    gating_comparison[i].validate("gating_comparison[" + std::to_string(i) + "]");
  if (!analysis.auto_geometry) {
    if (analysis.geometry.bins < 8) throw ConfigError("analysis.geometry.bins", "must be at least 8");
    if (!(analysis.geometry.range > 0.0)) throw ConfigError("analysis.geometry.range", "must be positive");
  }
  if (analysis.crosstalk.min_sep_px < 0.0)
    throw ConfigError("analysis.crosstalk.min_sep_px", "must be non-negative");
  if (timetag.n_values.empty()) throw ConfigError("timetag.n_values", "must not be empty");
  for (std::size_t i = 0; i < timetag.n_values.size(); ++i)
    if (timetag.n_values[i] < 2 || timetag.n_values[i] > 12)
      throw ConfigError("timetag.n_values[" + std::to_string(i) + "]", "photon multiplicity must be in [2, 12]");
  for (std::size_t i = 0; i < timetag.thresholds.size(); ++i)
    if (!(timetag.thresholds[i] >= 0.0))
      throw ConfigError("timetag.thresholds[" + std::to_string(i) + "]", "must be non-negative");
  if (timetag.m_tuples == 0) throw ConfigError("timetag.m_tuples", "must be at least 1");
  if (timetag.source_frames == 0) throw ConfigError("timetag.source_frames", "must be at least 1");
}

namespace {

const char* to_string(BrightnessModel m) { return m == BrightnessModel::Gamma ? "gamma" : "uniform"; }
const char* to_string(GatingMode m) { return m == GatingMode::Adaptive ? "adaptive" : "fixed"; }
const char* to_string(CrosstalkMode m) { return m == CrosstalkMode::ExcludePairs ? "exclude_pairs" : "drop_photons"; }

Json gating_json(const GatingConfig& g) {
  return {{"mode", to_string(g.mode)},
          {"n_target", g.n_target},
          {"gate_ns", g.gate_ns},
          {"feedback_latency_ns", g.feedback_latency_ns},
          {"fire_all_duration_ns", g.fire_all_duration_ns},
          {"frame_period_ns", g.frame_period_ns}};
}

// Walks one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  template <class T>
  bool get(const std::string& key, T& out) {
    const Json* v = find(key);
    if (!v) return false;
    out = convert<T>(*v, sub(key));
    return true;
  }

  template <class T>
  static T convert(const Json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
          throw ConfigError(path, "expected a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(path, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path, "expected a string");
    }
    return v.get<T>();
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(sub(it.key()), "unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

GatingConfig gating_from(const Json& j, const std::string& path) {
  GatingConfig g;
  Fields f(j, path);
  std::string mode;
  if (f.get("mode", mode)) {
    if (mode == "adaptive") g.mode = GatingMode::Adaptive;
    else if (mode == "fixed") g.mode = GatingMode::Fixed;
    else throw ConfigError(f.sub("mode"), "expected \"adaptive\" or \"fixed\", got \"" + mode + "\"");
  }
  f.get("n_target", g.n_target);
  f.get("gate_ns", g.gate_ns);
  f.get("feedback_latency_ns", g.feedback_latency_ns);
  f.get("fire_all_duration_ns", g.fire_all_duration_ns);
  f.get("frame_period_ns", g.frame_period_ns);
  f.finish();
  return g;
}

template <class T>
std::vector<T> array_from(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(Fields::convert<T>(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

}  // namespace

Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["n_frames"] = c.n_frames;
  j["render"] = c.render;
  const auto& s = c.source;
  j["source"] = {{"ring_radius", s.ring_radius},
                 {"ring_radial_sigma", s.ring_radial_sigma},
                 {"sum_sigma_x", s.sum_sigma_x},
                 {"sum_sigma_y", s.sum_sigma_y},
                 {"pair_rate", s.pair_rate},
                 {"noise_rate", s.noise_rate},
                 {"pair_time_jitter_ns", s.pair_time_jitter_ns},
                 {"k_max", s.k_max}};
  const auto& ii = c.intensifier;
  j["intensifier"] = {{"qe", ii.qe},
                      {"channels_x", ii.channels_x},
                      {"channels_y", ii.channels_y},
                      {"brightness_model", to_string(ii.brightness_model)},
                      {"brightness_shape", ii.brightness_shape},
                      {"brightness_scale", ii.brightness_scale},
                      {"crosstalk_prob", ii.crosstalk_prob},
                      {"crosstalk_radius_px", ii.crosstalk_radius_px},
                      {"crosstalk_brightness_factor", ii.crosstalk_brightness_factor},
                      {"crosstalk_brightness_shape", ii.crosstalk_brightness_shape},
                      {"phosphor_delay_ns", ii.phosphor_delay_ns}};
  j["optics"] = {{"k_to_pixel_scale", c.optics.k_to_pixel_scale},
                 {"center_x", c.optics.center_x},
                 {"center_y", c.optics.center_y}};
  const auto& r = c.readout;
  j["readout"] = {{"psf_sigma_px", r.psf_sigma_px},
                  {"cmos_gain", r.cmos_gain},
                  {"cmos_noise_sigma", r.cmos_noise_sigma},
                  {"cmos_lognormal_sigma", r.cmos_lognormal_sigma},
                  {"roi_x0", r.roi_x0},
                  {"roi_y0", r.roi_y0},
                  {"roi_width", r.roi_width},
                  {"roi_height", r.roi_height},
                  {"pmt_fraction", r.pmt_fraction},
                  {"pmt_gain", r.pmt_gain},
                  {"pmt_noise_sigma", r.pmt_noise_sigma},
                  {"pmt_lognormal_sigma", r.pmt_lognormal_sigma},
                  {"pmt_false_pulse_rate", r.pmt_false_pulse_rate},
                  {"false_pulse_mean_amplitude", r.false_pulse_mean_amplitude},
                  {"discriminator_threshold", r.discriminator_threshold},
                  {"pulse_pair_resolution_ns", r.pulse_pair_resolution_ns}};
  const auto& e = c.extraction;
  j["extraction"] = {{"detect_threshold", e.detect_threshold},
                     {"roi_half_size", e.roi_half_size},
                     {"max_iterations", e.max_iterations},
                     {"convergence_tol", e.convergence_tol},
                     {"sigma_min", e.sigma_min},
                     {"sigma_max", e.sigma_max},
                     {"sigma_prior", e.sigma_prior},
                     {"min_peak_separation", e.min_peak_separation}};
  j["gating"] = gating_json(c.gating);
  j["gating_comparison"] = Json::array();
  for (const auto& g : c.gating_comparison) j["gating_comparison"].push_back(gating_json(g));
  j["analysis"] = {{"auto_geometry", c.analysis.auto_geometry},
                   {"geometry", {{"bins", c.analysis.geometry.bins}, {"range", c.analysis.geometry.range}}},
                   {"crosstalk",
                    {{"enabled", c.analysis.crosstalk.enabled},
                     {"min_sep_px", c.analysis.crosstalk.min_sep_px},
                     {"mode", to_string(c.analysis.crosstalk.mode)}}}};
  j["timetag"] = {{"n_values", c.timetag.n_values},
                  {"thresholds", c.timetag.thresholds},
                  {"m_tuples", c.timetag.m_tuples},
                  {"source_frames", c.timetag.source_frames}};
  j["output"] = {{"write_truth", c.output.write_truth}};
  return j;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  Fields root(j, "");
  if (!root.get("seed", c.seed)) throw ConfigError("seed", "required (no implicit seeding)");
  root.get("n_frames", c.n_frames);
  root.get("render", c.render);
  if (const Json* v = root.find("source")) {
    Fields f(*v, "source");
    auto& s = c.source;
    f.get("ring_radius", s.ring_radius);
    f.get("ring_radial_sigma", s.ring_radial_sigma);
    f.get("sum_sigma_x", s.sum_sigma_x);
    f.get("sum_sigma_y", s.sum_sigma_y);
    f.get("pair_rate", s.pair_rate);
    f.get("noise_rate", s.noise_rate);
    f.get("pair_time_jitter_ns", s.pair_time_jitter_ns);
    f.get("k_max", s.k_max);
    f.finish();
  }
  if (const Json* v = root.find("intensifier")) {
    Fields f(*v, "intensifier");
    auto& ii = c.intensifier;
    f.get("qe", ii.qe);
    f.get("channels_x", ii.channels_x);
    f.get("channels_y", ii.channels_y);
    std::string model;
    if (f.get("brightness_model", model)) {
      if (model == "gamma") ii.brightness_model = BrightnessModel::Gamma;
      else if (model == "uniform") ii.brightness_model = BrightnessModel::Uniform;
      else throw ConfigError("intensifier.brightness_model", "expected \"gamma\" or \"uniform\", got \"" + model + "\"");
    }
    f.get("brightness_shape", ii.brightness_shape);
    f.get("brightness_scale", ii.brightness_scale);
    f.get("crosstalk_prob", ii.crosstalk_prob);
    f.get("crosstalk_radius_px", ii.crosstalk_radius_px);
    f.get("crosstalk_brightness_factor", ii.crosstalk_brightness_factor);
    f.get("crosstalk_brightness_shape", ii.crosstalk_brightness_shape);
    f.get("phosphor_delay_ns", ii.phosphor_delay_ns);
    f.finish();
  }
  if (const Json* v = root.find("optics")) {
    Fields f(*v, "optics");
    f.get("k_to_pixel_scale", c.optics.k_to_pixel_scale);
    f.get("center_x", c.optics.center_x);
    f.get("center_y", c.optics.center_y);
    f.finish();
  }
  if (const Json* v = root.find("readout")) {
    Fields f(*v, "readout");
    auto& r = c.readout;
    f.get("psf_sigma_px", r.psf_sigma_px);
    f.get("cmos_gain", r.cmos_gain);
    f.get("cmos_noise_sigma", r.cmos_noise_sigma);
    f.get("cmos_lognormal_sigma", r.cmos_lognormal_sigma);
    f.get("roi_x0", r.roi_x0);
    f.get("roi_y0", r.roi_y0);
    f.get("roi_width", r.roi_width);
    f.get("roi_height", r.roi_height);
    f.get("pmt_fraction", r.pmt_fraction);
    f.get("pmt_gain", r.pmt_gain);
    f.get("pmt_noise_sigma", r.pmt_noise_sigma);
    f.get("pmt_lognormal_sigma", r.pmt_lognormal_sigma);
    f.get("pmt_false_pulse_rate", r.pmt_false_pulse_rate);
    f.get("false_pulse_mean_amplitude", r.false_pulse_mean_amplitude);
    f.get("discriminator_threshold", r.discriminator_threshold);
    f.get("pulse_pair_resolution_ns", r.pulse_pair_resolution_ns);
    f.finish();
  }
  if (const Json* v = root.find("extraction")) {
    Fields f(*v, "extraction");
    auto& e = c.extraction;
    f.get("detect_threshold", e.detect_threshold);
    f.get("roi_half_size", e.roi_half_size);
    f.get("max_iterations", e.max_iterations);
    f.get("convergence_tol", e.convergence_tol);
    f.get("sigma_min", e.sigma_min);
    f.get("sigma_max", e.sigma_max);
    f.get("sigma_prior", e.sigma_prior);
    f.get("min_peak_separation", e.min_peak_separation);
    f.finish();
  }
  if (const Json* v = root.find("gating")) c.gating = gating_from(*v, "gating");
  if (const Json* v = root.find("gating_comparison")) {
    if (!v->is_array()) throw ConfigError("gating_comparison", "expected an array");
    c.gating_comparison.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.gating_comparison.push_back(gating_from((*v)[i], "gating_comparison[" + std::to_string(i) + "]"));
  }
  if (const Json* v = root.find("analysis")) {
    Fields f(*v, "analysis");
    f.get("auto_geometry", c.analysis.auto_geometry);
    if (const Json* g = f.find("geometry")) {
      Fields fg(*g, "analysis.geometry");
      fg.get("bins", c.analysis.geometry.bins);
      fg.get("range", c.analysis.geometry.range);
      fg.finish();
    }
    if (const Json* x = f.find("crosstalk")) {
      Fields fx(*x, "analysis.crosstalk");
      fx.get("enabled", c.analysis.crosstalk.enabled);
      fx.get("min_sep_px", c.analysis.crosstalk.min_sep_px);
      std::string mode;
      if (fx.get("mode", mode)) {
        if (mode == "exclude_pairs") c.analysis.crosstalk.mode = CrosstalkMode::ExcludePairs;
        else if (mode == "drop_photons") c.analysis.crosstalk.mode = CrosstalkMode::DropPhotons;
        else throw ConfigError("analysis.crosstalk.mode", "expected \"exclude_pairs\" or \"drop_photons\"");
      }
      fx.finish();
    }
    f.finish();
  }
  if (const Json* v = root.find("timetag")) {
    Fields f(*v, "timetag");
    if (const Json* n = f.find("n_values")) c.timetag.n_values = array_from<int>(*n, "timetag.n_values");
    if (const Json* t = f.find("thresholds")) c.timetag.thresholds = array_from<double>(*t, "timetag.thresholds");
    f.get("m_tuples", c.timetag.m_tuples);
    f.get("source_frames", c.timetag.source_frames);
    f.finish();
  }
  if (const Json* v = root.find("output")) {
    Fields f(*v, "output");
    f.get("write_truth", c.output.write_truth);
    f.finish();
  }
  root.finish();
  return c;
}

Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("cannot read " + path.string());
  try {
    return Json::parse(buf.str());
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", path.string() + " is not valid JSON: " + e.what());
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  auto c = run_config_from_json(load_json_file(path));
  c.validate();
  return c;
}

RunConfig paper_like_config() {
  RunConfig c;
  c.seed = 20240501;
  c.n_frames = 100000;
  // Calibrated against the adaptive and fixed-150 ns frame histograms and the
  // two-photon time-tagging accuracy; see configs/paper_like.json.
  c.source.pair_rate = 2.914e6;
  c.source.noise_rate = 0.0;
  c.readout.pmt_false_pulse_rate = 4.315e5;
  c.readout.cmos_lognormal_sigma = 0.20;
  c.readout.pmt_lognormal_sigma = 0.20;
  return c;
}

}  // namespace hic
