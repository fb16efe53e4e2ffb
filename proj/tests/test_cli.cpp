#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "hic/config.hpp"
#include "hic/errors.hpp"
#include "hic/frame_io.hpp"
#include "hic/pipeline.hpp"

using namespace hic;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hic_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + HIC_CLI_PATH + "\" " + args + " >\"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void write_config(const fs::path& p, const RunConfig& c) { write_text(p, to_json(c).dump(2)); }

std::string expect_config_error(const Json& j) {
  try {
    run_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.field();
  }
  FAIL("no ConfigError");
  return {};
}

// Every key path present in `schema` exists in `doc` with the same JSON type.
void check_schema(const Json& schema, const Json& doc, const std::string& path) {
  CAPTURE(path);
  // Signed and unsigned integers are one JSON number type.
  REQUIRE((doc.is_number() && schema.is_number() ? true : doc.type() == schema.type()));
  if (schema.is_object())
    for (auto it = schema.begin(); it != schema.end(); ++it) {
      REQUIRE(doc.contains(it.key()));
      check_schema(it.value(), doc.at(it.key()), path + "." + it.key());
    }
}

FrameRecord sample_frame(std::uint64_t id) {
  FrameRecord f;
  f.frame_id = id;
  f.gate = {3.5, 153.5, CloseCause::FixedExpiry};
  f.spots = {{101.25, 2001.5, 812.75, 1.5}, {2400.0, 3.0, 95.125, 1.75}};
  f.pulses = {{3.5, 0.0125}, {90.0, 0.5}};
  f.truth = {{3.5, {120.5, -30.25}, Origin::Signal, 7}, {40.0, {-12.0, 3.0}, Origin::Noise, std::nullopt}};
  return f;
}

std::string frame_file(int frames, const std::string& version = "1.0") {
  std::ostringstream os;
  Json header = {{"format", kFrameFormat}, {"version", version}, {"config", to_json(paper_like_config())}};
  os << header.dump() << '\n';
  for (int i = 0; i < frames; ++i) os << frame_to_json(sample_frame(static_cast<std::uint64_t>(i)), true).dump() << '\n';
  return os.str();
}

// Lossless two-photon frames: every frame carries one complete pair.
RunConfig perfect_pair_config() {
  RunConfig c = paper_like_config();
  c.seed = 99;
  c.n_frames = 4000;
  c.source.pair_rate = 2.0e3;
  c.source.noise_rate = 0.0;
  c.intensifier.qe = 1.0;
  c.intensifier.crosstalk_prob = 0.0;
  c.readout.pmt_false_pulse_rate = 0.0;
  c.readout.cmos_noise_sigma = 0.0;
  c.readout.pmt_noise_sigma = 0.0;
  c.readout.pmt_lognormal_sigma = 0.0;
  c.readout.cmos_lognormal_sigma = 0.0;
  c.readout.cmos_gain = 1.0e7;
  c.readout.pmt_gain = 1.0e4;
  c.gating = GatingConfig::adaptive(1);
  return c;
}

}  // namespace

TEST_CASE("config: JSON round trip and preset file") {
  const auto paper = paper_like_config();
  CHECK(run_config_from_json(to_json(paper)) == paper);
  RunConfig other;
  other.seed = 7;
  other.gating = GatingConfig::fixed(500.0);
  other.analysis.auto_geometry = false;
  other.analysis.geometry = {64, 500.0};
  other.analysis.crosstalk.mode = CrosstalkMode::DropPhotons;
  other.intensifier.brightness_model = BrightnessModel::Uniform;
  other.timetag.thresholds = {0.0, 0.1};
  CHECK(run_config_from_json(to_json(other)) == other);
  CHECK(load_config(fs::path(HIC_SOURCE_DIR) / "configs" / "paper_like.json") == paper);
}

TEST_CASE("config: diagnostics carry field paths") {
  Json j = to_json(paper_like_config());
  Json unknown = j;
  unknown["source"]["ring_radiuss"] = 1.0;
  CHECK(expect_config_error(unknown) == "source.ring_radiuss");

  Json bad_type = j;
  bad_type["readout"]["discriminator_threshold"] = "high";
  CHECK(expect_config_error(bad_type) == "readout.discriminator_threshold");

  Json bad_array = j;
  bad_array["timetag"]["n_values"] = Json::array({2, "three"});
  CHECK(expect_config_error(bad_array) == "timetag.n_values[1]");

  Json no_seed = j;
  no_seed.erase("seed");
  CHECK(expect_config_error(no_seed) == "seed");

  Json negative_seed = j;
  negative_seed["seed"] = -4;
  CHECK(expect_config_error(negative_seed) == "seed");

  RunConfig zero = paper_like_config();
  zero.n_frames = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
  RunConfig single = paper_like_config();
  single.timetag.n_values = {1};
  try {
    single.validate();
    FAIL("n = 1 accepted");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "timetag.n_values[0]");
  }

  const auto dir = scratch("config");
  write_text(dir / "broken.json", "{ \"seed\": 1, ");
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}

TEST_CASE("frame format: round trip and reader errors") {
  const auto f = sample_frame(3);
  const auto back = frame_from_json(frame_to_json(f, true));
  CHECK(back.frame_id == f.frame_id);
  CHECK(back.gate == f.gate);
  CHECK(back.spots == f.spots);
  CHECK(back.pulses == f.pulses);
  CHECK(back.truth == f.truth);
  CHECK(frame_from_json(frame_to_json(f, false)).truth.empty());
  CHECK_FALSE(frame_to_json(f, false).contains("truth"));

  {
    std::istringstream in(frame_file(200));
    auto file = read_frames(in);
    CHECK(file.frames.size() == 200);
    CHECK(file.corrupt_lines == 0);
    CHECK(run_config_from_json(file.config) == paper_like_config());
  }
  {
    // 2 corrupt lines in 202: under 1%, skipped and counted.
    auto text = frame_file(200) + "{not json\n" + "{\"frame_id\": \"x\"}\n";
    std::istringstream in(text);
    auto file = read_frames(in);
    CHECK(file.frames.size() == 200);
    CHECK(file.corrupt_lines == 2);
  }
  {
    auto text = frame_file(50) + "garbage\n";
    std::istringstream in(text);
    CHECK_THROWS_AS(read_frames(in), IoError);
  }
  {
    std::istringstream in(frame_file(5, "2.0"));
    CHECK_THROWS_AS(read_frames(in), IoError);
  }
  {
    std::istringstream in(frame_file(5, "1.3"));
    CHECK(read_frames(in).frames.size() == 5);
  }
  {
    std::istringstream in("");
    CHECK_THROWS_AS(read_frames(in), IoError);
  }
  {
    std::istringstream in(frame_file(0));
    CHECK_THROWS_AS(read_frames(in), IoError);
  }
  {
    std::ostringstream os;
    os << frame_file(0) << frame_to_json(sample_frame(4), true).dump() << '\n'
       << frame_to_json(sample_frame(2), true).dump() << '\n';
    std::istringstream in(os.str());
    CHECK_THROWS_AS(read_frames(in), IoError);
  }
  {
    std::ostringstream os;
    FrameWriter w(os, to_json(paper_like_config()), true);
    w.write(sample_frame(5));
    CHECK_THROWS(w.write(sample_frame(5)));
  }
}

TEST_CASE("cli: simulate is byte-identical across runs and worker counts") {
  const auto dir = scratch("simulate");
  const auto log = dir / "log.txt";
  CHECK(run_cli("simulate --frames 10 --seed 5 --out \"" + (dir / "a").string() + "\"", log) == 0);
  CHECK(run_cli("simulate --frames 10 --seed 5 --workers 1 --out \"" + (dir / "b").string() + "\"", log) == 0);
  CHECK(run_cli("simulate --frames 10 --seed 5 --workers 3 --out \"" + (dir / "c").string() + "\"", log) == 0);
  const auto a = slurp(dir / "a" / "frames.jsonl");
  CHECK(!a.empty());
  CHECK(a == slurp(dir / "b" / "frames.jsonl"));
  CHECK(a == slurp(dir / "c" / "frames.jsonl"));
  CHECK(fs::exists(dir / "a" / "metadata.json"));
  CHECK(read_frames_file(dir / "a" / "frames.jsonl").frames.size() == 10);
  CHECK(run_cli("simulate --frames 10 --seed 6 --out \"" + (dir / "d").string() + "\"", log) == 0);
  CHECK(a != slurp(dir / "d" / "frames.jsonl"));
}

TEST_CASE("cli: exit codes") {
  const auto dir = scratch("exit");
  const auto log = dir / "log.txt";
  const std::string out = " --out \"" + (dir / "o").string() + "\"";

  CHECK(run_cli("simulate --frames 0" + out, log) == 1);
  CHECK(slurp(log).find("n_frames") != std::string::npos);
  CHECK(run_cli("bogus", log) == 1);
  CHECK(run_cli("simulate --workers -2" + out, log) == 1);
  CHECK(run_cli("analyze", log) == 1);

  CHECK(run_cli("simulate --config \"" + (dir / "nope.json").string() + "\"" + out, log) == 2);
  CHECK(run_cli("analyze \"" + (dir / "nope.jsonl").string() + "\"" + out, log) == 2);
  write_text(dir / "empty.jsonl", "");
  CHECK(run_cli("analyze \"" + (dir / "empty.jsonl").string() + "\"" + out, log) == 2);

  Json unknown = to_json(paper_like_config());
  unknown["gating"]["n_targett"] = 2;
  write_text(dir / "unknown.json", unknown.dump());
  CHECK(run_cli("simulate --config \"" + (dir / "unknown.json").string() + "\"" + out, log) == 1);
  CHECK(slurp(log).find("gating.n_targett") != std::string::npos);

  auto single = paper_like_config();
  single.gating_comparison = {GatingConfig::adaptive(1)};
  single.n_frames = 100;
  write_config(dir / "single.json", single);
  CHECK(run_cli("compare-gating --config \"" + (dir / "single.json").string() + "\"" + out, log) == 1);

  auto n1 = paper_like_config();
  n1.timetag.n_values = {1, 2};
  write_text(dir / "n1.json", to_json(n1).dump());
  CHECK(run_cli("timetag --config \"" + (dir / "n1.json").string() + "\"" + out, log) == 1);

  // Ten frames carry no visible correlation peak.
  CHECK(run_cli("simulate --frames 10 --seed 1 --out \"" + (dir / "few").string() + "\"", log) == 0);
  CHECK(run_cli("analyze \"" + (dir / "few" / "frames.jsonl").string() + "\"" + out, log) == 3);

  // Too few single-photon frames for time tagging: the message states the shortfall.
  auto starved = paper_like_config();
  starved.timetag.source_frames = 20;
  write_config(dir / "starved.json", starved);
  CHECK(run_cli("timetag --config \"" + (dir / "starved.json").string() + "\"" + out, log) == 3);
  CHECK(slurp(log).find("need") != std::string::npos);
}

TEST_CASE("cli: perfect-pair analysis, echo completeness and determinism") {
  const auto dir = scratch("analyze");
  const auto log = dir / "log.txt";
  const auto cfg = perfect_pair_config();
  write_config(dir / "cfg.json", cfg);
  REQUIRE(run_cli("simulate --config \"" + (dir / "cfg.json").string() + "\" --out \"" + (dir / "sim").string() + "\"",
                  log) == 0);
  const auto frames = (dir / "sim" / "frames.jsonl").string();
  REQUIRE(run_cli("analyze \"" + frames + "\" --workers 1 --out \"" + (dir / "a1").string() + "\"", log) == 0);
  REQUIRE(run_cli("analyze \"" + frames + "\" --workers 2 --out \"" + (dir / "a2").string() + "\"", log) == 0);
  const auto text = slurp(dir / "a1" / "results.json");
  CHECK(text == slurp(dir / "a2" / "results.json"));

  const auto doc = Json::parse(text);
  const double bin = doc["correlation"]["bin_width"].get<double>();
  CHECK(std::abs(doc["correlation"]["center_kx"].get<double>()) < bin);
  CHECK(std::abs(doc["correlation"]["center_ky"].get<double>()) < bin);
  CHECK(doc["correlation"]["sigma_x"].get<double>() > 0.0);
  CHECK(doc["mode_count"].contains("N"));
  CHECK(doc["mode_count"].contains("definition"));
  CHECK(doc["format"] == kResultsFormat);

  // Config echo: schema of the full config present and equal to what ran.
  check_schema(to_json(cfg), doc["config"], "config");
  CHECK(run_config_from_json(doc["config"]) == cfg);

  for (const char* csv : {"hist_xx.csv", "hist_yy.csv", "hist_sum.csv", "hist_sum_raw.csv", "hist_sum_accidental.csv",
                          "hist_singles.csv"})
    CHECK(fs::exists(dir / "a1" / csv));
  CHECK(fs::exists(dir / "a1" / "metadata.json"));
  CHECK_FALSE(text.find("timestamp") != std::string::npos);
}

TEST_CASE("cli: timetag CSV rows and compare-gating outputs") {
  const auto dir = scratch("timetag");
  const auto log = dir / "log.txt";
  auto cfg = paper_like_config();
  cfg.timetag.source_frames = 3000;
  cfg.timetag.m_tuples = 2000;
  cfg.timetag.n_values = {2, 3, 6};
  cfg.timetag.thresholds = {0.0, 0.1, 0.3, 3.0};
  write_config(dir / "cfg.json", cfg);
  REQUIRE(run_cli("timetag --config \"" + (dir / "cfg.json").string() + "\" --out \"" + (dir / "t").string() + "\"",
                  log) == 0);
  const auto doc = Json::parse(slurp(dir / "t" / "timetag.json"));
  const auto rows = slurp(dir / "t" / "accuracy.csv");
  const auto lines = static_cast<std::size_t>(std::count(rows.begin(), rows.end(), '\n'));
  CHECK(doc["warnings"].size() > 0);  // threshold 3.0 rejects every tuple
  CHECK(lines - 1 == 3 * 4 - doc["warnings"].size());
  CHECK(fs::exists(dir / "t" / "brightness_map.csv"));

  auto g = paper_like_config();
  g.n_frames = 2000;
  write_config(dir / "g.json", g);
  REQUIRE(run_cli("compare-gating --config \"" + (dir / "g.json").string() + "\" --out \"" + (dir / "g").string() + "\"",
                  log) == 0);
  const auto gj = Json::parse(slurp(dir / "g" / "gating.json"));
  REQUIRE(gj["configurations"].size() == 4);
  CHECK(gj["success_ratio"].is_number());
  CHECK(gj["empty_ratio"].is_number());
  // Fixed 5 us: fewest empty frames, most frames with three or more photons.
  const auto& c = gj["configurations"];
  auto empty = [&](int i) { return c[i]["empty_fraction"].get<double>(); };
  auto three_plus = [&](int i) {
    double n = 0;
    const auto& h = c[i]["histogram"];
    for (std::size_t k = 3; k < h.size(); ++k) n += h[k].get<double>();
    return n;
  };
  for (int i = 0; i < 3; ++i) {
    CHECK(empty(3) < empty(i));
    CHECK(three_plus(3) > three_plus(i));
  }
  const auto csv = slurp(dir / "g" / "gating.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4 * 6);
}
