#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <omp.h>

#include "hic/config.hpp"
#include "hic/errors.hpp"
#include "hic/pipeline.hpp"

namespace {

enum Exit { kOk = 0, kValidation = 1, kIo = 2, kAnalysis = 3 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> frames;
  std::string out = "out";
  int workers = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "run configuration (JSON); paper-like preset when omitted");
  app->add_option("--seed", c.seed, "overrides the config seed");
  app->add_option("--out", c.out, "output directory")->capture_default_str();
  app->add_option("--frames", c.frames, "overrides n_frames");
  app->add_option("--workers", c.workers, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
}

hic::RunConfig apply_overrides(hic::Json j, const Common& c) {
  if (c.seed) j["seed"] = *c.seed;
  if (c.frames) j["n_frames"] = *c.frames;
  auto cfg = hic::run_config_from_json(j);
  cfg.validate();
  return cfg;
}

// Explicit config when --config or an override was given; otherwise nullopt
// so file-based commands fall back to the frame-file header.
std::optional<hic::RunConfig> optional_config(const Common& c) {
  if (!c.config_path.empty()) return apply_overrides(hic::load_json_file(c.config_path), c);
  if (c.seed || c.frames) return apply_overrides(hic::to_json(hic::paper_like_config()), c);
  return std::nullopt;
}

hic::RunConfig required_config(const Common& c) {
  if (auto cfg = optional_config(c)) return *cfg;
  return apply_overrides(hic::to_json(hic::paper_like_config()), c);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid intensified camera: simulation, correlation analysis, gating comparison and time tagging"};
  app.require_subcommand(1);

  Common sim, ana, cmp, tag, e2e;
  auto* s_sim = app.add_subcommand("simulate", "simulate frames into <out>/frames.jsonl");
  add_common(s_sim, sim);
  auto* s_ana = app.add_subcommand("analyze", "correlation analysis of a frame file");
  add_common(s_ana, ana);
  std::string ana_input;
  s_ana->add_option("input", ana_input, "frame file (JSON lines)")->required();
  auto* s_cmp = app.add_subcommand("compare-gating", "photon-count statistics for several gating modes");
  add_common(s_cmp, cmp);
  auto* s_tag = app.add_subcommand("timetag", "brightness-correlation time tagging accuracy");
  add_common(s_tag, tag);
  std::string tag_input;
  s_tag->add_option("input", tag_input, "frame file; frames are simulated from the config when omitted");
  auto* s_e2e = app.add_subcommand("end-to-end", "simulate, analyze and time-tag in one go");
  add_common(s_e2e, e2e);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  auto set_workers = [](int w) {
    if (w > 0) omp_set_num_threads(w);
  };

  try {
    std::filesystem::path result;
    if (s_sim->parsed()) {
      set_workers(sim.workers);
      result = hic::cmd_simulate(required_config(sim), sim.out, sim.workers);
    } else if (s_ana->parsed()) {
      set_workers(ana.workers);
      result = hic::cmd_analyze(ana_input, optional_config(ana), ana.out, ana.workers);
    } else if (s_cmp->parsed()) {
      set_workers(cmp.workers);
      result = hic::cmd_compare_gating(required_config(cmp), cmp.out, cmp.workers);
    } else if (s_tag->parsed()) {
      set_workers(tag.workers);
      std::optional<std::filesystem::path> input;
      if (!tag_input.empty()) input = tag_input;
      auto cfg = input ? optional_config(tag) : std::optional<hic::RunConfig>(required_config(tag));
      result = hic::cmd_timetag(input, cfg, tag.out, tag.workers);
    } else if (s_e2e->parsed()) {
      set_workers(e2e.workers);
      result = hic::cmd_end_to_end(required_config(e2e), e2e.out, e2e.workers);
    }
    std::cout << result.string() << '\n';
    return kOk;
  } catch (const hic::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kValidation;
  } catch (const hic::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const hic::AnalysisError& e) {
    std::cerr << "analysis failed: " << e.what() << '\n';
    return kAnalysis;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAnalysis;
  }
}
