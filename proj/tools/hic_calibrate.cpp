// Fits the unpublished rates and noise levels to the reported frame
// statistics and tagging accuracy; prints the tuned config as JSON.
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "hic/calibration.hpp"
#include "hic/errors.hpp"

int main(int argc, char** argv) {
  CLI::App app{"calibrate the paper-like configuration"};
  std::string start_path, out_path;
  hic::CalibrationOptions opt;
  app.add_option("--config", start_path, "starting config (paper-like preset when omitted)");
  app.add_option("--out", out_path, "write the calibrated config here");
  app.add_option("--gating-frames", opt.gating_frames)->capture_default_str();
  app.add_option("--timetag-frames", opt.timetag_frames)->capture_default_str();
  app.add_option("--rounds", opt.rounds)->capture_default_str();
  app.add_option("--workers", opt.workers)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto start = start_path.empty() ? hic::paper_like_config() : hic::load_config(start_path);
    const auto rep = hic::calibrate(start, hic::CalibrationTargets{}, opt, &std::cerr);
    const auto text = hic::to_json(rep.config).dump(2) + "\n";
    if (out_path.empty()) {
      std::cout << text;
    } else {
      std::ofstream out(out_path);
      out << text;
      if (!out) throw hic::IoError("cannot write " + out_path);
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
