// Serial reference vs OpenMP kernel timings, with an equality check on each
// pair of outputs.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>

#include <omp.h>

#include "hic/analysis.hpp"
#include "hic/config.hpp"
#include "hic/pipeline.hpp"
#include "hic/timetag.hpp"

namespace {

template <class F>
double time_s(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-22s serial %8.3f s  parallel %8.3f s  speedup %5.2fx  %s\n", name, serial, parallel,
              serial / parallel, same ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t frames = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 200000;
  std::printf("threads: %d, frames: %llu\n", omp_get_max_threads(), static_cast<unsigned long long>(frames));
  auto cfg = hic::paper_like_config();
  cfg.n_frames = frames;
  const auto setup = cfg.setup();

  std::vector<std::size_t> a, b;
  const double ts = time_s([&] {
    hic::run_batch_serial(setup, frames, cfg.seed, [&](hic::FrameRecord&& f) { a.push_back(f.spots.size()); });
  });
  std::vector<hic::FrameRecord> recs;
  const double tp = time_s([&] {
    hic::run_batch(setup, frames, cfg.seed, [&](hic::FrameRecord&& f) {
      b.push_back(f.spots.size());
      recs.push_back(std::move(f));
    });
  });
  report("run_batch", ts, tp, a == b);

  std::vector<hic::FramePhotons> photons;
  for (const auto& r : recs) photons.push_back(hic::to_frame_photons(r, cfg.optics));
  const auto geo = cfg.geometry();
  const auto& filt = cfg.analysis.crosstalk;
  hic::JointHistogram hs, hp;
  const double js = time_s([&] { hs = hic::accumulate_joint_serial(photons, hic::HistAxis::SumPlane, geo, filt); });
  const double jp = time_s([&] { hp = hic::accumulate_joint(photons, hic::HistAxis::SumPlane, geo, filt); });
  report("accumulate_joint", js, jp, hs.counts == hp.counts && hs.accepted_pairs == hp.accepted_pairs);

  const double as = time_s([&] { hs = hic::accumulate_accidentals_serial(photons, hic::HistAxis::SumPlane, geo, filt); });
  const double ap = time_s([&] { hp = hic::accumulate_accidentals(photons, hic::HistAxis::SumPlane, geo, filt); });
  report("accumulate_accidentals", as, ap, hs.counts == hp.counts && hs.scale == hp.scale);

  const auto pairs = hic::collect_single_photon_pairs(recs, cfg.readout.discriminator_threshold);
  auto opt = cfg.sweep_options();
  hic::SweepResult rs, rp;
  const double ss = time_s([&] { rs = hic::accuracy_sweep_serial(pairs, opt); });
  const double sp = time_s([&] { rp = hic::accuracy_sweep(pairs, opt); });
  bool same = rs.curves.size() == rp.curves.size();
  for (std::size_t i = 0; same && i < rs.curves.size(); ++i) {
    same = rs.curves[i].points.size() == rp.curves[i].points.size();
    for (std::size_t k = 0; same && k < rs.curves[i].points.size(); ++k)
      same = rs.curves[i].points[k].correct == rp.curves[i].points[k].correct &&
             rs.curves[i].points[k].rejected == rp.curves[i].points[k].rejected;
  }
  report("accuracy_sweep", ss, sp, same);
  return 0;
}
