#include "hic/frame_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "hic/errors.hpp"

namespace hic {

Json frame_to_json(const FrameRecord& f, bool with_truth) {
  Json j;
  j["frame_id"] = f.frame_id;
  j["gate"] = {{"open_ns", f.gate.open_t}, {"close_ns", f.gate.close_t}, {"cause", to_string(f.gate.cause)}};
  Json spots = Json::array();
  for (const auto& s : f.spots) spots.push_back({{"x", s.x}, {"y", s.y}, {"amplitude", s.amplitude}, {"sigma", s.sigma}});
  j["spots"] = std::move(spots);
  Json pulses = Json::array();
  for (const auto& p : f.pulses) pulses.push_back({{"t_ns", p.t_ns}, {"amplitude", p.amplitude}});
  j["pulses"] = std::move(pulses);
  if (with_truth) {
    Json truth = Json::array();
    for (const auto& t : f.truth) {
      Json e = {{"t_ns", t.t_ns}, {"kx", t.k.kx}, {"ky", t.k.ky}, {"origin", to_string(t.origin)}};
      e["pair_id"] = t.pair_id ? Json(*t.pair_id) : Json(nullptr);
      truth.push_back(std::move(e));
    }
    j["truth"] = std::move(truth);
  }
  return j;
}

FrameRecord frame_from_json(const Json& j) {
  FrameRecord f;
  f.frame_id = j.at("frame_id").get<std::uint64_t>();
  const auto& g = j.at("gate");
  f.gate.open_t = g.at("open_ns").get<double>();
  f.gate.close_t = g.at("close_ns").get<double>();
  f.gate.cause = close_cause_from_string(g.at("cause").get<std::string>());
  for (const auto& s : j.at("spots"))
    f.spots.push_back({s.at("x").get<double>(), s.at("y").get<double>(), s.at("amplitude").get<double>(),
                       s.at("sigma").get<double>()});
  for (const auto& p : j.at("pulses")) f.pulses.push_back({p.at("t_ns").get<double>(), p.at("amplitude").get<double>()});
  if (auto it = j.find("truth"); it != j.end()) {
    for (const auto& t : *it) {
      TruthPhoton tp;
      tp.t_ns = t.at("t_ns").get<double>();
      tp.k = {t.at("kx").get<double>(), t.at("ky").get<double>()};
      tp.origin = origin_from_string(t.at("origin").get<std::string>());
      if (!t.at("pair_id").is_null()) tp.pair_id = t.at("pair_id").get<std::uint64_t>();
      f.truth.push_back(tp);
    }
  }
  for (std::size_t i = 1; i < f.pulses.size(); ++i)
    if (f.pulses[i].t_ns < f.pulses[i - 1].t_ns) throw std::invalid_argument("pulses not sorted by time");
  return f;
}

FrameWriter::FrameWriter(std::ostream& os, const Json& config_echo, bool with_truth) : os_(os), with_truth_(with_truth) {
  Json header = {{"format", kFrameFormat}, {"version", kFrameFormatVersion}, {"config", config_echo}};
  os_ << header.dump() << '\n';
  if (!os_) throw IoError("failed to write frame header");
}

void FrameWriter::write(const FrameRecord& frame) {
  if (last_id_ && frame.frame_id <= *last_id_) throw SimulationError("frame ids must increase");
  last_id_ = frame.frame_id;
  os_ << frame_to_json(frame, with_truth_).dump() << '\n';
  if (!os_) throw IoError("failed to write frame " + std::to_string(frame.frame_id));
  ++written_;
}

FrameFile read_frames(std::istream& is) {
  FrameFile out;
  std::string line;
  if (!std::getline(is, line)) throw IoError("frame file is empty");
  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::exception&) {
    throw IoError("frame file header is not JSON");
  }
  if (!header.is_object() || header.value("format", "") != kFrameFormat) throw IoError("not a hic-frames file");
  const std::string version = header.value("version", "");
  int major = -1;
  try {
    major = std::stoi(version.substr(0, version.find('.')));
  } catch (const std::exception&) {
  }
  if (major != kFrameFormatMajor)
    throw IoError("unsupported frame format version \"" + version + "\" (reader supports " + kFrameFormatVersion + ")");
  out.config = header.value("config", Json::object());

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ++out.frame_lines;
    try {
      auto f = frame_from_json(Json::parse(line));
      if (!out.frames.empty() && f.frame_id <= out.frames.back().frame_id)
        throw IoError("frame ids not increasing at frame " + std::to_string(f.frame_id));
      out.frames.push_back(std::move(f));
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      ++out.corrupt_lines;
    }
  }
  if (is.bad()) throw IoError("read error in frame file");
  if (out.corrupt_lines * 100 > out.frame_lines)
    throw IoError(std::to_string(out.corrupt_lines) + " of " + std::to_string(out.frame_lines) +
                  " frame lines are corrupt (limit 1%)");
  if (out.frames.empty()) throw IoError("frame file contains no frames");
  return out;
}

FrameFile read_frames_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return read_frames(in);
}

}  // namespace hic
