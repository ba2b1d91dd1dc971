#include "sequence.hpp"
#include <cstdio>
#include <stdexcept>
#include "units.hpp"

namespace mdd {

ScheduledSequence build_dressed_sequence(double total_time, double phi_s) {
  if (total_time <= 0.0) throw std::domain_error("total_time must be > 0");
  ScheduledSequence seq;
  seq.segments.push_back({SegmentKind::signal, total_time});
  seq.total_wall_time = total_time;
  seq.total_signal_time = total_time;
  seq.phi_s = phi_s;
  return seq;
}

ScheduledSequence build_mdd_sequence(double t_s, double t_pi, int n_cycles,
                                     double phi_s, double phi_pi) {
  if (t_s <= 0.0 || t_pi <= 0.0) throw std::domain_error("segment durations must be > 0");
  if (n_cycles < 1) throw std::domain_error("n_cycles must be >= 1");
  ScheduledSequence seq;
  seq.segments.reserve(static_cast<std::size_t>(n_cycles) * 4);
  for (int c = 0; c < n_cycles; ++c) {
    seq.segments.push_back({SegmentKind::signal, t_s});
    seq.segments.push_back({SegmentKind::pi_pulse, t_pi});
    seq.segments.push_back({SegmentKind::signal, t_s});
    seq.segments.push_back({SegmentKind::pi_pulse, t_pi});
  }
  seq.total_signal_time = 2.0 * t_s * n_cycles;
  seq.total_wall_time = 2.0 * (t_s + t_pi) * n_cycles;
  seq.phi_s = phi_s;
  seq.phi_pi = phi_pi;
  return seq;
}

double pi_pulse_duration(double omega_pi) {
  if (omega_pi <= 0.0) throw std::domain_error("omega_pi must be > 0");
  return std::sqrt(2.0) * pi / omega_pi;
}

std::vector<std::pair<double, double>> signal_time_axis(const ScheduledSequence& seq) {
  std::vector<std::pair<double, double>> axis;
  axis.reserve(seq.segments.size() + 1);
  double wall = 0.0, sig = 0.0;
  axis.emplace_back(wall, sig);
  for (const auto& seg : seq.segments) {
    wall += seg.duration;
    if (seg.kind == SegmentKind::signal) sig += seg.duration;
    axis.emplace_back(wall, sig);
  }
  return axis;
}

std::string dump_sequence(const ScheduledSequence& seq) {
  std::string out;
  char line[64];
  for (const auto& seg : seq.segments) {
    const char* kind = seg.kind == SegmentKind::signal ? "signal"
                     : seg.kind == SegmentKind::pi_pulse ? "pi" : "free";
    std::snprintf(line, sizeof(line), "%s %.9g\n", kind, seg.duration);
    out += line;
  }
  return out;
}

} // namespace mdd
