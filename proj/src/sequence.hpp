#pragma once
#include <string>
#include <vector>
#include "spin_core.hpp"

namespace mdd {

enum class Method { dressed, mdd };

struct ProtocolConfig {
  Method method = Method::dressed;
  double t_s = 20e-3;    // s; for dressed runs this is the total span
  double t_pi = 6.3e-3;  // s
  int n_cycles = 1;
  double phi_s = 0.0;
  double phi_pi = 0.0;
  bool sample_every_segment = true;
};

struct TimedSegment {
  SegmentKind kind;
  double duration;  // s
};

struct ScheduledSequence {
  std::vector<TimedSegment> segments;
  double total_wall_time = 0.0;
  double total_signal_time = 0.0;
  double phi_s = 0.0;
  double phi_pi = 0.0;
};

// one uninterrupted signal segment, dressing on throughout
ScheduledSequence build_dressed_sequence(double total_time, double phi_s);

// per cycle: (signal t_s, pi t_pi, signal t_s, pi t_pi), repeated n_cycles
// times; no leading half interval
ScheduledSequence build_mdd_sequence(double t_s, double t_pi, int n_cycles,
                                     double phi_s, double phi_pi);

// t_pi = sqrt(2) pi / omega_pi: the pulse inverts |0><->|D| whose
// coupling is omega_pi / sqrt(2)
double pi_pulse_duration(double omega_pi);

// (wall_time, signal_time) at every segment boundary, starting at (0,0);
// signal time advances only during signal segments
std::vector<std::pair<double, double>> signal_time_axis(const ScheduledSequence& seq);

// one segment per line: "<kind> <duration_s>"
std::string dump_sequence(const ScheduledSequence& seq);

} // namespace mdd
