#pragma once

// Transient simulation of a multi-driver RC mesh: the ground truth for the
// delay/slew labels.
//
//   C dv/dt = -G v + b(t)
//
// integrated with the trapezoidal rule at a fixed step (sources averaged
// exactly over each step), so the SPD matrix (C/dt + G/2) is factored once.
// Drivers are linear ramps from 0 to v_final behind their output resistance.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "meshtime/graph_builder.hpp"
#include "meshtime/mesh_synth.hpp"

namespace meshtime::oracle {

struct DriverStimulus {
  int node = 0;
  double out_res = 0.0;  // ohm
  double t_start = 0.0;  // ps
  double ramp = 0.0;     // ps, 0 -> v_final transition time
  double v_final = 1.0;

  double value_at(double t) const;
};

// t_start = input_delay + intrinsic delay, ramp = input_slew * slew gain.
std::vector<DriverStimulus> make_stimuli(const synth::MeshNetlist& net);

struct SimOptions {
  double dt = 0.0;     // <= 0: automatic
  double t_end = 0.0;  // <= 0: automatic
  double delay_threshold = 0.5;
  double slew_low = 0.1;
  double slew_high = 0.9;
  std::vector<int> probe_nodes;  // full waveforms recorded for these
};

struct TimeStepPlan {
  double dt = 0.0;
  double t_end = 0.0;
  double tau = 0.0;  // the time-constant estimate both are derived from
};

// dt = min(1 ps, tau / 10), t_end = last ramp end + 10 tau, where tau is the
// total capacitance shared across the drivers behind the worst sink's
// driving resistance.
TimeStepPlan plan_timestep(const synth::MeshNetlist& net, std::span<const DriverStimulus> stimuli);

struct SimResult {
  std::vector<double> delay;  // ps, per sink in netlist order, from t = 0
  std::vector<double> slew;   // ps, low -> high threshold
  std::vector<double> final_voltage;
  std::size_t steps = 0;
  double dt = 0.0;
  double t_end = 0.0;
  bool extended = false;
  std::vector<double> probe_times;
  std::vector<std::vector<double>> probes;  // [probe][sample]
};

SimResult simulate(const synth::MeshNetlist& net, std::span<const DriverStimulus> stimuli,
                   const SimOptions& opts = {});

// Runs the oracle and attaches labels to the graph (sink order must match).
SimResult label_graph(graph::MeshGraph& g, const synth::MeshNetlist& net, const SimOptions& opts = {});

// Parallel across designs; errors carry the design id.
void label_dataset(std::span<const synth::MeshNetlist> nets, std::span<graph::MeshGraph> graphs,
                   int jobs = 0);

// CSV: time_ps,<node>,<node>,...
void write_waveform_csv(std::ostream& os, const SimResult& r, std::span<const int> nodes);

}  // namespace meshtime::oracle
