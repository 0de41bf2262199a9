#pragma once

// First-order baseline: superposition-weighted buffer arrival plus a
// one-pole ln2 * R * C term per sink. No slew.

#include <span>
#include <vector>

#include "meshtime/mesh_synth.hpp"
#include "meshtime/rc_oracle.hpp"

namespace meshtime::baseline {

struct FirstOrderResult {
  std::vector<double> delay;  // ps, per sink in netlist order
};

// arrival = sum_b w_b * t_start(b), with w_b proportional to the conductance
// of buffer b's best path to the sink; the RC term uses the parallel
// total_res and the region_cap within `res_limit` (<= 0: one mesh segment).
FirstOrderResult first_order_delays(const synth::MeshNetlist& net,
                                    std::span<const oracle::DriverStimulus> stimuli,
                                    double res_limit = 0.0);

}  // namespace meshtime::baseline
