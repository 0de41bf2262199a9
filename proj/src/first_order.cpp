#include "meshtime/first_order.hpp"

#include <cmath>
#include <numbers>

#include "meshtime/common.hpp"
#include "meshtime/graph_builder.hpp"

namespace meshtime::baseline {

FirstOrderResult first_order_delays(const synth::MeshNetlist& net,
                                    std::span<const oracle::DriverStimulus> stimuli,
                                    double res_limit) {
  if (stimuli.empty()) throw DataError("first-order model needs at least one buffer in " + net.id);
  if (res_limit <= 0.0) res_limit = net.mesh_segment_res;
  if (!(res_limit > 0.0)) throw DataError("netlist " + net.id + " has no mesh segment resistance");

  // Path resistances are taken from the stimuli so callers can perturb them.
  synth::MeshNetlist drv = net;
  drv.drivers.clear();
  for (const auto& s : stimuli) drv.drivers.push_back({s.node, s.out_res, 0.0, 0.0});
  const graph::ResistorGraph rg(drv);
  const graph::ResistancePaths paths = graph::shortest_res_paths(drv, rg);

  FirstOrderResult out;
  out.delay.reserve(net.sink_nodes.size());
  for (const auto& s : net.sink_nodes) {
    const std::vector<double> per = paths.per_buffer(static_cast<std::size_t>(s.node));
    double g_sum = 0.0, arrival = 0.0;
    for (std::size_t b = 0; b < per.size(); ++b) {
      if (!std::isfinite(per[b])) continue;
      g_sum += 1.0 / per[b];
      arrival += stimuli[b].t_start / per[b];
    }
    if (!(g_sum > 0.0)) throw DataError("sink unreachable from every buffer in " + net.id);
    arrival /= g_sum;
    const double total_res = graph::compute_total_res(per);
    const double region_cap = rg.region_cap(s.node, res_limit);
    // ohm * fF = 1e-3 ps
    out.delay.push_back(arrival + std::numbers::ln2 * total_res * region_cap * 1e-3);
  }
  return out;
}

}  // namespace meshtime::baseline
