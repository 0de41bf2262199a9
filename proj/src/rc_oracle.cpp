#include "meshtime/rc_oracle.hpp"

#include <omp.h>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <queue>

#include "meshtime/common.hpp"

namespace meshtime::oracle {

using synth::MeshNetlist;

double DriverStimulus::value_at(double t) const {
  if (t <= t_start) return 0.0;
  if (t >= t_start + ramp) return v_final;
  return v_final * (t - t_start) / ramp;
}

std::vector<DriverStimulus> make_stimuli(const MeshNetlist& net) {
  std::vector<DriverStimulus> out;
  out.reserve(net.drivers.size());
  for (const auto& d : net.drivers) {
    DriverStimulus s;
    s.node = d.node;
    s.out_res = d.out_res;
    s.t_start = std::max(0.0, d.input_delay + net.tech.buf_intrinsic_delay);
    s.ramp = std::max(1e-6, d.input_slew * net.tech.buf_slew_gain);
    out.push_back(s);
  }
  return out;
}

namespace {

// Integral of the source voltage from 0 to t.
double ramp_integral(const DriverStimulus& s, double t) {
  if (t <= s.t_start) return 0.0;
  if (t >= s.t_start + s.ramp) return s.v_final * (0.5 * s.ramp + (t - s.t_start - s.ramp));
  const double x = t - s.t_start;
  return s.v_final * x * x / (2.0 * s.ramp);
}

// Conductances are carried in 1/kohm so that kohm * fF = ps.
constexpr double kOhmToKOhm = 1e-3;

std::vector<double> driving_resistance(const MeshNetlist& net, std::span<const DriverStimulus> stim) {
  const std::size_t n = net.nodes.size();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& r : net.resistors) {
    adj[r.a].emplace_back(r.b, r.ohms);
    adj[r.b].emplace_back(r.a, r.ohms);
  }
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  for (const auto& s : stim) {
    if (s.out_res < dist[s.node]) {
      dist[s.node] = s.out_res;
      pq.emplace(s.out_res, s.node);
    }
  }
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (const auto& [v, w] : adj[u]) {
      if (d + w < dist[v]) {
        dist[v] = d + w;
        pq.emplace(dist[v], v);
      }
    }
  }
  return dist;
}

}  // namespace

TimeStepPlan plan_timestep(const MeshNetlist& net, std::span<const DriverStimulus> stimuli) {
  if (stimuli.empty()) throw DataError("netlist " + net.id + " has no driver stimuli");
  const std::vector<double> rdrive = driving_resistance(net, stimuli);
  double worst = 0.0;
  if (net.sink_nodes.empty()) {
    for (double r : rdrive) worst = std::max(worst, r);
  } else {
    for (const auto& s : net.sink_nodes) worst = std::max(worst, rdrive[s.node]);
  }
  if (!std::isfinite(worst)) throw DataError("netlist " + net.id + " has nodes unreachable from any driver");
  TimeStepPlan plan;
  plan.tau = net.total_cap() * worst * kOhmToKOhm / static_cast<double>(stimuli.size());
  plan.dt = std::min(1.0, plan.tau / 10.0);
  if (!(plan.dt > 0.0)) throw DataError("netlist " + net.id + " has no capacitance");
  double last = 0.0;
  for (const auto& s : stimuli) last = std::max(last, s.t_start + s.ramp);
  plan.t_end = last + 10.0 * plan.tau;
  return plan;
}

SimResult simulate(const MeshNetlist& net, std::span<const DriverStimulus> stimuli, const SimOptions& opts) {
  const auto n = static_cast<Eigen::Index>(net.nodes.size());
  if (n == 0) throw DataError("netlist " + net.id + " is empty");
  if (stimuli.empty()) throw DataError("netlist " + net.id + " has no driver stimuli");
  for (const auto& s : stimuli) {
    if (s.node < 0 || s.node >= n || !(s.out_res > 0.0) || !(s.ramp > 0.0) || s.t_start < 0.0) {
      throw DataError("invalid driver stimulus in " + net.id);
    }
  }

  TimeStepPlan plan = plan_timestep(net, stimuli);
  if (opts.dt > 0.0) plan.dt = opts.dt;
  if (opts.t_end > 0.0) plan.t_end = opts.t_end;
  const double dt = plan.dt;

  std::vector<Eigen::Triplet<double>> g_trip;
  g_trip.reserve(net.resistors.size() * 4 + stimuli.size() + static_cast<std::size_t>(n));
  for (const auto& r : net.resistors) {
    const double g = 1.0 / (r.ohms * kOhmToKOhm);
    g_trip.emplace_back(r.a, r.a, g);
    g_trip.emplace_back(r.b, r.b, g);
    g_trip.emplace_back(r.a, r.b, -g);
    g_trip.emplace_back(r.b, r.a, -g);
  }
  std::vector<double> g_drv(stimuli.size());
  for (std::size_t k = 0; k < stimuli.size(); ++k) {
    g_drv[k] = 1.0 / (stimuli[k].out_res * kOhmToKOhm);
    g_trip.emplace_back(stimuli[k].node, stimuli[k].node, g_drv[k]);
  }
  Eigen::SparseMatrix<double> G(n, n);
  G.setFromTriplets(g_trip.begin(), g_trip.end());

  std::vector<Eigen::Triplet<double>> c_trip;
  for (const auto& gc : net.grounded_caps) c_trip.emplace_back(gc.node, gc.node, gc.cap / dt);
  Eigen::SparseMatrix<double> Cdt(n, n);
  Cdt.setFromTriplets(c_trip.begin(), c_trip.end());

  const Eigen::SparseMatrix<double> A = Cdt + 0.5 * G;
  const Eigen::SparseMatrix<double> B = Cdt - 0.5 * G;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt(A);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0) {
    throw DataError("system matrix of " + net.id + " is not positive definite");
  }

  const std::size_t ns = net.sink_nodes.size();
  const double thr[3] = {opts.slew_low, opts.delay_threshold, opts.slew_high};
  std::vector<std::array<double, 3>> cross(ns, {-1.0, -1.0, -1.0});
  std::vector<double> prev(ns, 0.0);

  SimResult res;
  res.dt = dt;
  res.probes.resize(opts.probe_nodes.size());
  auto record = [&](double t, const Eigen::VectorXd& v) {
    if (opts.probe_nodes.empty()) return;
    res.probe_times.push_back(t);
    for (std::size_t p = 0; p < opts.probe_nodes.size(); ++p) res.probes[p].push_back(v[opts.probe_nodes[p]]);
  };

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd b_avg = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd rhs(n);
  // Step-averaged source. Integrating the piecewise-linear ramps exactly
  // keeps a step input from lagging by half a step.
  auto fill_source = [&](double t0, double t1) {
    for (std::size_t k = 0; k < stimuli.size(); ++k) b_avg[stimuli[k].node] = 0.0;
    for (std::size_t k = 0; k < stimuli.size(); ++k) {
      b_avg[stimuli[k].node] += g_drv[k] * (ramp_integral(stimuli[k], t1) - ramp_integral(stimuli[k], t0)) / (t1 - t0);
    }
  };
  record(0.0, v);

  std::size_t step = 0;
  auto run_until = [&](double t_stop) {
    const auto target = static_cast<std::size_t>(std::ceil(t_stop / dt - 1e-9));
    for (; step < target; ++step) {
      const double t0 = dt * static_cast<double>(step);
      const double t1 = dt * static_cast<double>(step + 1);
      fill_source(t0, t1);
      rhs.noalias() = B * v;
      rhs += b_avg;
      v = ldlt.solve(rhs);
      for (std::size_t s = 0; s < ns; ++s) {
        const double cur = v[net.sink_nodes[s].node];
        for (int k = 0; k < 3; ++k) {
          if (cross[s][k] < 0.0 && cur >= thr[k]) {
            const double frac = cur > prev[s] ? (thr[k] - prev[s]) / (cur - prev[s]) : 1.0;
            cross[s][k] = t0 + frac * dt;
          }
        }
        prev[s] = cur;
      }
      record(t1, v);
    }
  };
  auto settled = [&] {
    for (std::size_t s = 0; s < ns; ++s) {
      if (cross[s][2] < 0.0 || prev[s] < 0.99) return false;
    }
    return true;
  };

  run_until(plan.t_end);
  res.t_end = plan.t_end;
  if (!settled()) {
    res.extended = true;
    res.t_end = 4.0 * plan.t_end;
    run_until(res.t_end);
    if (!settled()) {
      throw NumericalError("sinks of " + net.id + " did not settle by " + std::to_string(res.t_end) + " ps");
    }
  }
  res.steps = step;
  res.delay.resize(ns);
  res.slew.resize(ns);
  res.final_voltage = prev;
  for (std::size_t s = 0; s < ns; ++s) {
    res.delay[s] = cross[s][1];
    res.slew[s] = cross[s][2] - cross[s][0];
  }
  return res;
}

SimResult label_graph(graph::MeshGraph& g, const MeshNetlist& net, const SimOptions& opts) {
  const auto stimuli = make_stimuli(net);
  SimResult r = simulate(net, stimuli, opts);
  graph::attach_labels(g, r.delay, r.slew);
  return r;
}

void label_dataset(std::span<const MeshNetlist> nets, std::span<graph::MeshGraph> graphs, int jobs) {
  if (nets.size() != graphs.size()) throw DataError("netlist/graph count mismatch");
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  std::vector<std::string> errors(nets.size());
  std::vector<char> data_error(nets.size(), 0);
  const auto count = static_cast<std::ptrdiff_t>(nets.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      label_graph(graphs[i], nets[i]);
    } catch (const DataError& e) {
      errors[i] = e.what();
      data_error[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    const std::string msg = "labeling " + nets[i].id + ": " + errors[i];
    if (data_error[i]) throw DataError(msg);
    throw NumericalError(msg);
  }
}

void write_waveform_csv(std::ostream& os, const SimResult& r, std::span<const int> nodes) {
  os << "time_ps";
  for (int n : nodes) os << ",v" << n;
  os << '\n';
  for (std::size_t k = 0; k < r.probe_times.size(); ++k) {
    os << r.probe_times[k];
    for (std::size_t p = 0; p < r.probes.size(); ++p) os << ',' << r.probes[p][k];
    os << '\n';
  }
}

}  // namespace meshtime::oracle
