#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "doctest.h"
#include "meshtime/graph_builder.hpp"
#include "meshtime/rc_oracle.hpp"
#include "oracle_checks.hpp"
#include "support.hpp"

using namespace meshtime;
using namespace meshtime::oracle;
using synth::MeshNetlist;
using synth::ResistorKind;
using testsupport::exact_response;
using testsupport::single_rc;

TEST_CASE("single RC: ln2 RC delay and ln9 RC slew") {
  const auto e = testsupport::single_rc_errors({10.0, 200.0, 1000.0}, {1.0, 50.0, 100.0});
  CHECK(e.delay < 0.01);
  CHECK(e.slew < 0.01);
}

TEST_CASE("1 kohm into 1 pF") {
  const MeshNetlist net = single_rc(1000.0, 1000.0);
  const auto stim = make_stimuli(net);
  const SimResult res = simulate(net, stim);
  CHECK(res.delay[0] - stim[0].t_start == doctest::Approx(693.1).epsilon(0.01));
  CHECK(res.slew[0] == doctest::Approx(2197.2).epsilon(0.01));
}

TEST_CASE("stimulus examples") {
  DriverStimulus s{0, 60.0, 10.0, 20.0, 1.0};
  CHECK(s.value_at(0.0) == 0.0);
  CHECK(s.value_at(10.0) == 0.0);
  CHECK(s.value_at(20.0) == doctest::Approx(0.5));
  CHECK(s.value_at(30.0) == 1.0);
  CHECK(s.value_at(1e6) == 1.0);

  MeshNetlist net = single_rc(60.0, 10.0);
  net.drivers[0].input_delay = 5.0;
  net.drivers[0].input_slew = 40.0;
  const auto stim = make_stimuli(net);
  CHECK(stim[0].t_start == doctest::Approx(5.0 + net.tech.buf_intrinsic_delay));
  CHECK(stim[0].ramp == doctest::Approx(40.0 * net.tech.buf_slew_gain));
}

TEST_CASE("time step plan") {
  const MeshNetlist net = single_rc(1000.0, 100.0);
  const auto stim = make_stimuli(net);
  const TimeStepPlan p = plan_timestep(net, stim);
  const double tau = 100.0 * (1000.0 + 1e-3) * 1e-3;
  CHECK(p.tau == doctest::Approx(tau));
  CHECK(p.dt == 1.0);
  CHECK(p.t_end == doctest::Approx(stim[0].t_start + stim[0].ramp + 10 * tau));

  const MeshNetlist fast = single_rc(10.0, 5.0);
  const TimeStepPlan q = plan_timestep(fast, make_stimuli(fast));
  CHECK(q.dt == doctest::Approx(q.tau / 10));
}

TEST_CASE("transient matches a dense matrix-exponential solution on random networks") {
  const double worst = testsupport::expm_max_error(31, 10);
  MESSAGE("max |v - v_exact| = " << worst);
  CHECK(worst <= 0.005);
}

TEST_CASE("voltages stay in range and sinks settle") {
  const auto s = synth::synthesize(synth::SizeClass::Small, synth::MeshStyle::NonUniform, 5);
  SimOptions opts;
  for (std::size_t i = 0; i < s.netlist.nodes.size(); i += 3) opts.probe_nodes.push_back(static_cast<int>(i));
  const SimResult r = simulate(s.netlist, make_stimuli(s.netlist), opts);
  double lo = 1.0, hi = 0.0;
  for (const auto& w : r.probes) {
    for (double v : w) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  CHECK(lo >= -1e-3);
  CHECK(hi <= 1.0 + 1e-3);
  for (double v : r.final_voltage) CHECK(v >= 0.99);
  for (std::size_t k = 0; k < r.delay.size(); ++k) {
    CHECK(r.delay[k] > 0.0);
    CHECK(r.slew[k] > 0.0);
  }
}

TEST_CASE("halving the time step moves delays by less than 0.2 ps") {
  for (auto style : {synth::MeshStyle::Uniform, synth::MeshStyle::Fixed50um}) {
    const auto s = synth::synthesize(synth::SizeClass::Small, style, 8);
    const auto stim = make_stimuli(s.netlist);
    const SimResult a = simulate(s.netlist, stim);
    SimOptions half;
    half.dt = a.dt / 2;
    const SimResult b = simulate(s.netlist, stim, half);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.delay.size(); ++k) worst = std::max(worst, std::abs(a.delay[k] - b.delay[k]));
    CHECK(worst < 0.2);
  }
}

TEST_CASE("shifting every driver by the same time shifts every delay") {
  const auto s = synth::synthesize(synth::SizeClass::Small, synth::MeshStyle::Uniform, 2);
  auto stim = make_stimuli(s.netlist);
  SimOptions opts;
  opts.dt = 0.25;
  const SimResult a = simulate(s.netlist, stim, opts);
  for (auto& d : stim) d.t_start += 10.0;
  const SimResult b = simulate(s.netlist, stim, opts);
  for (std::size_t k = 0; k < a.delay.size(); ++k) {
    CHECK(b.delay[k] - a.delay[k] == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(b.slew[k] == doctest::Approx(a.slew[k]).epsilon(1e-6));
  }
}

TEST_CASE("a parallel path with no capacitance speeds up a sink") {
  MeshNetlist net;
  net.id = "loop";
  net.nodes = {{0, 0}, {1, 0}, {2, 0}};
  net.resistors = {{0, 1, 200.0, 0.0, ResistorKind::Mesh}, {1, 2, 200.0, 0.0, ResistorKind::Mesh}};
  net.grounded_caps = {{1, 20.0}, {2, 40.0}};
  net.drivers = {{0, 100.0, 0.0, 10.0}};
  net.sink_nodes = {{2, 0}};
  net.mesh_segment_res = 200.0;
  const double before = simulate(net, make_stimuli(net)).delay[0];
  net.resistors.push_back({0, 2, 600.0, 0.0, ResistorKind::Mesh});
  const double after = simulate(net, make_stimuli(net)).delay[0];
  CHECK(after < before);
}

TEST_CASE("symmetric network gives symmetric delays") {
  // B0 - a - b - B1 with sinks on a and b.
  MeshNetlist net;
  net.id = "sym";
  net.nodes = {{0, 0}, {3, 0}, {1, 0}, {2, 0}};
  net.resistors = {{0, 2, 50.0, 0.0, ResistorKind::Mesh},
                   {2, 3, 80.0, 0.0, ResistorKind::Mesh},
                   {3, 1, 50.0, 0.0, ResistorKind::Mesh}};
  net.grounded_caps = {{0, 5.0}, {1, 5.0}, {2, 30.0}, {3, 30.0}};
  net.drivers = {{0, 60.0, 3.0, 20.0}, {1, 60.0, 3.0, 20.0}};
  net.sink_nodes = {{2, 0}, {3, 1}};
  net.mesh_segment_res = 50.0;
  const SimResult r = simulate(net, make_stimuli(net));
  CHECK(r.delay[0] == doctest::Approx(r.delay[1]).epsilon(1e-9));
  CHECK(r.slew[0] == doctest::Approx(r.slew[1]).epsilon(1e-9));
}

TEST_CASE("delays grow with driver resistance and load") {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    MeshNetlist net = testsupport::random_netlist(rng, 10, 2, 3, 4);
    const auto stim = make_stimuli(net);
    const SimResult base = simulate(net, stim);

    auto weak = stim;
    for (auto& s : weak) s.out_res *= 1.5;
    SimOptions same;
    same.dt = base.dt;
    const SimResult w = simulate(net, weak, same);
    for (std::size_t k = 0; k < base.delay.size(); ++k) CHECK(w.delay[k] > base.delay[k]);

    MeshNetlist heavy = net;
    for (auto& c : heavy.grounded_caps) c.cap *= 1.5;
    const SimResult h = simulate(heavy, stim, same);
    for (std::size_t k = 0; k < base.delay.size(); ++k) CHECK(h.delay[k] > base.delay[k]);
  }
}

TEST_CASE("gcd-scale design labels in under a second") {
  Rng rng(9);
  synth::Design d;
  d.id = "gcd";
  d.width = d.height = std::sqrt(1083.0);
  for (int i = 0; i < 35; ++i) d.sinks.push_back({rng.uniform(0, d.width), rng.uniform(0, d.height), rng.uniform(1, 4)});
  const synth::TechParams tech;
  const auto m = synth::place_buffers(d, synth::size_mesh(d, synth::MeshStyle::Uniform), tech);
  const MeshNetlist net = synth::build_netlist(d, m, tech, synth::assign_input_arrivals(m, tech, 1));
  graph::MeshGraph g = graph::build_graph(net, true);
  const auto t0 = std::chrono::steady_clock::now();
  label_graph(g, net);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 1.0);
  CHECK(g.labels.size() == 35);
}

TEST_CASE("label_graph attaches labels in sink order") {
  const auto s = synth::synthesize(synth::SizeClass::Small, synth::MeshStyle::Uniform, 4);
  graph::MeshGraph g = graph::build_graph(s.netlist, true);
  const SimResult r = label_graph(g, s.netlist);
  const auto sinks = g.sink_nodes();
  REQUIRE(g.labels.size() == sinks.size());
  for (std::size_t k = 0; k < sinks.size(); ++k) {
    CHECK(g.labels[k].node == sinks[k]);
    CHECK(g.labels[k].delay_ps == r.delay[k]);
    CHECK(g.labels[k].slew_ps == r.slew[k]);
  }
}

TEST_CASE("label_dataset matches serial labeling and names failing designs") {
  std::vector<MeshNetlist> nets;
  std::vector<graph::MeshGraph> graphs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    nets.push_back(synth::synthesize(synth::SizeClass::Small, synth::MeshStyle::Uniform, seed).netlist);
    graphs.push_back(graph::build_graph(nets.back(), true));
  }
  auto serial = graphs;
  for (std::size_t i = 0; i < nets.size(); ++i) label_graph(serial[i], nets[i]);
  label_dataset(nets, graphs, 2);
  for (std::size_t i = 0; i < nets.size(); ++i) {
    for (std::size_t k = 0; k < graphs[i].labels.size(); ++k) CHECK(graphs[i].labels[k].delay_ps == serial[i].labels[k].delay_ps);
  }
  nets[1].grounded_caps[0].cap = -1e6;
  try {
    label_dataset(nets, graphs, 2);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(nets[1].id) != std::string::npos);
  }
}

TEST_CASE("error cases") {
  const MeshNetlist net = single_rc(100.0, 10.0);
  const auto stim = make_stimuli(net);
  CHECK_THROWS_AS(simulate(net, {}), DataError);

  MeshNetlist neg = net;
  neg.grounded_caps[0].cap = -1e9;
  CHECK_THROWS_AS(simulate(neg, stim), DataError);

  auto bad = stim;
  bad[0].out_res = 0.0;
  CHECK_THROWS_AS(simulate(net, bad), DataError);

  SimOptions short_run;
  short_run.t_end = 1.0;
  CHECK_THROWS_AS(simulate(net, stim, short_run), NumericalError);

  MeshNetlist split = net;
  split.nodes.push_back({5, 5});
  split.grounded_caps.push_back({2, 1.0});
  split.sink_nodes.push_back({2, 1});
  CHECK_THROWS_AS(simulate(split, stim), DataError);
}

TEST_CASE("a long run is extended once before giving up") {
  const MeshNetlist net = single_rc(100.0, 10.0);
  const auto stim = make_stimuli(net);
  SimOptions opts;
  opts.t_end = stim[0].t_start + 3.0;  // 4x reaches several tau
  const SimResult r = simulate(net, stim, opts);
  CHECK(r.extended);
  CHECK(r.t_end == doctest::Approx(4 * opts.t_end));
}
