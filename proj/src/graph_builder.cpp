#include "meshtime/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "meshtime/common.hpp"

namespace meshtime::graph {

using synth::MeshNetlist;

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Buffer: return "B";
    case NodeKind::Tap: return "T";
    case NodeKind::Wire: return "W";
    case NodeKind::Sink: return "S";
    case NodeKind::Aux: return "X";
  }
  return "?";
}

NodeKind parse_node_kind(std::string_view s) {
  if (s == "B") return NodeKind::Buffer;
  if (s == "T") return NodeKind::Tap;
  if (s == "W") return NodeKind::Wire;
  if (s == "S") return NodeKind::Sink;
  if (s == "X") return NodeKind::Aux;
  throw DataError("unknown node kind '" + std::string(s) + "'");
}

bool feature_allowed(NodeKind kind, int f) {
  // Rows: input_delay input_slew cap res total_res min_res region_cap x y
  static constexpr bool table[5][kNumFeatures] = {
      /* B */ {true, true, true, true, true, true, true, true, true},
      /* T */ {false, false, false, false, true, true, true, true, true},
      /* W */ {false, false, true, true, false, false, false, false, false},
      /* S */ {false, false, true, false, true, true, true, true, true},
      /* X */ {false, false, true, true, false, false, false, false, false},
  };
  return table[static_cast<int>(kind)][f];
}

std::size_t MeshGraph::count(NodeKind k) const {
  return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), k));
}

std::vector<int> MeshGraph::sink_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == NodeKind::Sink) out.push_back(static_cast<int>(i));
  }
  return out;
}

ResistorGraph::ResistorGraph(const MeshNetlist& net) : caps_(net.node_caps()) {
  const std::size_t n = net.nodes.size();
  std::vector<std::size_t> degree(n, 0);
  for (const auto& r : net.resistors) {
    if (!(r.ohms > 0.0)) throw DataError("netlist " + net.id + " has a non-positive resistor");
    ++degree[r.a];
    ++degree[r.b];
  }
  offsets_.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
  targets_.resize(offsets_[n]);
  weights_.resize(offsets_[n]);
  std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
  for (const auto& r : net.resistors) {
    targets_[fill[r.a]] = r.b;
    weights_[fill[r.a]++] = r.ohms;
    targets_[fill[r.b]] = r.a;
    weights_[fill[r.b]++] = r.ohms;
  }
}

void ResistorGraph::dijkstra(int source, double offset, std::vector<double>& dist,
                             std::vector<double>* path_cap) const {
  const double inf = std::numeric_limits<double>::infinity();
  dist.assign(size(), inf);
  if (path_cap) path_cap->assign(size(), 0.0);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[source] = offset;
  if (path_cap) (*path_cap)[source] = caps_[source];
  pq.emplace(offset, source);
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (std::size_t e = offsets_[u]; e < offsets_[u + 1]; ++e) {
      const int v = targets_[e];
      const double nd = d + weights_[e];
      if (nd < dist[v]) {
        dist[v] = nd;
        if (path_cap) (*path_cap)[v] = (*path_cap)[u] + caps_[v];
        pq.emplace(nd, v);
      }
    }
  }
}

double ResistorGraph::region_cap(int node, double res_limit) const {
  // Bounded Dijkstra; inclusive boundary with a relative slack for
  // summation-order differences.
  const double limit = res_limit * (1.0 + 1e-12);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  std::unordered_map<int, double> best;
  std::unordered_set<int> done;
  best.emplace(node, 0.0);
  pq.emplace(0.0, node);
  double total = 0.0;
  while (!pq.empty()) {
    const auto [d, u] = pq.top();
    pq.pop();
    if (d > best[u] || !done.insert(u).second) continue;
    total += caps_[u];
    for (std::size_t e = offsets_[u]; e < offsets_[u + 1]; ++e) {
      const int v = targets_[e];
      const double nd = d + weights_[e];
      if (nd > limit) continue;
      auto it = best.find(v);
      if (it == best.end() || nd < it->second) {
        best[v] = nd;
        pq.emplace(nd, v);
      }
    }
  }
  return total;
}

std::vector<double> ResistancePaths::per_buffer(std::size_t node) const {
  std::vector<double> out(num_buffers);
  for (std::size_t b = 0; b < num_buffers; ++b) out[b] = at(b, node);
  return out;
}

ResistancePaths shortest_res_paths(const MeshNetlist& net) {
  return shortest_res_paths(net, ResistorGraph(net));
}

ResistancePaths shortest_res_paths(const MeshNetlist& net, const ResistorGraph& rg) {
  ResistancePaths p;
  p.num_nodes = rg.size();
  p.num_buffers = net.drivers.size();
  p.res.resize(p.num_nodes * p.num_buffers);
  p.path_cap.resize(p.num_nodes * p.num_buffers);
  std::vector<double> dist, pcap;
  for (std::size_t b = 0; b < p.num_buffers; ++b) {
    rg.dijkstra(net.drivers[b].node, net.drivers[b].out_res, dist, &pcap);
    std::copy(dist.begin(), dist.end(), p.res.begin() + static_cast<std::ptrdiff_t>(b * p.num_nodes));
    std::copy(pcap.begin(), pcap.end(), p.path_cap.begin() + static_cast<std::ptrdiff_t>(b * p.num_nodes));
  }
  p.min_res.assign(p.num_nodes, std::numeric_limits<double>::infinity());
  p.argmin.assign(p.num_nodes, -1);
  for (std::size_t b = 0; b < p.num_buffers; ++b) {
    for (std::size_t n = 0; n < p.num_nodes; ++n) {
      if (p.at(b, n) < p.min_res[n]) {
        p.min_res[n] = p.at(b, n);
        p.argmin[n] = static_cast<int>(b);
      }
    }
  }
  return p;
}

double compute_total_res(std::span<const double> per_buffer_res) {
  double g = 0.0;
  for (double r : per_buffer_res) {
    if (std::isfinite(r)) g += 1.0 / r;
  }
  return g > 0.0 ? 1.0 / g : std::numeric_limits<double>::infinity();
}

double compute_region_cap(const MeshNetlist& net, int node, double res_limit) {
  if (!(res_limit > 0.0)) throw DataError("region_cap resistance limit must be positive");
  return ResistorGraph(net).region_cap(node, res_limit);
}

namespace {

void finalize_edges(MeshGraph& g) {
  for (auto& e : g.edges) {
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
}

int add_node(MeshGraph& g, NodeKind kind, int origin) {
  g.kinds.push_back(kind);
  g.features.push_back(NodeFeatures{});
  g.origin.push_back(origin);
  g.sink_mask.push_back(kind == NodeKind::Sink ? 1 : 0);
  return static_cast<int>(g.kinds.size()) - 1;
}

}  // namespace

MeshGraph netlist_to_graph(const MeshNetlist& net, double res_limit) {
  const ResistorGraph rg(net);
  return netlist_to_graph(net, rg, shortest_res_paths(net, rg), res_limit);
}

MeshGraph netlist_to_graph(const MeshNetlist& net, const ResistorGraph& rg,
                           const ResistancePaths& paths, double res_limit) {
  if (net.drivers.empty()) throw DataError("netlist " + net.id + " has no drivers");
  if (!synth::is_connected(net)) throw DataError("netlist " + net.id + " is not connected");
  if (res_limit <= 0.0) res_limit = net.mesh_segment_res;
  if (!(res_limit > 0.0)) throw DataError("netlist " + net.id + " has no mesh segment resistance");

  const std::size_t n_elec = net.nodes.size();
  const std::vector<double> caps = net.node_caps();
  std::vector<int> graph_of(n_elec, -1);
  std::vector<double> stub_half(n_elec, 0.0);
  for (const auto& r : net.resistors) {
    stub_half[r.a] += r.cap / 2.0;
    stub_half[r.b] += r.cap / 2.0;
  }

  MeshGraph g;
  g.design_id = net.id;

  auto electrical_features = [&](int gn, int en) {
    auto& f = g.features[gn];
    f[kTotalRes] = compute_total_res(paths.per_buffer(en));
    f[kMinRes] = paths.min_res[en];
    f[kRegionCap] = rg.region_cap(en, res_limit);
    f[kX] = net.nodes[en].x;
    f[kY] = net.nodes[en].y;
  };

  for (const auto& d : net.drivers) {
    if (graph_of[d.node] >= 0) throw DataError("two drivers share node in " + net.id);
    const int gn = add_node(g, NodeKind::Buffer, d.node);
    graph_of[d.node] = gn;
    electrical_features(gn, d.node);
    auto& f = g.features[gn];
    f[kInputDelay] = d.input_delay;
    f[kInputSlew] = d.input_slew;
    f[kRes] = d.out_res;
    f[kCap] = net.tech.buf_out_cap * (net.tech.buf_out_res / d.out_res);
  }
  for (const auto& s : net.sink_nodes) {
    if (graph_of[s.node] >= 0) throw DataError("sink shares a driver node in " + net.id);
    const int gn = add_node(g, NodeKind::Sink, s.node);
    graph_of[s.node] = gn;
    electrical_features(gn, s.node);
    g.features[gn][kCap] = std::max(0.0, caps[s.node] - stub_half[s.node]);
  }
  for (std::size_t en = 0; en < n_elec; ++en) {
    if (graph_of[en] >= 0) continue;
    const int gn = add_node(g, NodeKind::Tap, static_cast<int>(en));
    graph_of[en] = gn;
    electrical_features(gn, static_cast<int>(en));
  }
  for (std::size_t r = 0; r < net.resistors.size(); ++r) {
    const auto& res = net.resistors[r];
    const int gn = add_node(g, NodeKind::Wire, static_cast<int>(r));
    g.features[gn][kRes] = res.ohms;
    g.features[gn][kCap] = res.cap;
    g.edges.emplace_back(graph_of[res.a], gn);
    g.edges.emplace_back(graph_of[res.b], gn);
  }
  finalize_edges(g);
  return g;
}

void add_sink_driver_aux(MeshGraph& g, const MeshNetlist& net, const ResistancePaths& paths) {
  const std::size_t nb = net.drivers.size();
  const std::vector<int> sinks = g.sink_nodes();
  for (std::size_t k = 0; k < net.sink_nodes.size(); ++k) {
    const int en = net.sink_nodes[k].node;
    std::vector<std::pair<double, int>> ranked;
    for (std::size_t b = 0; b < nb; ++b) ranked.emplace_back(paths.at(b, en), static_cast<int>(b));
    std::sort(ranked.begin(), ranked.end());
    const std::size_t take = std::min<std::size_t>(2, nb);
    for (std::size_t i = 0; i < take; ++i) {
      const int b = ranked[i].second;
      const int x = add_node(g, NodeKind::Aux, -1);
      g.features[x][kRes] = ranked[i].first;
      g.features[x][kCap] = paths.cap_at(b, en);
      // Buffer graph ids equal driver indices.
      g.edges.emplace_back(sinks[k], x);
      g.edges.emplace_back(x, b);
    }
  }
  finalize_edges(g);
}

void add_buffer_contention_aux(MeshGraph& g, const MeshNetlist& net, const ResistancePaths& paths) {
  const std::size_t nb = net.drivers.size();
  if (nb < 2) return;
  auto pair_path = [&](int a, int b) {
    // Lower-index direction wins ties so the pair is direction-independent.
    const double ab = paths.at(a, net.drivers[b].node);
    const double ba = paths.at(b, net.drivers[a].node);
    if (ba < ab) return std::pair{ba, paths.cap_at(b, net.drivers[a].node)};
    return std::pair{ab, paths.cap_at(a, net.drivers[b].node)};
  };
  std::set<std::pair<int, int>> pairs;
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<std::pair<double, int>> ranked;
    for (std::size_t o = 0; o < nb; ++o) {
      if (o == b) continue;
      const int lo = static_cast<int>(std::min(b, o)), hi = static_cast<int>(std::max(b, o));
      ranked.emplace_back(pair_path(lo, hi).first, static_cast<int>(o));
    }
    std::sort(ranked.begin(), ranked.end());
    const std::size_t take = std::min<std::size_t>(4, ranked.size());
    for (std::size_t i = 0; i < take; ++i) {
      const int o = ranked[i].second;
      pairs.emplace(std::min(static_cast<int>(b), o), std::max(static_cast<int>(b), o));
    }
  }
  for (const auto& [a, b] : pairs) {
    const auto [res, cap] = pair_path(a, b);
    const int x = add_node(g, NodeKind::Aux, -1);
    g.features[x][kRes] = res;
    g.features[x][kCap] = cap;
    g.edges.emplace_back(a, x);
    g.edges.emplace_back(x, b);
  }
  finalize_edges(g);
}

MeshGraph build_graph(const MeshNetlist& net, bool aux) {
  const ResistorGraph rg(net);
  const ResistancePaths paths = shortest_res_paths(net, rg);
  MeshGraph g = netlist_to_graph(net, rg, paths);
  if (aux) {
    add_sink_driver_aux(g, net, paths);
    add_buffer_contention_aux(g, net, paths);
  }
  return g;
}

MeshGraph strip_aux(const MeshGraph& g) {
  MeshGraph out;
  out.design_id = g.design_id;
  out.norm_stats = g.norm_stats;
  std::vector<int> remap(g.num_nodes(), -1);
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (g.kinds[i] == NodeKind::Aux) continue;
    remap[i] = static_cast<int>(out.kinds.size());
    out.kinds.push_back(g.kinds[i]);
    out.features.push_back(g.features[i]);
    out.origin.push_back(g.origin[i]);
    out.sink_mask.push_back(g.sink_mask[i]);
  }
  for (const auto& [a, b] : g.edges) {
    if (remap[a] >= 0 && remap[b] >= 0) out.edges.emplace_back(remap[a], remap[b]);
  }
  for (const auto& l : g.labels) out.labels.push_back({remap[l.node], l.delay_ps, l.slew_ps});
  finalize_edges(out);
  return out;
}

void attach_labels(MeshGraph& g, std::span<const double> delay_ps, std::span<const double> slew_ps) {
  const std::vector<int> sinks = g.sink_nodes();
  if (delay_ps.size() != sinks.size() || slew_ps.size() != sinks.size()) {
    throw DataError("label count does not match sink count for " + g.design_id);
  }
  g.labels.clear();
  for (std::size_t k = 0; k < sinks.size(); ++k) g.labels.push_back({sinks[k], delay_ps[k], slew_ps[k]});
}

void validate(const MeshGraph& g) {
  const std::size_t n = g.num_nodes();
  if (g.features.size() != n || g.sink_mask.size() != n || g.origin.size() != n) {
    throw DataError("graph " + g.design_id + ": per-node arrays have mismatched lengths");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((g.sink_mask[i] != 0) != (g.kinds[i] == NodeKind::Sink)) {
      throw DataError("graph " + g.design_id + ": sink mask disagrees with node kinds");
    }
    for (int f = 0; f < kNumFeatures; ++f) {
      const double v = g.features[i][f];
      if (!std::isfinite(v)) throw DataError("graph " + g.design_id + ": non-finite feature");
      if (!feature_allowed(g.kinds[i], f) && v != 0.0) {
        throw DataError("graph " + g.design_id + ": feature set on a node kind that must not carry it");
      }
    }
  }
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [a, b] = g.edges[e];
    if (a < 0 || b < 0 || static_cast<std::size_t>(b) >= n || a >= b) {
      throw DataError("graph " + g.design_id + ": malformed edge");
    }
    if (e > 0 && !(g.edges[e - 1] < g.edges[e])) {
      throw DataError("graph " + g.design_id + ": edges not sorted/deduplicated");
    }
  }
  if (g.labeled()) {
    if (g.labels.size() != g.count(NodeKind::Sink)) {
      throw DataError("graph " + g.design_id + ": labels must cover exactly the sinks");
    }
    for (const auto& l : g.labels) {
      if (l.node < 0 || static_cast<std::size_t>(l.node) >= n || g.kinds[l.node] != NodeKind::Sink) {
        throw DataError("graph " + g.design_id + ": label on a non-sink node");
      }
    }
  }
  // Connectivity.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  for (const auto& [a, b] : g.edges) parent[find(a)] = find(b);
  for (std::size_t i = 1; i < n; ++i) {
    if (find(static_cast<int>(i)) != find(0)) throw DataError("graph " + g.design_id + " is not connected");
  }
}

NormStats compute_norm_stats(std::span<const MeshGraph> graphs) {
  if (graphs.empty()) throw DataError("cannot compute normalization stats of an empty dataset");
  NormStats st;
  std::array<double, kNumFeatures> sum{}, count{};
  for (const auto& g : graphs) {
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      for (int f = 0; f < kNumFeatures; ++f) {
        if (!feature_allowed(g.kinds[i], f)) continue;
        sum[f] += g.features[i][f];
        count[f] += 1.0;
      }
    }
  }
  for (int f = 0; f < kNumFeatures; ++f) st.mean[f] = count[f] > 0 ? sum[f] / count[f] : 0.0;
  std::array<double, kNumFeatures> sq{};
  for (const auto& g : graphs) {
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      for (int f = 0; f < kNumFeatures; ++f) {
        if (!feature_allowed(g.kinds[i], f)) continue;
        const double d = g.features[i][f] - st.mean[f];
        sq[f] += d * d;
      }
    }
  }
  for (int f = 0; f < kNumFeatures; ++f) {
    const double sd = count[f] > 0 ? std::sqrt(sq[f] / count[f]) : 0.0;
    st.stddev[f] = sd > 1e-12 * std::max(1.0, std::abs(st.mean[f])) ? sd : 1.0;
  }

  double lsum[2] = {0, 0}, lsq[2] = {0, 0}, lcount = 0;
  for (const auto& g : graphs) {
    for (const auto& l : g.labels) {
      lsum[0] += l.delay_ps;
      lsum[1] += l.slew_ps;
      lcount += 1.0;
    }
  }
  if (lcount > 0) {
    for (int k = 0; k < 2; ++k) st.label_mean[k] = lsum[k] / lcount;
    for (const auto& g : graphs) {
      for (const auto& l : g.labels) {
        lsq[0] += (l.delay_ps - st.label_mean[0]) * (l.delay_ps - st.label_mean[0]);
        lsq[1] += (l.slew_ps - st.label_mean[1]) * (l.slew_ps - st.label_mean[1]);
      }
    }
    for (int k = 0; k < 2; ++k) {
      const double sd = std::sqrt(lsq[k] / lcount);
      st.label_std[k] = sd > 1e-12 ? sd : 1.0;
    }
  }
  return st;
}

MeshGraph apply_normalization(const MeshGraph& g, const NormStats& stats) {
  if (g.norm_stats) throw DataError("graph " + g.design_id + " is already normalized");
  MeshGraph out = g;
  for (std::size_t i = 0; i < out.num_nodes(); ++i) {
    for (int f = 0; f < kNumFeatures; ++f) {
      if (feature_allowed(out.kinds[i], f)) {
        out.features[i][f] = (out.features[i][f] - stats.mean[f]) / stats.stddev[f];
      }
    }
  }
  out.norm_stats = stats;
  return out;
}

MeshGraph undo_normalization(const MeshGraph& g, const NormStats& stats) {
  MeshGraph out = g;
  for (std::size_t i = 0; i < out.num_nodes(); ++i) {
    for (int f = 0; f < kNumFeatures; ++f) {
      if (feature_allowed(out.kinds[i], f)) {
        out.features[i][f] = out.features[i][f] * stats.stddev[f] + stats.mean[f];
      }
    }
  }
  out.norm_stats.reset();
  return out;
}

std::pair<std::vector<MeshGraph>, NormStats> normalize_features(std::span<const MeshGraph> graphs) {
  NormStats st = compute_norm_stats(graphs);
  std::vector<MeshGraph> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(apply_normalization(g, st));
  return {std::move(out), st};
}

}  // namespace meshtime::graph
