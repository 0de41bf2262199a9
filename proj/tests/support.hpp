#pragma once

// Shared helpers for the unit tests: random small netlists and independent
// reference implementations that deliberately share no code with the
// library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <set>
#include <utility>
#include <vector>

#include "meshtime/autodiff.hpp"
#include "meshtime/common.hpp"
#include "meshtime/mesh_synth.hpp"

namespace testsupport {

using meshtime::Rng;
using meshtime::synth::MeshNetlist;

inline double rel_err(double a, double b, double floor = 1e-300) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Connected random RC network: a random spanning tree plus `extra` chords.
// Drivers sit on distinct nodes; sinks on distinct non-driver nodes.
inline MeshNetlist random_netlist(Rng& rng, int nodes, int drivers, int sinks, int extra) {
  MeshNetlist net;
  net.id = "random";
  for (int i = 0; i < nodes; ++i) net.nodes.push_back({rng.uniform(0, 100), rng.uniform(0, 100)});
  std::set<std::pair<int, int>> used;
  auto add = [&](int a, int b) {
    if (a == b || used.count({std::min(a, b), std::max(a, b)})) return false;
    used.insert({std::min(a, b), std::max(a, b)});
    const double ohms = rng.uniform(1.0, 50.0);
    net.resistors.push_back({a, b, ohms, rng.uniform(0.5, 5.0), meshtime::synth::ResistorKind::Mesh});
    return true;
  };
  for (int i = 1; i < nodes; ++i) add(i, static_cast<int>(rng.index(static_cast<std::size_t>(i))));
  for (int k = 0, tries = 0; k < extra && tries < 100; ++tries) {
    if (add(static_cast<int>(rng.index(nodes)), static_cast<int>(rng.index(nodes)))) ++k;
  }
  std::vector<int> order(nodes);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (int d = 0; d < drivers; ++d) {
    net.drivers.push_back({order[d], rng.uniform(20.0, 120.0), rng.uniform(0.0, 20.0), rng.uniform(5.0, 40.0)});
  }
  for (int s = 0; s < sinks && drivers + s < nodes; ++s) net.sink_nodes.push_back({order[drivers + s], s});
  for (int i = 0; i < nodes; ++i) net.grounded_caps.push_back({i, rng.uniform(1.0, 20.0)});
  net.mesh_segment_res = rng.uniform(10.0, 60.0);
  return net;
}

// Minimum over every simple path from `src` of the summed resistance, by
// exhaustive depth-first enumeration. Exponential; only for tiny graphs.
inline std::vector<double> brute_force_dist(const MeshNetlist& net, int src, double offset) {
  const std::size_t n = net.nodes.size();
  std::vector<std::vector<std::pair<int, double>>> adj(n);
  for (const auto& r : net.resistors) {
    adj[r.a].emplace_back(r.b, r.ohms);
    adj[r.b].emplace_back(r.a, r.ohms);
  }
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<char> on_path(n, 0);
  std::function<void(int, double)> dfs = [&](int u, double d) {
    best[u] = std::min(best[u], d);
    on_path[u] = 1;
    for (const auto& [v, w] : adj[u]) {
      if (!on_path[v]) dfs(v, d + w);
    }
    on_path[u] = 0;
  };
  dfs(src, offset);
  return best;
}

// Connected components by breadth-first search over resistors.
inline int count_components(const MeshNetlist& net) {
  const std::size_t n = net.nodes.size();
  std::vector<std::vector<int>> adj(n);
  for (const auto& r : net.resistors) {
    adj[r.a].push_back(r.b);
    adj[r.b].push_back(r.a);
  }
  std::vector<char> seen(n, 0);
  int comps = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    ++comps;
    std::queue<int> q;
    q.push(static_cast<int>(s));
    seen[s] = 1;
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
      }
    }
  }
  return comps;
}

// Hop distances from `src` over an undirected edge list.
inline std::vector<int> bfs_hops(std::size_t n, const std::vector<std::pair<int, int>>& edges, int src) {
  std::vector<std::vector<int>> adj(n);
  for (const auto& [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> d(n, -1);
  std::queue<int> q;
  d[src] = 0;
  q.push(src);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[u]) {
      if (d[v] < 0) {
        d[v] = d[u] + 1;
        q.push(v);
      }
    }
  }
  return d;
}

inline meshtime::ad::Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  meshtime::ad::Matrix m(r, c);
  for (double& v : m.values()) v = rng.uniform(lo, hi);
  return m;
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Central differences of a scalar function of the given parameters against
// the reverse-mode gradients. The relative error of each entry is measured
// against max(|analytic|, |numeric|, floor).
inline GradCheck grad_check(const std::function<meshtime::ad::Tensor()>& f, std::vector<meshtime::ad::Tensor> params,
                            double h = 1e-6, double floor = 1e-8) {
  for (auto& p : params) p.zero_grad();
  meshtime::ad::backward(f());
  std::vector<meshtime::ad::Matrix> analytic;
  for (auto& p : params) {
    analytic.push_back(p.grad().empty() ? meshtime::ad::Matrix(p.rows(), p.cols()) : p.grad());
  }
  GradCheck out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& vals = params[k].value().values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = f().item();
      vals[i] = keep - h;
      const double down = f().item();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      out.max_rel = std::max(out.max_rel, rel_err(analytic[k].values()[i], numeric, floor));
      ++out.checked;
    }
  }
  return out;
}

}  // namespace testsupport
