#include "meshtime/mesh_synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "meshtime/common.hpp"

namespace meshtime::synth {

std::string_view to_string(SizeClass c) {
  switch (c) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
  }
  return "?";
}

std::string_view to_string(MeshStyle s) {
  switch (s) {
    case MeshStyle::Uniform: return "uniform";
    case MeshStyle::NonUniform: return "nonuniform";
    case MeshStyle::Fixed50um: return "fixed";
  }
  return "?";
}

SizeClass parse_size_class(std::string_view s) {
  if (s == "small") return SizeClass::Small;
  if (s == "medium") return SizeClass::Medium;
  if (s == "large") return SizeClass::Large;
  throw DataError("unknown size class '" + std::string(s) + "'");
}

MeshStyle parse_mesh_style(std::string_view s) {
  if (s == "uniform") return MeshStyle::Uniform;
  if (s == "nonuniform") return MeshStyle::NonUniform;
  if (s == "fixed") return MeshStyle::Fixed50um;
  throw DataError("unknown mesh style '" + std::string(s) + "'");
}

void TechParams::validate() const {
  const double vals[] = {wire_res_per_um, wire_cap_per_um, buf_out_res, buf_out_cap,
                         buf_in_cap, buf_slew_gain};
  for (double v : vals) {
    if (!(v > 0.0)) throw DataError("technology parameters must be strictly positive");
  }
  if (buf_intrinsic_delay < 0.0) throw DataError("negative buffer intrinsic delay");
  if (drive_strengths.empty()) throw DataError("drive_strengths is empty");
  if (!std::is_sorted(drive_strengths.begin(), drive_strengths.end()) ||
      drive_strengths.front() <= 0.0) {
    throw DataError("drive_strengths must be positive and ascending");
  }
  if (!(sink_cap_min > 0.0) || sink_cap_max < sink_cap_min) {
    throw DataError("invalid sink load range");
  }
}

std::vector<double> MeshNetlist::node_caps() const {
  std::vector<double> caps(nodes.size(), 0.0);
  for (const auto& gc : grounded_caps) caps[gc.node] += gc.cap;
  return caps;
}

double MeshNetlist::total_cap() const {
  double sum = 0.0;
  for (const auto& gc : grounded_caps) sum += gc.cap;
  return sum;
}

namespace {

struct ClassStats {
  double area_lo, area_hi;
  double density_lo, density_hi;
};

ClassStats class_stats(SizeClass cls) {
  switch (cls) {
    case SizeClass::Small: return {500.0, 1500.0, 0.033, 0.033};
    case SizeClass::Medium: return {40000.0, 60000.0, 0.01, 0.04};
    case SizeClass::Large: return {180000.0, 220000.0, 0.021, 0.021};
  }
  throw DataError("unknown size class");
}

bool blocked(const std::vector<Blockage>& bs, double x, double y) {
  return std::any_of(bs.begin(), bs.end(), [&](const Blockage& b) { return b.contains(x, y); });
}

// Macro-like whitespace plus gaussian sink clusters.
void place_clustered_sinks(Design& d, std::size_t count, Rng& rng, const TechParams& tech) {
  const double w = d.width, h = d.height;
  const std::size_t num_blockages = 2 + rng.index(3);
  for (std::size_t b = 0; b < num_blockages; ++b) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double bw = rng.uniform(0.15, 0.3) * w;
      const double bh = rng.uniform(0.15, 0.3) * h;
      Blockage cand{rng.uniform(0.0, w - bw), rng.uniform(0.0, h - bh), 0.0, 0.0};
      cand.x1 = cand.x0 + bw;
      cand.y1 = cand.y0 + bh;
      const bool overlaps = std::any_of(d.blockages.begin(), d.blockages.end(), [&](const Blockage& o) {
        return cand.x0 < o.x1 && o.x0 < cand.x1 && cand.y0 < o.y1 && o.y0 < cand.y1;
      });
      if (!overlaps) {
        d.blockages.push_back(cand);
        break;
      }
    }
  }

  const std::size_t num_clusters = 4 + rng.index(5);
  std::vector<std::pair<double, double>> centers;
  for (std::size_t c = 0; c < num_clusters; ++c) {
    double cx = rng.uniform(0.0, w), cy = rng.uniform(0.0, h);
    for (int attempt = 0; attempt < 100 && blocked(d.blockages, cx, cy); ++attempt) {
      cx = rng.uniform(0.0, w);
      cy = rng.uniform(0.0, h);
    }
    centers.emplace_back(cx, cy);
  }

  const double sigma = 0.08 * std::min(w, h);
  d.sinks.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    double x = 0.0, y = 0.0;
    bool ok = false;
    for (int attempt = 0; attempt < 64 && !ok; ++attempt) {
      const auto& c = centers[rng.index(centers.size())];
      x = c.first + sigma * rng.normal();
      y = c.second + sigma * rng.normal();
      ok = x >= 0.0 && x <= w && y >= 0.0 && y <= h && !blocked(d.blockages, x, y);
    }
    for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
      x = rng.uniform(0.0, w);
      y = rng.uniform(0.0, h);
      ok = !blocked(d.blockages, x, y);
    }
    d.sinks.push_back({x, y, rng.uniform(tech.sink_cap_min, tech.sink_cap_max)});
  }
}

double total_mesh_wire_cap(const MeshSpec& spec, const TechParams& tech) {
  const double len = spec.ny * (spec.nx - 1) * spec.pitch_x + spec.nx * (spec.ny - 1) * spec.pitch_y;
  return len * tech.wire_cap_per_um;
}

std::vector<BufferSite> base_sites(const MeshSpec& spec, double drive) {
  std::vector<BufferSite> sites;
  const bool every = spec.nx * spec.ny <= 16;
  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) {
      if (every || (i + j) % 2 == 0) sites.push_back({i, j, drive});
    }
  }
  if (sites.size() < 4) {
    sites.clear();
    for (int j = 0; j < spec.ny; ++j) {
      for (int i = 0; i < spec.nx; ++i) sites.push_back({i, j, drive});
    }
  }
  return sites;
}

}  // namespace

Design generate_design(SizeClass cls, std::uint64_t seed, const TechParams& tech,
                       const SynthConfig& /*cfg*/) {
  tech.validate();
  const ClassStats st = class_stats(cls);
  Rng rng(derive_seed(seed, 0x5151 + static_cast<std::uint64_t>(cls)));

  Design d;
  d.size_class = cls;
  d.rng_seed = seed;
  d.id = std::string(to_string(cls)) + "-" + std::to_string(seed);

  const double area = rng.uniform(st.area_lo, st.area_hi);
  const double aspect = rng.uniform(0.8, 1.25);
  d.width = std::sqrt(area * aspect);
  d.height = area / d.width;
  d.density = st.density_lo == st.density_hi ? st.density_lo : rng.uniform(st.density_lo, st.density_hi);

  const auto count = static_cast<std::size_t>(std::max(1L, std::lround(d.area() * d.density)));
  if (cls == SizeClass::Large) {
    place_clustered_sinks(d, count, rng, tech);
  } else {
    d.sinks.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
      const double x = rng.uniform(0.0, d.width);
      const double y = rng.uniform(0.0, d.height);
      d.sinks.push_back({x, y, rng.uniform(tech.sink_cap_min, tech.sink_cap_max)});
    }
  }
  return d;
}

MeshSpec size_mesh(const Design& design, MeshStyle style, const SynthConfig& cfg) {
  if (design.sinks.empty()) throw DataError("design " + design.id + " has no sinks");
  MeshSpec spec;
  spec.style = style;

  if (style == MeshStyle::Fixed50um) {
    const double fp = cfg.fixed_pitch;
    auto fit = [&](double extent, int& lines, double& pitch, double& origin) {
      origin = 0.0;
      if (extent < fp) {
        lines = 2;
        pitch = extent;
        return;
      }
      long cells = std::max(1L, std::lround(extent / fp));
      pitch = extent / static_cast<double>(cells);
      if (std::abs(pitch - fp) > 0.1 * fp) {
        cells = static_cast<long>(std::ceil(extent / fp));
        pitch = fp;
        origin = -(static_cast<double>(cells) * fp - extent) / 2.0;
      }
      lines = static_cast<int>(cells) + 1;
    };
    fit(design.width, spec.nx, spec.pitch_x, spec.origin_x);
    fit(design.height, spec.ny, spec.pitch_y, spec.origin_y);
    return spec;
  }

  const double sinks = static_cast<double>(design.sinks.size());
  long cells = 1;
  while (sinks / static_cast<double>(cells * cells) > cfg.sinks_per_cell) ++cells;
  const long max_x = std::max(1L, static_cast<long>(std::floor(design.width / cfg.min_pitch)));
  const long max_y = std::max(1L, static_cast<long>(std::floor(design.height / cfg.min_pitch)));
  cells = std::min({cells, max_x, max_y});
  spec.nx = spec.ny = static_cast<int>(cells) + 1;
  spec.pitch_x = design.width / static_cast<double>(cells);
  spec.pitch_y = design.height / static_cast<double>(cells);
  return spec;
}

MeshSpec place_buffers(const Design& design, const MeshSpec& spec, const TechParams& tech,
                       const SynthConfig& cfg) {
  tech.validate();
  MeshSpec out = spec;
  const auto& strengths = tech.drive_strengths;
  const double sink_load = std::accumulate(design.sinks.begin(), design.sinks.end(), 0.0,
                                           [](double acc, const Sink& s) { return acc + s.load_cap; });
  const double wire_cap = total_mesh_wire_cap(spec, tech);
  const double total_load = sink_load + wire_cap;
  const double drive_needed = total_load / cfg.load_per_drive;

  if (spec.style == MeshStyle::Uniform) {
    out.buffer_sites = base_sites(spec, strengths.front());
    const double per = drive_needed / static_cast<double>(out.buffer_sites.size());
    double drive = strengths.back();
    for (double s : strengths) {
      if (s >= per) {
        drive = s;
        break;
      }
    }
    for (auto& site : out.buffer_sites) site.drive = drive;
    return out;
  }

  // Non-uniform: each sink's load is shared by the intersections within one
  // pitch of it; mesh wire cap is spread evenly.
  const int nsites = spec.nx * spec.ny;
  std::vector<double> share(nsites, wire_cap / nsites);
  for (const auto& s : design.sinks) {
    std::vector<int> near;
    for (int j = 0; j < spec.ny; ++j) {
      if (std::abs(s.y - spec.line_y(j)) > spec.pitch_y * (1.0 + 1e-12)) continue;
      for (int i = 0; i < spec.nx; ++i) {
        if (std::abs(s.x - spec.line_x(i)) <= spec.pitch_x * (1.0 + 1e-12)) {
          near.push_back(spec.intersection_index(i, j));
        }
      }
    }
    if (near.empty()) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < spec.ny; ++j) {
        for (int i = 0; i < spec.nx; ++i) {
          const double d = std::hypot(s.x - spec.line_x(i), s.y - spec.line_y(j));
          if (d < best_d) {
            best_d = d;
            best = spec.intersection_index(i, j);
          }
        }
      }
      near.push_back(best);
    }
    for (int k : near) share[k] += s.load_cap / static_cast<double>(near.size());
  }

  // strength index per site, -1 = no buffer
  std::vector<int> level(nsites, -1);
  double placed = 0.0;
  for (const auto& b : base_sites(spec, strengths.front())) {
    level[spec.intersection_index(b.grid_x, b.grid_y)] = 0;
    placed += strengths.front();
  }
  const int top = static_cast<int>(strengths.size()) - 1;
  while (placed < drive_needed) {
    int best = -1;
    double best_residual = 0.0;
    for (int k = 0; k < nsites; ++k) {
      if (level[k] == top) continue;
      const double cover = level[k] < 0 ? 0.0 : strengths[level[k]] * cfg.load_per_drive;
      const double residual = share[k] - cover;
      if (residual > best_residual) {
        best_residual = residual;
        best = k;
      }
    }
    if (best < 0) break;
    const double before = level[best] < 0 ? 0.0 : strengths[level[best]];
    ++level[best];
    placed += strengths[level[best]] - before;
  }

  out.buffer_sites.clear();
  for (int k = 0; k < nsites; ++k) {
    if (level[k] >= 0) out.buffer_sites.push_back({k % spec.nx, k / spec.nx, strengths[level[k]]});
  }
  return out;
}

namespace {

struct TreeNode {
  double x = 0.0, y = 0.0;
  int buffer = -1;  // leaf only
  int left = -1, right = -1;
};

int build_tree(std::vector<TreeNode>& nodes, std::vector<int> members,
               const std::vector<std::pair<double, double>>& pos) {
  double x0 = std::numeric_limits<double>::infinity(), y0 = x0, x1 = -x0, y1 = -x0;
  for (int m : members) {
    x0 = std::min(x0, pos[m].first);
    x1 = std::max(x1, pos[m].first);
    y0 = std::min(y0, pos[m].second);
    y1 = std::max(y1, pos[m].second);
  }
  const int id = static_cast<int>(nodes.size());
  nodes.push_back({(x0 + x1) / 2.0, (y0 + y1) / 2.0});
  if (members.size() == 1) {
    nodes[id].x = pos[members[0]].first;
    nodes[id].y = pos[members[0]].second;
    nodes[id].buffer = members[0];
    return id;
  }
  const bool split_x = (x1 - x0) >= (y1 - y0);
  std::sort(members.begin(), members.end(), [&](int a, int b) {
    const double ka = split_x ? pos[a].first : pos[a].second;
    const double kb = split_x ? pos[b].first : pos[b].second;
    return ka != kb ? ka < kb : a < b;
  });
  const auto half = static_cast<std::ptrdiff_t>(members.size() / 2);
  std::vector<int> lo(members.begin(), members.begin() + half);
  std::vector<int> hi(members.begin() + half, members.end());
  const int l = build_tree(nodes, std::move(lo), pos);
  const int r = build_tree(nodes, std::move(hi), pos);
  nodes[id].left = l;
  nodes[id].right = r;
  return id;
}

}  // namespace

std::vector<InputArrival> assign_input_arrivals(const MeshSpec& spec, const TechParams& tech,
                                                std::uint64_t seed, const SynthConfig& cfg) {
  const std::size_t nb = spec.buffer_sites.size();
  std::vector<InputArrival> arrivals(nb);
  if (nb == 0) return arrivals;

  std::vector<std::pair<double, double>> pos;
  std::vector<double> leaf_load(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& s = spec.buffer_sites[b];
    pos.emplace_back(spec.line_x(s.grid_x), spec.line_y(s.grid_y));
    leaf_load[b] = tech.buf_in_cap * s.drive;
  }
  std::vector<int> all(nb);
  std::iota(all.begin(), all.end(), 0);
  std::vector<TreeNode> tree;
  const int root = build_tree(tree, all, pos);

  const double r = tech.wire_res_per_um, c = tech.wire_cap_per_um;
  auto branch_len = [&](int parent, int child) {
    return std::abs(tree[parent].x - tree[child].x) + std::abs(tree[parent].y - tree[child].y);
  };

  // Downstream capacitance, post-order.
  std::vector<double> down(tree.size(), 0.0);
  auto downstream = [&](auto&& self, int n) -> double {
    if (tree[n].buffer >= 0) return down[n] = leaf_load[tree[n].buffer];
    double sum = 0.0;
    for (int ch : {tree[n].left, tree[n].right}) sum += self(self, ch) + c * branch_len(n, ch);
    return down[n] = sum;
  };
  downstream(downstream, root);

  // Elmore delay plus one balanced tree buffer per level.
  std::vector<double> leaf_delay(nb, 0.0), branch_cap(nb, 0.0);
  const double r_root = tech.buf_out_res;
  auto walk = [&](auto&& self, int n, double t, int depth, int parent) -> void {
    if (tree[n].buffer >= 0) {
      leaf_delay[tree[n].buffer] = t + depth * tech.buf_intrinsic_delay;
      branch_cap[tree[n].buffer] = parent < 0 ? 0.0 : c * branch_len(parent, n);
      return;
    }
    for (int ch : {tree[n].left, tree[n].right}) {
      const double len = branch_len(n, ch);
      const double dt = 1e-3 * (r * len) * (c * len / 2.0 + down[ch]);  // ohm*fF -> ps
      self(self, ch, t + dt, depth + 1, n);
    }
  };
  walk(walk, root, 1e-3 * r_root * down[root], 0, -1);
  const double nominal = *std::max_element(leaf_delay.begin(), leaf_delay.end());

  Rng rng(derive_seed(seed, 0xa77));
  for (std::size_t b = 0; b < nb; ++b) {
    const double skew = nb > 1 && cfg.skew_sigma > 0.0 ? rng.uniform(-cfg.skew_sigma, cfg.skew_sigma) : 0.0;
    arrivals[b].input_delay = nominal + skew;
    arrivals[b].input_slew = cfg.base_slew * (1.0 + (leaf_load[b] + branch_cap[b]) / cfg.ref_load);
  }
  return arrivals;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

bool is_connected(const MeshNetlist& net) {
  if (net.nodes.empty()) return false;
  UnionFind uf(net.nodes.size());
  for (const auto& r : net.resistors) uf.unite(r.a, r.b);
  const int root = uf.find(0);
  for (std::size_t i = 1; i < net.nodes.size(); ++i) {
    if (uf.find(static_cast<int>(i)) != root) return false;
  }
  return true;
}

MeshNetlist build_netlist(const Design& design, const MeshSpec& spec, const TechParams& tech,
                          const std::vector<InputArrival>& arrivals, const SynthConfig& cfg) {
  tech.validate();
  if (spec.buffer_sites.empty()) throw DataError("mesh for " + design.id + " has no buffers");
  if (!arrivals.empty() && arrivals.size() != spec.buffer_sites.size()) {
    throw DataError("arrival count does not match buffer count");
  }
  MeshNetlist net;
  net.id = design.id;
  net.tech = tech;
  net.mesh_segment_res = tech.wire_res_per_um * std::max(spec.pitch_x, spec.pitch_y);

  for (int j = 0; j < spec.ny; ++j) {
    for (int i = 0; i < spec.nx; ++i) net.nodes.push_back({spec.line_x(i), spec.line_y(j)});
  }

  // Wire index: horizontals 0..ny-1, then verticals ny..ny+nx-1.
  const int num_wires = spec.ny + spec.nx;
  const double x_lo = spec.line_x(0), x_hi = spec.line_x(spec.nx - 1);
  const double y_lo = spec.line_y(0), y_hi = spec.line_y(spec.ny - 1);

  struct Tap {
    double t;
    int sink;
    double dist;
  };
  std::vector<std::vector<Tap>> taps(num_wires);
  for (std::size_t k = 0; k < design.sinks.size(); ++k) {
    const auto& s = design.sinks[k];
    int best_wire = -1;
    double best_d = std::numeric_limits<double>::infinity(), best_t = 0.0;
    for (int w = 0; w < num_wires; ++w) {
      double t, d;
      if (w < spec.ny) {
        t = std::clamp(s.x, x_lo, x_hi);
        d = std::hypot(s.x - t, s.y - spec.line_y(w));
      } else {
        t = std::clamp(s.y, y_lo, y_hi);
        d = std::hypot(s.x - spec.line_x(w - spec.ny), s.y - t);
      }
      if (d < best_d) {
        best_d = d;
        best_wire = w;
        best_t = t;
      }
    }
    taps[best_wire].push_back({best_t, static_cast<int>(k), best_d});
  }

  std::vector<double> cap(net.nodes.size(), 0.0);
  auto add_node = [&](double x, double y) {
    net.nodes.push_back({x, y});
    cap.push_back(0.0);
    return static_cast<int>(net.nodes.size()) - 1;
  };
  auto add_wire = [&](int a, int b, double len, ResistorKind kind) {
    const double wc = tech.wire_cap_per_um * len;
    net.resistors.push_back({a, b, tech.wire_res_per_um * len, wc, kind});
    cap[a] += wc / 2.0;
    cap[b] += wc / 2.0;
  };

  std::vector<int> tap_node_of_sink(design.sinks.size(), -1);
  std::vector<double> stub_len(design.sinks.size(), 0.0);
  constexpr double kMergeTol = 1e-9;
  for (int w = 0; w < num_wires; ++w) {
    const bool horizontal = w < spec.ny;
    const int count = horizontal ? spec.nx : spec.ny;
    struct Point {
      double t;
      int node;  // -1: tap not created yet
      int sink;  // -1: intersection
    };
    std::vector<Point> pts;
    for (int q = 0; q < count; ++q) {
      const int node = horizontal ? spec.intersection_index(q, w) : spec.intersection_index(w - spec.ny, q);
      pts.push_back({horizontal ? spec.line_x(q) : spec.line_y(q), node, -1});
    }
    auto& wt = taps[w];
    std::stable_sort(wt.begin(), wt.end(), [](const Tap& a, const Tap& b) { return a.t < b.t; });
    for (const auto& tp : wt) {
      pts.push_back({tp.t, -1, tp.sink});
      stub_len[tp.sink] = tp.dist;
    }
    std::stable_sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
      if (a.t != b.t) return a.t < b.t;
      return a.sink < b.sink;  // intersections (-1) first
    });

    int prev_node = -1;
    double prev_t = 0.0;
    for (const auto& p : pts) {
      int node = p.node;
      if (prev_node >= 0 && std::abs(p.t - prev_t) <= kMergeTol) {
        node = prev_node;
      } else if (node < 0) {
        node = horizontal ? add_node(p.t, spec.line_y(w)) : add_node(spec.line_x(w - spec.ny), p.t);
      }
      if (p.sink >= 0) tap_node_of_sink[p.sink] = node;
      if (prev_node >= 0 && node != prev_node) add_wire(prev_node, node, p.t - prev_t, ResistorKind::Mesh);
      if (node != prev_node) {
        prev_node = node;
        prev_t = p.t;
      }
    }
  }

  for (std::size_t k = 0; k < design.sinks.size(); ++k) {
    const auto& s = design.sinks[k];
    const int sn = add_node(s.x, s.y);
    add_wire(tap_node_of_sink[k], sn, std::max(stub_len[k], cfg.stub_min_length), ResistorKind::Stub);
    cap[sn] += s.load_cap;
    net.sink_nodes.push_back({sn, static_cast<int>(k)});
  }

  for (std::size_t b = 0; b < spec.buffer_sites.size(); ++b) {
    const auto& site = spec.buffer_sites[b];
    const int node = spec.intersection_index(site.grid_x, site.grid_y);
    cap[node] += tech.buf_out_cap * site.drive;
    Driver drv{node, tech.buf_out_res / site.drive, 0.0, 0.0};
    if (!arrivals.empty()) {
      drv.input_delay = arrivals[b].input_delay;
      drv.input_slew = arrivals[b].input_slew;
    }
    net.drivers.push_back(drv);
  }

  for (std::size_t n = 0; n < cap.size(); ++n) {
    if (cap[n] > 0.0) net.grounded_caps.push_back({static_cast<int>(n), cap[n]});
  }
  if (!is_connected(net)) throw DataError("netlist " + net.id + " is not connected");
  return net;
}

SynthesizedDesign synthesize(SizeClass cls, MeshStyle style, std::uint64_t seed,
                             const TechParams& tech, const SynthConfig& cfg) {
  SynthesizedDesign out;
  out.design = generate_design(cls, seed, tech, cfg);
  out.design.id = std::string(to_string(cls)) + "-" + std::string(to_string(style)) + "-" +
                  std::to_string(seed);
  out.mesh = place_buffers(out.design, size_mesh(out.design, style, cfg), tech, cfg);
  const auto arrivals = assign_input_arrivals(out.mesh, tech, derive_seed(seed, 0x7ee), cfg);
  out.netlist = build_netlist(out.design, out.mesh, tech, arrivals, cfg);
  return out;
}

}  // namespace meshtime::synth
