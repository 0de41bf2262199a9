#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "meshtime/mesh_synth.hpp"

namespace meshtime::graph {

enum class NodeKind : std::uint8_t { Buffer, Tap, Wire, Sink, Aux };

std::string_view to_string(NodeKind k);  // "B", "T", "W", "S", "X"
NodeKind parse_node_kind(std::string_view s);

inline constexpr int kNumFeatures = 9;

enum Feature : int {
  kInputDelay = 0,
  kInputSlew,
  kCap,
  kRes,
  kTotalRes,
  kMinRes,
  kRegionCap,
  kX,
  kY,
};

using NodeFeatures = std::array<double, kNumFeatures>;

// Which features a node kind carries; everything else is held at exactly 0.
bool feature_allowed(NodeKind kind, int feature);

struct SinkLabel {
  int node = 0;
  double delay_ps = 0.0;
  double slew_ps = 0.0;
};

struct NormStats {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> stddev{};
  std::array<double, 2> label_mean{};
  std::array<double, 2> label_std{1.0, 1.0};
};

struct MeshGraph {
  std::string design_id;
  std::vector<NodeKind> kinds;
  std::vector<NodeFeatures> features;
  // Electrical node for B/T/S, resistor index for W, -1 for X.
  std::vector<int> origin;
  std::vector<std::pair<int, int>> edges;  // undirected, first < second, sorted, unique
  std::vector<std::uint8_t> sink_mask;
  std::vector<SinkLabel> labels;  // sorted by node
  std::optional<NormStats> norm_stats;

  std::size_t num_nodes() const { return kinds.size(); }
  std::size_t count(NodeKind k) const;
  bool labeled() const { return !labels.empty(); }
  // Graph node ids of the sinks, in netlist sink order.
  std::vector<int> sink_nodes() const;
};

// Adjacency over the resistor network with resistance weights.
class ResistorGraph {
 public:
  explicit ResistorGraph(const synth::MeshNetlist& net);

  std::size_t size() const { return caps_.size(); }
  double cap(int n) const { return caps_[n]; }

  // Single-source shortest paths. `offset` is added at the source. When
  // `path_cap` is non-null it receives the summed grounded capacitance along
  // each chosen path, both endpoints included.
  void dijkstra(int source, double offset, std::vector<double>& dist,
                std::vector<double>* path_cap = nullptr) const;

  double region_cap(int node, double res_limit) const;

 private:
  std::vector<std::size_t> offsets_;
  std::vector<int> targets_;
  std::vector<double> weights_;
  std::vector<double> caps_;
};

// Per-buffer minimum path driving resistance (out_res + interconnect).
struct ResistancePaths {
  std::size_t num_nodes = 0;
  std::size_t num_buffers = 0;
  std::vector<double> res;       // [buffer * num_nodes + node]
  std::vector<double> path_cap;  // same layout
  std::vector<double> min_res;
  std::vector<int> argmin;  // lowest buffer index on ties

  double at(std::size_t buffer, std::size_t node) const { return res[buffer * num_nodes + node]; }
  double cap_at(std::size_t buffer, std::size_t node) const {
    return path_cap[buffer * num_nodes + node];
  }
  std::vector<double> per_buffer(std::size_t node) const;
};

ResistancePaths shortest_res_paths(const synth::MeshNetlist& net);
ResistancePaths shortest_res_paths(const synth::MeshNetlist& net, const ResistorGraph& rg);

// Parallel combination of each buffer's best path.
double compute_total_res(std::span<const double> per_buffer_res);

double compute_region_cap(const synth::MeshNetlist& net, int node, double res_limit);

// Base graph (B/T/W/S). res_limit <= 0 selects net.mesh_segment_res.
MeshGraph netlist_to_graph(const synth::MeshNetlist& net, double res_limit = 0.0);
MeshGraph netlist_to_graph(const synth::MeshNetlist& net, const ResistorGraph& rg,
                           const ResistancePaths& paths, double res_limit = 0.0);

void add_sink_driver_aux(MeshGraph& g, const synth::MeshNetlist& net, const ResistancePaths& paths);
void add_buffer_contention_aux(MeshGraph& g, const synth::MeshNetlist& net,
                               const ResistancePaths& paths);

// netlist_to_graph followed by both aux passes when `aux` is set.
MeshGraph build_graph(const synth::MeshNetlist& net, bool aux = true);

// Drops X nodes and their edges; node ids of the remaining nodes are kept.
MeshGraph strip_aux(const MeshGraph& g);

// Attaches per-sink labels given in netlist sink order.
void attach_labels(MeshGraph& g, std::span<const double> delay_ps, std::span<const double> slew_ps);

// Throws DataError naming the first violated structural invariant.
void validate(const MeshGraph& g);

NormStats compute_norm_stats(std::span<const MeshGraph> graphs);
MeshGraph apply_normalization(const MeshGraph& g, const NormStats& stats);
MeshGraph undo_normalization(const MeshGraph& g, const NormStats& stats);
std::pair<std::vector<MeshGraph>, NormStats> normalize_features(std::span<const MeshGraph> graphs);

}  // namespace meshtime::graph
