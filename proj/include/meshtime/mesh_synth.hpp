#pragma once

// Synthetic clock-mesh designs: die + sinks, mesh sizing, buffer placement,
// top-level tree arrivals and the RC netlist handed to the oracle and the
// graph builder.
//
// Units throughout: µm, fF, ohm, ps.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace meshtime::synth {

enum class SizeClass { Small, Medium, Large };
enum class MeshStyle { Uniform, NonUniform, Fixed50um };

std::string_view to_string(SizeClass c);
std::string_view to_string(MeshStyle s);
SizeClass parse_size_class(std::string_view s);  // throws DataError
MeshStyle parse_mesh_style(std::string_view s);  // throws DataError

struct TechParams {
  double wire_res_per_um = 0.12;
  double wire_cap_per_um = 0.2;
  double buf_out_res = 60.0;  // unit-drive output resistance
  double buf_out_cap = 2.0;   // unit-drive output capacitance
  double buf_in_cap = 1.5;    // unit-drive input capacitance
  double buf_intrinsic_delay = 15.0;
  double buf_slew_gain = 0.5;  // output ramp per ps of input slew
  std::vector<double> drive_strengths{1.0, 2.0, 4.0, 8.0};
  double sink_cap_min = 1.0;
  double sink_cap_max = 4.0;

  // Throws DataError on non-positive parasitics or unsorted drive list.
  void validate() const;
};

// Knobs that are not technology: sizing targets, skew model, stub floor.
struct SynthConfig {
  double sinks_per_cell = 8.0;
  double min_pitch = 20.0;
  double fixed_pitch = 50.0;
  double load_per_drive = 20.0;  // fF one unit of drive is expected to carry
  double skew_sigma = 10.0;      // top-tree mismatch, uniform in [-sigma, sigma]
  double base_slew = 30.0;
  double ref_load = 20.0;
  double stub_min_length = 0.1;
};

struct Sink {
  double x = 0.0;
  double y = 0.0;
  double load_cap = 0.0;
};

struct Blockage {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
};

struct Design {
  std::string id;
  double width = 0.0;
  double height = 0.0;
  std::vector<Sink> sinks;
  std::vector<Blockage> blockages;
  SizeClass size_class = SizeClass::Small;
  std::uint64_t rng_seed = 0;
  double density = 0.0;  // sinks per µm² that was targeted

  double area() const { return width * height; }
};

struct BufferSite {
  int grid_x = 0;
  int grid_y = 0;
  double drive = 1.0;
};

struct MeshSpec {
  int nx = 2;
  int ny = 2;
  double pitch_x = 0.0;
  double pitch_y = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  MeshStyle style = MeshStyle::Uniform;
  std::vector<BufferSite> buffer_sites;

  double line_x(int i) const { return origin_x + pitch_x * i; }
  double line_y(int j) const { return origin_y + pitch_y * j; }
  int intersection_index(int i, int j) const { return j * nx + i; }
};

struct InputArrival {
  double input_delay = 0.0;
  double input_slew = 0.0;
};

struct ElectricalNode {
  double x = 0.0;
  double y = 0.0;
};

enum class ResistorKind { Mesh, Stub };

struct Resistor {
  int a = 0;
  int b = 0;
  double ohms = 0.0;
  double cap = 0.0;  // total wire capacitance of the segment (split pi-style)
  ResistorKind kind = ResistorKind::Mesh;
};

struct GroundedCap {
  int node = 0;
  double cap = 0.0;
};

struct Driver {
  int node = 0;
  double out_res = 0.0;
  double input_delay = 0.0;
  double input_slew = 0.0;
};

struct SinkNode {
  int node = 0;
  int sink_index = 0;
};

struct MeshNetlist {
  std::string id;
  std::vector<ElectricalNode> nodes;
  std::vector<Resistor> resistors;
  std::vector<GroundedCap> grounded_caps;  // at most one entry per node
  std::vector<Driver> drivers;
  std::vector<SinkNode> sink_nodes;
  double mesh_segment_res = 0.0;  // resistance of one full mesh segment
  TechParams tech;

  std::vector<double> node_caps() const;  // dense per-node capacitance
  double total_cap() const;
};

Design generate_design(SizeClass cls, std::uint64_t seed, const TechParams& tech,
                       const SynthConfig& cfg = {});

MeshSpec size_mesh(const Design& design, MeshStyle style, const SynthConfig& cfg = {});

MeshSpec place_buffers(const Design& design, const MeshSpec& spec, const TechParams& tech,
                       const SynthConfig& cfg = {});

// One entry per buffer site, in site order.
std::vector<InputArrival> assign_input_arrivals(const MeshSpec& spec, const TechParams& tech,
                                                std::uint64_t seed, const SynthConfig& cfg = {});

// Arrivals may be empty, in which case drivers get zero delay/slew.
MeshNetlist build_netlist(const Design& design, const MeshSpec& spec, const TechParams& tech,
                          const std::vector<InputArrival>& arrivals = {},
                          const SynthConfig& cfg = {});

// Union-find over the resistor graph.
bool is_connected(const MeshNetlist& net);

// Full pipeline for one design; the building block of `gen`.
struct SynthesizedDesign {
  Design design;
  MeshSpec mesh;
  MeshNetlist netlist;
};

SynthesizedDesign synthesize(SizeClass cls, MeshStyle style, std::uint64_t seed,
                             const TechParams& tech = {}, const SynthConfig& cfg = {});

}  // namespace meshtime::synth
