#include "meshtime/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "meshtime/common.hpp"

namespace meshtime::io {

using graph::MeshGraph;
using graph::NodeKind;

namespace {

Json header(std::string_view schema) {
  Json j;
  j["schema"] = schema;
  j["schema_version"] = kSchemaVersion;
  return j;
}

void check_header(const Json& j, std::string_view schema) {
  if (!j.contains("schema") || j.at("schema").get<std::string>() != schema) {
    throw DataError("expected a '" + std::string(schema) + "' document");
  }
  if (j.at("schema_version").get<int>() != kSchemaVersion) {
    throw DataError("unsupported " + std::string(schema) + " schema version " +
                    std::to_string(j.at("schema_version").get<int>()));
  }
}

const Json kLengthUnits = {{"length", "um"}, {"capacitance", "fF"}};

}  // namespace

Json to_json(const synth::TechParams& t) {
  Json j;
  j["wire_res_per_um"] = t.wire_res_per_um;
  j["wire_cap_per_um"] = t.wire_cap_per_um;
  j["buf_out_res"] = t.buf_out_res;
  j["buf_out_cap"] = t.buf_out_cap;
  j["buf_in_cap"] = t.buf_in_cap;
  j["buf_intrinsic_delay"] = t.buf_intrinsic_delay;
  j["buf_slew_gain"] = t.buf_slew_gain;
  j["drive_strengths"] = t.drive_strengths;
  j["sink_cap_min"] = t.sink_cap_min;
  j["sink_cap_max"] = t.sink_cap_max;
  return j;
}

synth::TechParams tech_from_json(const Json& j) {
  synth::TechParams t;
  t.wire_res_per_um = j.at("wire_res_per_um");
  t.wire_cap_per_um = j.at("wire_cap_per_um");
  t.buf_out_res = j.at("buf_out_res");
  t.buf_out_cap = j.at("buf_out_cap");
  t.buf_in_cap = j.at("buf_in_cap");
  t.buf_intrinsic_delay = j.at("buf_intrinsic_delay");
  t.buf_slew_gain = j.at("buf_slew_gain");
  t.drive_strengths = j.at("drive_strengths").get<std::vector<double>>();
  t.sink_cap_min = j.at("sink_cap_min");
  t.sink_cap_max = j.at("sink_cap_max");
  t.validate();
  return t;
}

Json to_json(const synth::SynthConfig& c) {
  Json j;
  j["sinks_per_cell"] = c.sinks_per_cell;
  j["min_pitch"] = c.min_pitch;
  j["fixed_pitch"] = c.fixed_pitch;
  j["load_per_drive"] = c.load_per_drive;
  j["skew_sigma"] = c.skew_sigma;
  j["base_slew"] = c.base_slew;
  j["ref_load"] = c.ref_load;
  j["stub_min_length"] = c.stub_min_length;
  return j;
}

synth::SynthConfig synth_config_from_json(const Json& j) {
  synth::SynthConfig c;
  c.sinks_per_cell = j.at("sinks_per_cell");
  c.min_pitch = j.at("min_pitch");
  c.fixed_pitch = j.at("fixed_pitch");
  c.load_per_drive = j.at("load_per_drive");
  c.skew_sigma = j.at("skew_sigma");
  c.base_slew = j.at("base_slew");
  c.ref_load = j.at("ref_load");
  c.stub_min_length = j.at("stub_min_length");
  return c;
}

Json to_json(const synth::Design& d) {
  Json j = header("meshtime.design");
  j["units"] = {{"length", "um"}, {"capacitance", "fF"}, {"density", "1/um^2"}};
  j["id"] = d.id;
  j["size_class"] = synth::to_string(d.size_class);
  j["rng_seed"] = d.rng_seed;
  j["width"] = d.width;
  j["height"] = d.height;
  j["density"] = d.density;
  Json sinks = Json::array();
  for (const auto& s : d.sinks) sinks.push_back({{"x", s.x}, {"y", s.y}, {"load_cap", s.load_cap}});
  j["sinks"] = std::move(sinks);
  Json blk = Json::array();
  for (const auto& b : d.blockages) blk.push_back({{"x0", b.x0}, {"y0", b.y0}, {"x1", b.x1}, {"y1", b.y1}});
  j["blockages"] = std::move(blk);
  return j;
}

synth::Design design_from_json(const Json& j) {
  check_header(j, "meshtime.design");
  synth::Design d;
  d.id = j.at("id");
  d.size_class = synth::parse_size_class(j.at("size_class").get<std::string>());
  d.rng_seed = j.at("rng_seed");
  d.width = j.at("width");
  d.height = j.at("height");
  d.density = j.at("density");
  for (const auto& s : j.at("sinks")) d.sinks.push_back({s.at("x"), s.at("y"), s.at("load_cap")});
  for (const auto& b : j.at("blockages")) d.blockages.push_back({b.at("x0"), b.at("y0"), b.at("x1"), b.at("y1")});
  return d;
}

Json to_json(const synth::MeshSpec& m) {
  Json j = header("meshtime.mesh");
  j["units"] = {{"length", "um"}, {"drive_strength", "unit buffer multiples"}};
  j["style"] = synth::to_string(m.style);
  j["nx"] = m.nx;
  j["ny"] = m.ny;
  j["pitch_x"] = m.pitch_x;
  j["pitch_y"] = m.pitch_y;
  j["origin_x"] = m.origin_x;
  j["origin_y"] = m.origin_y;
  Json sites = Json::array();
  for (const auto& b : m.buffer_sites) {
    sites.push_back({{"grid_x", b.grid_x}, {"grid_y", b.grid_y}, {"drive_strength", b.drive}});
  }
  j["buffer_sites"] = std::move(sites);
  return j;
}

synth::MeshSpec mesh_from_json(const Json& j) {
  check_header(j, "meshtime.mesh");
  synth::MeshSpec m;
  m.style = synth::parse_mesh_style(j.at("style").get<std::string>());
  m.nx = j.at("nx");
  m.ny = j.at("ny");
  m.pitch_x = j.at("pitch_x");
  m.pitch_y = j.at("pitch_y");
  m.origin_x = j.at("origin_x");
  m.origin_y = j.at("origin_y");
  for (const auto& b : j.at("buffer_sites")) m.buffer_sites.push_back({b.at("grid_x"), b.at("grid_y"), b.at("drive_strength")});
  return m;
}

Json to_json(const synth::MeshNetlist& n) {
  Json j = header("meshtime.netlist");
  j["units"] = {{"length", "um"}, {"resistance", "ohm"}, {"capacitance", "fF"}, {"time", "ps"}};
  j["id"] = n.id;
  j["mesh_segment_res"] = n.mesh_segment_res;
  j["tech"] = to_json(n.tech);
  Json nodes = Json::array();
  for (std::size_t i = 0; i < n.nodes.size(); ++i) nodes.push_back({{"id", i}, {"x", n.nodes[i].x}, {"y", n.nodes[i].y}});
  j["electrical_nodes"] = std::move(nodes);
  Json res = Json::array();
  for (const auto& r : n.resistors) {
    res.push_back({{"node_a", r.a},
                   {"node_b", r.b},
                   {"ohms", r.ohms},
                   {"cap", r.cap},
                   {"kind", r.kind == synth::ResistorKind::Mesh ? "mesh" : "stub"}});
  }
  j["resistors"] = std::move(res);
  Json caps = Json::array();
  for (const auto& c : n.grounded_caps) caps.push_back({{"node", c.node}, {"cap", c.cap}});
  j["grounded_caps"] = std::move(caps);
  Json drv = Json::array();
  for (const auto& d : n.drivers) {
    drv.push_back({{"node", d.node}, {"out_res", d.out_res}, {"input_delay", d.input_delay}, {"input_slew", d.input_slew}});
  }
  j["drivers"] = std::move(drv);
  Json sinks = Json::array();
  for (const auto& s : n.sink_nodes) sinks.push_back({{"node", s.node}, {"sink_index", s.sink_index}});
  j["sink_nodes"] = std::move(sinks);
  return j;
}

synth::MeshNetlist netlist_from_json(const Json& j) {
  check_header(j, "meshtime.netlist");
  synth::MeshNetlist n;
  n.id = j.at("id");
  n.mesh_segment_res = j.at("mesh_segment_res");
  n.tech = tech_from_json(j.at("tech"));
  const auto& nodes = j.at("electrical_nodes");
  n.nodes.resize(nodes.size());
  for (const auto& e : nodes) {
    const auto id = e.at("id").get<std::size_t>();
    if (id >= n.nodes.size()) throw DataError("electrical node id out of range");
    n.nodes[id] = {e.at("x"), e.at("y")};
  }
  const auto count = static_cast<int>(n.nodes.size());
  auto node_ref = [count](const Json& v) {
    const int id = v.get<int>();
    if (id < 0 || id >= count) throw DataError("netlist references a missing node");
    return id;
  };
  for (const auto& r : j.at("resistors")) {
    synth::Resistor x;
    x.a = node_ref(r.at("node_a"));
    x.b = node_ref(r.at("node_b"));
    x.ohms = r.at("ohms");
    x.cap = r.at("cap");
    const std::string kind = r.at("kind");
    if (kind != "mesh" && kind != "stub") throw DataError("unknown resistor kind '" + kind + "'");
    x.kind = kind == "mesh" ? synth::ResistorKind::Mesh : synth::ResistorKind::Stub;
    if (!(x.ohms > 0.0)) throw DataError("netlist " + n.id + " has a non-positive resistor");
    n.resistors.push_back(x);
  }
  for (const auto& c : j.at("grounded_caps")) n.grounded_caps.push_back({node_ref(c.at("node")), c.at("cap")});
  for (const auto& d : j.at("drivers")) {
    n.drivers.push_back({node_ref(d.at("node")), d.at("out_res"), d.at("input_delay"), d.at("input_slew")});
  }
  for (const auto& s : j.at("sink_nodes")) n.sink_nodes.push_back({node_ref(s.at("node")), s.at("sink_index")});
  return n;
}

Json to_json(const graph::NormStats& s) {
  return {{"feature_mean", s.mean}, {"feature_std", s.stddev}, {"label_mean", s.label_mean}, {"label_std", s.label_std}};
}

graph::NormStats norm_stats_from_json(const Json& j) {
  graph::NormStats s;
  s.mean = j.at("feature_mean").get<std::array<double, graph::kNumFeatures>>();
  s.stddev = j.at("feature_std").get<std::array<double, graph::kNumFeatures>>();
  s.label_mean = j.at("label_mean").get<std::array<double, 2>>();
  s.label_std = j.at("label_std").get<std::array<double, 2>>();
  return s;
}

Json to_json(const MeshGraph& g) {
  Json j = header("meshtime.graph");
  j["units"] = {{"input_delay", "ps"}, {"input_slew", "ps"}, {"cap", "fF"},     {"res", "ohm"},
                {"total_res", "ohm"},  {"min_res", "ohm"},   {"region_cap", "fF"}, {"x", "um"},
                {"y", "um"},           {"delay", "ps"},      {"slew", "ps"}};
  j["design_id"] = g.design_id;
  j["feature_names"] = {"input_delay", "input_slew", "cap", "res", "total_res", "min_res", "region_cap", "x", "y"};
  Json nodes = Json::array();
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    nodes.push_back({{"kind", graph::to_string(g.kinds[i])}, {"origin", g.origin[i]}, {"features", g.features[i]}});
  }
  j["nodes"] = std::move(nodes);
  Json edges = Json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  j["edges"] = std::move(edges);
  if (g.labeled()) {
    Json labels = Json::array();
    for (const auto& l : g.labels) labels.push_back({{"node", l.node}, {"delay", l.delay_ps}, {"slew", l.slew_ps}});
    j["labels"] = std::move(labels);
  }
  if (g.norm_stats) j["norm_stats"] = to_json(*g.norm_stats);
  return j;
}

MeshGraph graph_from_json(const Json& j) {
  check_header(j, "meshtime.graph");
  MeshGraph g;
  g.design_id = j.at("design_id");
  for (const auto& n : j.at("nodes")) {
    const NodeKind k = graph::parse_node_kind(n.at("kind").get<std::string>());
    g.kinds.push_back(k);
    g.origin.push_back(n.at("origin"));
    g.features.push_back(n.at("features").get<graph::NodeFeatures>());
    g.sink_mask.push_back(k == NodeKind::Sink ? 1 : 0);
  }
  for (const auto& e : j.at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  if (j.contains("labels")) {
    for (const auto& l : j.at("labels")) g.labels.push_back({l.at("node"), l.at("delay"), l.at("slew")});
  }
  if (j.contains("norm_stats")) g.norm_stats = norm_stats_from_json(j.at("norm_stats"));
  graph::validate(g);
  return g;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw DataError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, std::string_view text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + p.string());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw DataError("failed writing " + p.string());
}

Json read_json(const std::filesystem::path& p) {
  try {
    return Json::parse(read_text(p));
  } catch (const Json::exception& e) {
    throw DataError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& p, const Json& j) { write_text(p, j.dump(1) + "\n"); }

namespace {

template <typename F>
auto read_doc(const std::filesystem::path& p, F&& f) {
  const Json j = read_json(p);
  try {
    return f(j);
  } catch (const Json::exception& e) {
    throw DataError("invalid document " + p.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

}  // namespace

synth::Design read_design(const std::filesystem::path& p) { return read_doc(p, design_from_json); }
synth::MeshSpec read_mesh(const std::filesystem::path& p) { return read_doc(p, mesh_from_json); }
synth::MeshNetlist read_netlist(const std::filesystem::path& p) { return read_doc(p, netlist_from_json); }
MeshGraph read_graph(const std::filesystem::path& p) { return read_doc(p, graph_from_json); }

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t hash_file(const std::filesystem::path& p) { return fnv1a(read_text(p)); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace meshtime::io
