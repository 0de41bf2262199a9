#pragma once

// JSON documents for designs, meshes, netlists and graphs. Every document
// carries "schema", "schema_version" and a "units" object. Doubles are
// written in shortest round-trip form, so read(write(x)) == x exactly.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "meshtime/graph_builder.hpp"
#include "meshtime/mesh_synth.hpp"
#include "json.hpp"

namespace meshtime::io {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

Json to_json(const synth::TechParams& t);
Json to_json(const synth::SynthConfig& c);
Json to_json(const synth::Design& d);
Json to_json(const synth::MeshSpec& m);
Json to_json(const synth::MeshNetlist& n);
Json to_json(const graph::MeshGraph& g);
Json to_json(const graph::NormStats& s);

synth::TechParams tech_from_json(const Json& j);
synth::SynthConfig synth_config_from_json(const Json& j);
synth::Design design_from_json(const Json& j);
synth::MeshSpec mesh_from_json(const Json& j);
synth::MeshNetlist netlist_from_json(const Json& j);
graph::MeshGraph graph_from_json(const Json& j);
graph::NormStats norm_stats_from_json(const Json& j);

// File helpers. Parse and schema errors become DataError naming the file.
Json read_json(const std::filesystem::path& p);
void write_json(const std::filesystem::path& p, const Json& j);
std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, std::string_view text);

synth::Design read_design(const std::filesystem::path& p);
synth::MeshSpec read_mesh(const std::filesystem::path& p);
synth::MeshNetlist read_netlist(const std::filesystem::path& p);
graph::MeshGraph read_graph(const std::filesystem::path& p);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t hash_file(const std::filesystem::path& p);
std::string hex64(std::uint64_t v);

}  // namespace meshtime::io
