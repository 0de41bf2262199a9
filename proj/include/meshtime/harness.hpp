#pragma once

// The pipeline behind the `meshtime` command: gen -> label -> train ->
// eval / ablate / bench / predict over a dataset directory.
//
// Dataset directory layout:
//   manifest.json              one per directory, a section per command
//   <id>.design.json           die, sinks, blockages
//   <id>.mesh.json             mesh sizing and buffer sites
//   <id>.netlist.json          RC netlist
//   <id>.graph.json            augmented graph (aux nodes included), labels once labeled
// with <id> = <class>-<style>-<seed>.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "meshtime/gnn.hpp"
#include "meshtime/io.hpp"
#include "meshtime/mesh_synth.hpp"

namespace meshtime::harness {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.1.0";

// Merges `entry` into DIR/manifest.json at [section][key].
void update_manifest(const fs::path& dir, const std::string& section, const std::string& key, io::Json entry);

std::vector<std::string> list_designs(const fs::path& dir);  // sorted ids that have a graph
fs::path design_file(const fs::path& dir, const std::string& id, const char* kind);

struct GenOptions {
  int count = 1;
  synth::SizeClass size_class = synth::SizeClass::Small;
  synth::MeshStyle style = synth::MeshStyle::Uniform;
  std::uint64_t seed = 0;  // designs use seeds seed .. seed + count - 1
  fs::path out;
  int jobs = 0;
  synth::TechParams tech;
  synth::SynthConfig synth;
};
std::vector<std::string> gen(const GenOptions& o);

struct LabelOptions {
  fs::path dir;
  int jobs = 0;
};
std::size_t label(const LabelOptions& o);

struct Split {
  std::vector<std::string> train, val, test;
};
std::array<int, 3> parse_split(const std::string& s);  // "80/10/10"
Split split_ids(std::vector<std::string> ids, std::array<int, 3> pct, std::uint64_t seed);

struct TrainOptions {
  fs::path data;
  std::array<int, 3> split{80, 10, 10};
  std::uint64_t seed = 0;
  fs::path out;    // checkpoint
  fs::path curve;  // empty: <out>.curve.csv
  gnn::ModelConfig model;
  gnn::TrainConfig train;
  bool verbose = false;
};
struct TrainOutcome {
  gnn::Checkpoint ckpt;
  std::vector<gnn::EpochStats> curve;
  Split split;
};
TrainOutcome train(const TrainOptions& o);

enum class Baseline { None, FirstOrder };
Baseline parse_baseline(const std::string& s);

struct EvalOptions {
  fs::path ckpt;
  fs::path data;
  Baseline baseline = Baseline::FirstOrder;
  bool all = false;  // default: only the checkpoint's held-out test ids
  fs::path out;      // CSV; empty: none
  int jobs = 0;
};
struct EvalRow {
  gnn::DesignMetrics gnn;
  double baseline_mae_delay = std::numeric_limits<double>::quiet_NaN();
};
struct EvalOutcome {
  std::vector<EvalRow> rows;
  gnn::EvalReport report;
  double baseline_mae_delay = std::numeric_limits<double>::quiet_NaN();  // pooled over sinks
  double baseline_mean_design_mae_delay = std::numeric_limits<double>::quiet_NaN();
};
EvalOutcome evaluate(const EvalOptions& o);
void write_eval_csv(std::ostream& os, const EvalOutcome& r);

struct AblateOptions {
  fs::path data;
  std::uint64_t seed = 0;
  std::array<int, 3> split{80, 10, 10};
  fs::path out;  // directory for the 4 checkpoints and ablation.csv
  gnn::TrainConfig train;
  bool verbose = false;
  int jobs = 0;
};
struct AblationRow {
  std::string variant;
  bool aux = false, jk = false;
  double mae_delay = 0.0, mae_slew = 0.0;
  int best_epoch = 0;
};
std::vector<AblationRow> ablate(const AblateOptions& o);
void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows);

struct BenchOptions {
  fs::path data;
  fs::path ckpt;
  fs::path out;  // CSV; empty: none
  int repeats = 3;
  bool fp32 = true;
};
struct BenchRow {
  std::string design_id;
  std::string size_class;
  std::size_t graph_nodes = 0, electrical_nodes = 0, sinks = 0;
  double oracle_ms = 0.0, first_order_ms = 0.0, gnn_ms = 0.0;
  double speedup() const { return oracle_ms / gnn_ms; }
};
std::vector<BenchRow> bench(const BenchOptions& o);
void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows);

struct PredictOptions {
  fs::path ckpt;
  fs::path input;  // a graph JSON file or a dataset directory
  fs::path out;    // CSV; empty: stdout
};
void predict(const PredictOptions& o, std::ostream& fallback);

}  // namespace meshtime::harness
