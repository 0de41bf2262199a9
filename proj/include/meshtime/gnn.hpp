#pragma once

// Graph-attention network over mesh graphs: stacked multi-head GAT layers
// with ELU, Jumping-Knowledge max over the layer outputs, and a linear
// 2-output readout (delay, slew in ps) evaluated on sink nodes.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "meshtime/autodiff.hpp"
#include "meshtime/graph_builder.hpp"
#include "meshtime/kernels.hpp"

namespace meshtime::gnn {

inline constexpr int kMaxHeads = 16;

enum class JkMode { Max, None };

std::string_view to_string(JkMode m);
JkMode parse_jk_mode(std::string_view s);

struct ModelConfig {
  int num_layers = 8;
  int hidden_channels = 64;
  int heads = 4;
  JkMode jk_mode = JkMode::Max;
  bool aux_connections = true;
  double negative_slope = 0.2;
  int in_features = graph::kNumFeatures;
  int out_features = 2;

  int head_dim() const { return hidden_channels / heads; }
  void validate() const;  // throws DataError
};

// Heads are packed side by side: W is [d_in x heads*head_dim], head h owns
// columns [h*head_dim, (h+1)*head_dim).
struct GatLayerParams {
  ad::Tensor weight;   // d_in x hidden
  ad::Tensor att_src;  // heads x head_dim
  ad::Tensor att_dst;  // heads x head_dim
  ad::Tensor bias;     // 1 x hidden
};

struct ModelParams {
  std::vector<GatLayerParams> layers;
  ad::Tensor readout_weight;  // hidden x out
  ad::Tensor readout_bias;    // 1 x out

  // Layer order: per layer weight, att_src, att_dst, bias; then readout.
  std::vector<ad::Tensor> flat() const;
  std::size_t count() const;
  std::vector<ad::Matrix> snapshot() const;
  void restore(const std::vector<ad::Matrix>& values);
  // Copies share tensors; clone() does not.
  ModelParams clone() const;
};

// Glorot-uniform weights and attention vectors, zero biases.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct Model {
  ModelConfig config;
  ModelParams params;
  graph::NormStats stats;
};

// A graph ready for the network: normalized features and the directed
// message edges (both directions of every undirected edge plus a self loop
// per node), grouped by destination.
struct PreparedGraph {
  std::string design_id;
  std::size_t num_nodes = 0;
  ad::Matrix x;
  kernels::EdgeIndex edges;
  ad::Segments dst_segments;
  std::vector<std::uint8_t> sink_mask;
  std::vector<int> sink_nodes;  // netlist sink order
  ad::Matrix target;            // ps, zero rows on non-sinks
  bool labeled = false;
};

// `g` holds raw features. Aux nodes are dropped when `aux` is false.
PreparedGraph prepare_graph(const graph::MeshGraph& g, const graph::NormStats& stats, bool aux);
PreparedGraph prepare_graph(const graph::MeshGraph& g, const Model& model);

// One GAT layer before its activation. Exposes attention weights when asked.
ad::Tensor gat_layer(const ad::Tensor& h, const GatLayerParams& p, const PreparedGraph& g, int heads,
                     double negative_slope, ad::Tensor* alpha_out = nullptr);

struct ForwardTrace {
  std::vector<ad::Tensor> layers;  // post-activation h^1..h^L
  ad::Tensor final_h;
};

// Per-node predictions in ps, N x 2.
ad::Tensor forward(const Model& m, const PreparedGraph& g, ForwardTrace* trace = nullptr);

// Mean over sinks of (d_delay^2 + d_slew^2) / 2, in ps^2.
ad::Tensor sink_loss(const ad::Tensor& pred, const PreparedGraph& g);

// Tape-free forward pass at scalar precision T. Matches forward() at T =
// double.
template <typename T>
class InferenceEngine {
 public:
  explicit InferenceEngine(const Model& m);
  ad::Matrix run(const PreparedGraph& g) const;

 private:
  struct Layer {
    std::size_t d_in = 0;
    std::vector<T> weight, att_src, att_dst, bias;
  };
  ModelConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<T> readout_w_, readout_b_;
  double label_mean_[2] = {0, 0}, label_std_[2] = {1, 1};
};

extern template class InferenceEngine<float>;
extern template class InferenceEngine<double>;

double graph_loss(const Model& m, const PreparedGraph& g);

struct EarlyStopper {
  int patience = 20;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int since_best = 0;

  // Returns true when `val` is a new best.
  bool update(int epoch, double val);
  bool should_stop() const { return since_best >= patience; }
};

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
};

struct TrainConfig {
  int max_epochs = 1000;
  int patience = 20;
  std::uint64_t seed = 0;
  ad::AdamConfig adam;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_mse = 0.0;
  double train_mse = 0.0;  // at the restored weights
  double max_train_mae_delay = 0.0;
  double max_train_mae_slew = 0.0;
  std::string init = "glorot_uniform";
  std::vector<std::string> train_ids, val_ids, test_ids;
};

struct TrainResult {
  std::vector<EpochStats> curve;
  TrainingMetadata meta;
  bool stopped_early = false;
  std::uint64_t adam_steps = 0;
  std::vector<ad::Matrix> adam_m, adam_v;
};

// Trains `m` in place (batch size 1, seeded shuffle, early stopping on the
// validation loss) and leaves the best-validation weights in it.
TrainResult train(Model& m, std::span<const PreparedGraph> train_set, std::span<const PreparedGraph> val_set,
                  const TrainConfig& cfg);

void write_curve_csv(std::ostream& os, std::span<const EpochStats> curve);

struct Checkpoint {
  Model model;
  TrainingMetadata meta;
  ad::AdamConfig adam;
  std::uint64_t adam_steps = 0;
  std::vector<ad::Matrix> adam_m, adam_v;  // empty when not saved
};

// Binary layout: "GMCKPT01", u64 header length, JSON header, u64 parameter
// count, parameters as little-endian f64 in ModelParams::flat() order,
// then the optimizer moments (m then v) in the same order when present.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct SinkPrediction {
  int node = 0;  // graph node id
  double delay_ps = 0.0;
  double slew_ps = 0.0;
};

// Throws DataError for graphs without buffers or sinks.
std::vector<SinkPrediction> predict(const Model& m, const graph::MeshGraph& g);

struct DesignMetrics {
  std::string design_id;
  std::size_t nodes = 0, buffers = 0, sinks = 0;
  double mean_delay = 0.0;
  double mae_delay = 0.0;
  double mae_slew = 0.0;
};

struct EvalReport {
  std::vector<DesignMetrics> designs;
  double mae_delay = 0.0;  // pooled over every sink
  double mae_slew = 0.0;
  double mean_design_mae_delay = 0.0;
  double mean_design_mae_slew = 0.0;
  double mean_delay = 0.0;
};

DesignMetrics score(const graph::MeshGraph& g, std::span<const SinkPrediction> pred);
EvalReport summarize(std::vector<DesignMetrics> designs);
// Parallel across graphs; results do not depend on `jobs`.
EvalReport evaluate(const Model& m, std::span<const graph::MeshGraph> graphs, int jobs = 0);

}  // namespace meshtime::gnn
