#include "meshtime/gnn.hpp"

#include <Eigen/Core>
#include <omp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <type_traits>

#include "meshtime/common.hpp"
#include "json.hpp"

namespace meshtime::gnn {

using ad::Matrix;
using ad::Tensor;
using graph::MeshGraph;
using graph::NodeKind;

std::string_view to_string(JkMode m) { return m == JkMode::Max ? "max" : "none"; }

JkMode parse_jk_mode(std::string_view s) {
  if (s == "max") return JkMode::Max;
  if (s == "none") return JkMode::None;
  throw DataError("unknown jk mode '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw DataError("model needs at least one layer");
  if (heads < 1 || hidden_channels < heads || hidden_channels % heads != 0) {
    throw DataError("hidden_channels must be a positive multiple of heads");
  }
  if (heads > kMaxHeads) throw DataError("at most " + std::to_string(kMaxHeads) + " attention heads");
  if (in_features != graph::kNumFeatures) {
    throw DataError("model expects " + std::to_string(in_features) + " input features, graphs carry " +
                    std::to_string(graph::kNumFeatures));
  }
  if (out_features != 2) throw DataError("readout must have 2 outputs (delay, slew)");
}

std::vector<Tensor> ModelParams::flat() const {
  std::vector<Tensor> out;
  for (const auto& l : layers) {
    out.push_back(l.weight);
    out.push_back(l.att_src);
    out.push_back(l.att_dst);
    out.push_back(l.bias);
  }
  out.push_back(readout_weight);
  out.push_back(readout_bias);
  return out;
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const auto& t : flat()) n += t.value().size();
  return n;
}

std::vector<Matrix> ModelParams::snapshot() const {
  std::vector<Matrix> out;
  for (const auto& t : flat()) out.push_back(t.value());
  return out;
}

void ModelParams::restore(const std::vector<Matrix>& values) {
  auto ts = flat();
  if (values.size() != ts.size()) throw DataError("parameter snapshot has the wrong number of tensors");
  for (std::size_t k = 0; k < ts.size(); ++k) {
    if (!values[k].same_shape(ts[k].value())) throw DataError("parameter snapshot shape mismatch");
    ts[k].value() = values[k];
  }
}

ModelParams ModelParams::clone() const {
  auto copy = [](const Tensor& t) { return Tensor::parameter(t.value()); };
  ModelParams p;
  for (const auto& l : layers) p.layers.push_back({copy(l.weight), copy(l.att_src), copy(l.att_dst), copy(l.bias)});
  p.readout_weight = copy(readout_weight);
  p.readout_bias = copy(readout_bias);
  return p;
}

namespace {

Matrix glorot(Rng& rng, std::size_t rows, std::size_t cols, double fan_in, double fan_out) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, 0x1417));
  const auto hidden = static_cast<std::size_t>(cfg.hidden_channels);
  const auto heads = static_cast<std::size_t>(cfg.heads);
  const auto dim = static_cast<std::size_t>(cfg.head_dim());
  ModelParams p;
  std::size_t d_in = static_cast<std::size_t>(cfg.in_features);
  for (int l = 0; l < cfg.num_layers; ++l) {
    GatLayerParams lp;
    lp.weight = Tensor::parameter(glorot(rng, d_in, hidden, double(d_in), double(hidden)));
    lp.att_src = Tensor::parameter(glorot(rng, heads, dim, double(heads), double(dim)));
    lp.att_dst = Tensor::parameter(glorot(rng, heads, dim, double(heads), double(dim)));
    lp.bias = Tensor::parameter(Matrix(1, hidden));
    p.layers.push_back(std::move(lp));
    d_in = hidden;
  }
  const auto out = static_cast<std::size_t>(cfg.out_features);
  p.readout_weight = Tensor::parameter(glorot(rng, hidden, out, double(hidden), double(out)));
  p.readout_bias = Tensor::parameter(Matrix(1, out));
  return p;
}

PreparedGraph prepare_graph(const MeshGraph& raw, const graph::NormStats& stats, bool aux) {
  MeshGraph g = aux ? raw : graph::strip_aux(raw);
  if (g.norm_stats) g = graph::undo_normalization(g, *g.norm_stats);
  g = graph::apply_normalization(g, stats);

  PreparedGraph p;
  p.design_id = g.design_id;
  p.num_nodes = g.num_nodes();
  if (p.num_nodes == 0) throw DataError("graph " + g.design_id + " is empty");
  p.x = Matrix(p.num_nodes, graph::kNumFeatures);
  for (std::size_t i = 0; i < p.num_nodes; ++i) {
    for (int f = 0; f < graph::kNumFeatures; ++f) p.x(i, f) = g.features[i][f];
  }
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(2 * g.edges.size() + p.num_nodes);
  for (const auto& [a, b] : g.edges) {
    pairs.emplace_back(a, b);
    pairs.emplace_back(b, a);
  }
  for (std::size_t i = 0; i < p.num_nodes; ++i) pairs.emplace_back(int(i), int(i));
  p.edges = kernels::EdgeIndex::from_pairs(p.num_nodes, std::move(pairs));
  p.dst_segments.offsets = p.edges.dst_offsets;
  p.sink_mask = g.sink_mask;
  p.sink_nodes = g.sink_nodes();
  p.target = Matrix(p.num_nodes, 2);
  p.labeled = g.labeled();
  for (const auto& l : g.labels) {
    p.target(l.node, 0) = l.delay_ps;
    p.target(l.node, 1) = l.slew_ps;
  }
  return p;
}

PreparedGraph prepare_graph(const MeshGraph& g, const Model& model) {
  return prepare_graph(g, model.stats, model.config.aux_connections);
}

Tensor gat_layer(const Tensor& h, const GatLayerParams& p, const PreparedGraph& g, int heads, double negative_slope,
                 Tensor* alpha_out) {
  const auto H = static_cast<std::size_t>(heads);
  const Tensor wh = ad::matmul(h, p.weight);
  const Tensor s_src = ad::head_dot(wh, p.att_src, H);
  const Tensor s_dst = ad::head_dot(wh, p.att_dst, H);
  const Tensor e = ad::leaky_relu(
      ad::add(ad::gather_rows(s_src, g.edges.src), ad::gather_rows(s_dst, g.edges.dst)), negative_slope);
  const Tensor alpha = ad::segment_softmax(e, g.dst_segments);
  if (alpha_out) *alpha_out = alpha;
  return ad::add_row(ad::attention_aggregate(alpha, wh, g.edges, H), p.bias);
}

Tensor forward(const Model& m, const PreparedGraph& g, ForwardTrace* trace) {
  const ModelConfig& cfg = m.config;
  if (g.x.cols() != static_cast<std::size_t>(cfg.in_features)) {
    throw DataError("graph feature width does not match the model");
  }
  std::vector<Tensor> hs;
  Tensor h = Tensor::constant(g.x);
  for (const auto& lp : m.params.layers) {
    h = ad::elu(gat_layer(h, lp, g, cfg.heads, cfg.negative_slope));
    hs.push_back(h);
  }
  const Tensor hf = cfg.jk_mode == JkMode::Max ? ad::elementwise_max(hs) : hs.back();
  if (trace) {
    trace->layers = hs;
    trace->final_h = hf;
  }
  const Tensor out = ad::add_row(ad::matmul(hf, m.params.readout_weight), m.params.readout_bias);
  Matrix scale_m(g.num_nodes, 2), shift(1, 2);
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    scale_m(i, 0) = m.stats.label_std[0];
    scale_m(i, 1) = m.stats.label_std[1];
  }
  shift(0, 0) = m.stats.label_mean[0];
  shift(0, 1) = m.stats.label_mean[1];
  return ad::add_row(ad::mul(out, Tensor::constant(std::move(scale_m))), Tensor::constant(std::move(shift)));
}

Tensor sink_loss(const Tensor& pred, const PreparedGraph& g) {
  if (!g.labeled) throw DataError("graph " + g.design_id + " has no labels");
  return ad::mse_masked(pred, Tensor::constant(g.target), g.sink_mask);
}

template <typename T>
InferenceEngine<T>::InferenceEngine(const Model& m) : cfg_(m.config) {
  cfg_.validate();
  auto conv = [](const Matrix& src) {
    std::vector<T> v(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) v[i] = static_cast<T>(src.data()[i]);
    return v;
  };
  for (const auto& lp : m.params.layers) {
    Layer l;
    l.d_in = lp.weight.rows();
    l.weight = conv(lp.weight.value());
    l.att_src = conv(lp.att_src.value());
    l.att_dst = conv(lp.att_dst.value());
    l.bias = conv(lp.bias.value());
    layers_.push_back(std::move(l));
  }
  readout_w_ = conv(m.params.readout_weight.value());
  readout_b_ = conv(m.params.readout_bias.value());
  for (int k = 0; k < 2; ++k) {
    label_mean_[k] = m.stats.label_mean[k];
    label_std_[k] = m.stats.label_std[k];
  }
}

template <typename T>
Matrix InferenceEngine<T>::run(const PreparedGraph& g) const {
  namespace kern = kernels::omp;
  const std::size_t n = g.num_nodes, E = g.edges.num_edges();
  const auto H = static_cast<std::size_t>(cfg_.heads);
  const auto D = static_cast<std::size_t>(cfg_.head_dim());
  const std::size_t W = H * D;
  const T slope = static_cast<T>(cfg_.negative_slope);
  if (g.x.cols() != static_cast<std::size_t>(cfg_.in_features)) {
    throw DataError("graph feature width does not match the model");
  }

  std::vector<T> h(g.x.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<T>(g.x.data()[i]);
  std::vector<T> wh(n * W), out(n * W), s_src(n * H), s_dst(n * H), e(E * H), alpha(E * H), hmax;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    kern::gemm_nn(n, l.d_in, W, h.data(), l.weight.data(), wh.data());
    kern::head_dot(n, H, D, wh.data(), l.att_src.data(), s_src.data());
    kern::head_dot(n, H, D, wh.data(), l.att_dst.data(), s_dst.data());
    for (std::size_t k = 0; k < E; ++k) {
      const T* a = &s_src[g.edges.src[k] * H];
      const T* b = &s_dst[g.edges.dst[k] * H];
      for (std::size_t c = 0; c < H; ++c) {
        const T v = a[c] + b[c];
        e[k * H + c] = std::max(v, T(0)) + slope * std::min(v, T(0));
      }
    }
    if constexpr (std::is_same_v<T, float>) {
      const auto& off = g.edges.dst_offsets;
      for (std::size_t i = 0; i < n; ++i) {
        T mx[kMaxHeads];
        for (std::size_t c = 0; c < H; ++c) mx[c] = -INFINITY;
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
          for (std::size_t c = 0; c < H; ++c) mx[c] = std::max(mx[c], e[k * H + c]);
        }
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
          for (std::size_t c = 0; c < H; ++c) e[k * H + c] -= mx[c];
        }
      }
      Eigen::Map<Eigen::ArrayXf>(alpha.data(), static_cast<Eigen::Index>(E * H)) =
          Eigen::Map<const Eigen::ArrayXf>(e.data(), static_cast<Eigen::Index>(E * H)).exp();
      for (std::size_t i = 0; i < n; ++i) {
        T sum[kMaxHeads] = {};
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
          for (std::size_t c = 0; c < H; ++c) sum[c] += alpha[k * H + c];
        }
        for (std::size_t k = off[i]; k < off[i + 1]; ++k) {
          for (std::size_t c = 0; c < H; ++c) alpha[k * H + c] /= sum[c];
        }
      }
    } else {
      kern::segment_softmax(g.edges.dst_offsets, H, e.data(), alpha.data());
    }
    kern::attention_aggregate(g.edges, H, D, alpha.data(), wh.data(), out.data());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < W; ++j) out[i * W + j] += l.bias[j];
    }
    if constexpr (std::is_same_v<T, float>) {
      // Branch-free so Eigen vectorizes it; fp64 keeps std::expm1 to match forward() exactly.
      Eigen::Map<Eigen::ArrayXf> a(out.data(), static_cast<Eigen::Index>(out.size()));
      a = (a.min(0.0f).exp() - 1.0f) + a.max(0.0f);
    } else {
      for (auto& v : out) v = v > T(0) ? v : std::expm1(v);
    }
    if (cfg_.jk_mode == JkMode::Max) {
      if (li == 0) {
        hmax = out;
      } else {
        for (std::size_t i = 0; i < hmax.size(); ++i) hmax[i] = std::max(hmax[i], out[i]);
      }
    }
    h.swap(out);
    out.resize(n * W);
  }
  const std::vector<T>& hf = cfg_.jk_mode == JkMode::Max ? hmax : h;
  std::vector<T> y(n * 2);
  kern::gemm_nn(n, W, std::size_t(2), hf.data(), readout_w_.data(), y.data());
  Matrix res(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 2; ++k) {
      const double v = static_cast<double>(y[i * 2 + k] + readout_b_[k]);
      res(i, k) = v * label_std_[k] + label_mean_[k];
    }
  }
  return res;
}

template class InferenceEngine<float>;
template class InferenceEngine<double>;

namespace {

double masked_mse(const Matrix& pred, const PreparedGraph& g) {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    if (!g.sink_mask[i]) continue;
    for (std::size_t c = 0; c < 2; ++c) {
      const double d = pred(i, c) - g.target(i, c);
      s += d * d;
    }
    ++count;
  }
  if (count == 0) throw DataError("graph " + g.design_id + " has no sinks");
  return s / static_cast<double>(2 * count);
}

}  // namespace

double graph_loss(const Model& m, const PreparedGraph& g) {
  if (!g.labeled) throw DataError("graph " + g.design_id + " has no labels");
  return masked_mse(InferenceEngine<double>(m).run(g), g);
}

bool EarlyStopper::update(int epoch, double val) {
  if (val < best) {
    best = val;
    best_epoch = epoch;
    since_best = 0;
    return true;
  }
  ++since_best;
  return false;
}

namespace {

double mean_loss(const InferenceEngine<double>& eng, std::span<const PreparedGraph> set) {
  std::vector<double> losses(set.size());
  const auto n = static_cast<std::ptrdiff_t>(set.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) losses[i] = masked_mse(eng.run(set[i]), set[i]);
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(set.size());
}

}  // namespace

TrainResult train(Model& m, std::span<const PreparedGraph> train_set, std::span<const PreparedGraph> val_set,
                  const TrainConfig& cfg) {
  if (train_set.empty()) throw DataError("training split is empty");
  if (val_set.empty()) throw DataError("validation split is empty");
  for (const auto& g : train_set) {
    if (!g.labeled) throw DataError("training graph " + g.design_id + " has no labels");
  }
  for (const auto& g : val_set) {
    if (!g.labeled) throw DataError("validation graph " + g.design_id + " has no labels");
  }

  Rng rng(derive_seed(cfg.seed, 0x5a1e));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  ad::Adam opt(cfg.adam);
  std::vector<Tensor> params = m.params.flat();
  EarlyStopper stopper{cfg.patience};
  std::vector<Matrix> best = m.params.snapshot();

  TrainResult res;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double sum = 0.0;
    for (std::size_t idx : order) {
      const PreparedGraph& g = train_set[idx];
      const Tensor loss = sink_loss(forward(m, g), g);
      if (!std::isfinite(loss.item())) {
        throw NumericalError("training diverged (loss " + std::to_string(loss.item()) + ") at epoch " +
                             std::to_string(epoch) + " on " + g.design_id + ", seed " + std::to_string(cfg.seed));
      }
      for (auto& p : params) p.zero_grad();
      ad::backward(loss);
      try {
        opt.step(params);
      } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + " on " + g.design_id +
                             ", seed " + std::to_string(cfg.seed));
      }
      sum += loss.item();
    }
    EpochStats st{epoch, sum / static_cast<double>(train_set.size()), 0.0};
    st.val_mse = mean_loss(InferenceEngine<double>(m), val_set);
    res.curve.push_back(st);
    if (cfg.on_epoch) cfg.on_epoch(st);
    if (stopper.update(epoch, st.val_mse)) best = m.params.snapshot();
    if (stopper.should_stop()) {
      res.stopped_early = true;
      break;
    }
  }
  m.params.restore(best);
  for (auto& p : params) p.zero_grad();

  const InferenceEngine<double> eng(m);
  res.meta.seed = cfg.seed;
  res.meta.epochs_run = static_cast<int>(res.curve.size());
  res.meta.best_epoch = stopper.best_epoch;
  res.meta.best_val_mse = stopper.best;
  res.meta.train_mse = mean_loss(eng, train_set);
  for (const auto& g : train_set) {
    const Matrix pred = eng.run(g);
    double ad_sum = 0.0, as_sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < g.num_nodes; ++i) {
      if (!g.sink_mask[i]) continue;
      ad_sum += std::abs(pred(i, 0) - g.target(i, 0));
      as_sum += std::abs(pred(i, 1) - g.target(i, 1));
      ++count;
    }
    res.meta.max_train_mae_delay = std::max(res.meta.max_train_mae_delay, ad_sum / double(count));
    res.meta.max_train_mae_slew = std::max(res.meta.max_train_mae_slew, as_sum / double(count));
    res.meta.train_ids.push_back(g.design_id);
  }
  for (const auto& g : val_set) res.meta.val_ids.push_back(g.design_id);
  res.adam_steps = opt.steps();
  res.adam_m = opt.first_moments();
  res.adam_v = opt.second_moments();
  return res;
}

void write_curve_csv(std::ostream& os, std::span<const EpochStats> curve) {
  os << "epoch,train_mse,val_mse\n";
  char buf[96];
  for (const auto& s : curve) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", s.epoch, s.train_mse, s.val_mse);
    os << buf;
  }
}

namespace {

constexpr char kMagic[8] = {'G', 'M', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

void put_f64s(std::ostream& os, const std::vector<Matrix>& ms) {
  for (const auto& m : ms) {
    for (double d : m.values()) put_u64(os, std::bit_cast<std::uint64_t>(d));
  }
}

void get_f64s(std::istream& is, std::vector<Matrix>& ms) {
  for (auto& m : ms) {
    for (double& d : m.values()) d = std::bit_cast<double>(get_u64(is));
  }
}

nlohmann::json stats_json(const graph::NormStats& s) {
  return {{"feature_mean", s.mean},
          {"feature_std", s.stddev},
          {"label_mean", s.label_mean},
          {"label_std", s.label_std}};
}

graph::NormStats stats_from_json(const nlohmann::json& j) {
  graph::NormStats s;
  s.mean = j.at("feature_mean").get<std::array<double, graph::kNumFeatures>>();
  s.stddev = j.at("feature_std").get<std::array<double, graph::kNumFeatures>>();
  s.label_mean = j.at("label_mean").get<std::array<double, 2>>();
  s.label_std = j.at("label_std").get<std::array<double, 2>>();
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const ModelConfig& c = ck.model.config;
  const TrainingMetadata& md = ck.meta;
  nlohmann::json h;
  h["format"] = "meshtime-checkpoint";
  h["version"] = 1;
  h["config"] = {{"num_layers", c.num_layers},
                 {"hidden_channels", c.hidden_channels},
                 {"heads", c.heads},
                 {"jk_mode", std::string(to_string(c.jk_mode))},
                 {"aux_connections", c.aux_connections},
                 {"negative_slope", c.negative_slope},
                 {"in_features", c.in_features},
                 {"out_features", c.out_features},
                 {"activation", "elu"},
                 {"layer", "gatconv"}};
  h["norm_stats"] = stats_json(ck.model.stats);
  h["metadata"] = {{"seed", md.seed},
                   {"epochs_run", md.epochs_run},
                   {"best_epoch", md.best_epoch},
                   {"best_val_mse", md.best_val_mse},
                   {"train_mse", md.train_mse},
                   {"max_train_mae_delay", md.max_train_mae_delay},
                   {"max_train_mae_slew", md.max_train_mae_slew},
                   {"init", md.init},
                   {"split", {{"train", md.train_ids}, {"val", md.val_ids}, {"test", md.test_ids}}}};
  h["optimizer"] = {{"name", "adam"},
                    {"lr", ck.adam.lr},
                    {"beta1", ck.adam.beta1},
                    {"beta2", ck.adam.beta2},
                    {"eps", ck.adam.eps},
                    {"weight_decay", ck.adam.weight_decay},
                    {"steps", ck.adam_steps},
                    {"has_moments", !ck.adam_m.empty()}};
  std::vector<nlohmann::json> shapes;
  for (const auto& t : ck.model.params.flat()) shapes.push_back({t.rows(), t.cols()});
  h["param_shapes"] = shapes;

  const std::string header = h.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  os.write(kMagic, sizeof kMagic);
  put_u64(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u64(os, ck.model.params.count());
  put_f64s(os, ck.model.params.snapshot());
  if (!ck.adam_m.empty()) {
    put_f64s(os, ck.adam_m);
    put_f64s(os, ck.adam_v);
  }
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path.string() + " is not a meshtime checkpoint");
  }
  const std::uint64_t hlen = get_u64(is);
  if (hlen > (1u << 26)) throw DataError("checkpoint header too large");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw DataError("checkpoint truncated");

  Checkpoint ck;
  try {
    const auto h = nlohmann::json::parse(header);
    const auto& c = h.at("config");
    ModelConfig& cfg = ck.model.config;
    cfg.num_layers = c.at("num_layers");
    cfg.hidden_channels = c.at("hidden_channels");
    cfg.heads = c.at("heads");
    cfg.jk_mode = parse_jk_mode(c.at("jk_mode").get<std::string>());
    cfg.aux_connections = c.at("aux_connections");
    cfg.negative_slope = c.at("negative_slope");
    cfg.in_features = c.at("in_features");
    cfg.out_features = c.at("out_features");
    cfg.validate();
    ck.model.stats = stats_from_json(h.at("norm_stats"));
    const auto& md = h.at("metadata");
    ck.meta.seed = md.at("seed");
    ck.meta.epochs_run = md.at("epochs_run");
    ck.meta.best_epoch = md.at("best_epoch");
    ck.meta.best_val_mse = md.at("best_val_mse");
    ck.meta.train_mse = md.at("train_mse");
    ck.meta.max_train_mae_delay = md.at("max_train_mae_delay");
    ck.meta.max_train_mae_slew = md.at("max_train_mae_slew");
    ck.meta.init = md.at("init");
    ck.meta.train_ids = md.at("split").at("train").get<std::vector<std::string>>();
    ck.meta.val_ids = md.at("split").at("val").get<std::vector<std::string>>();
    ck.meta.test_ids = md.at("split").at("test").get<std::vector<std::string>>();
    const auto& o = h.at("optimizer");
    ck.adam.lr = o.at("lr");
    ck.adam.beta1 = o.at("beta1");
    ck.adam.beta2 = o.at("beta2");
    ck.adam.eps = o.at("eps");
    ck.adam.weight_decay = o.at("weight_decay");
    ck.adam_steps = o.at("steps");
    ck.model.params = init_params(cfg, 0);
    const bool moments = o.at("has_moments");
    const auto shapes = h.at("param_shapes");
    auto flat = ck.model.params.flat();
    if (shapes.size() != flat.size()) throw DataError("checkpoint parameter layout does not match its config");
    for (std::size_t k = 0; k < flat.size(); ++k) {
      if (shapes[k][0].get<std::size_t>() != flat[k].rows() || shapes[k][1].get<std::size_t>() != flat[k].cols()) {
        throw DataError("checkpoint parameter shape does not match its config");
      }
    }
    const std::uint64_t count = get_u64(is);
    if (count != ck.model.params.count()) throw DataError("checkpoint parameter count mismatch");
    std::vector<Matrix> vals = ck.model.params.snapshot();
    get_f64s(is, vals);
    ck.model.params.restore(vals);
    if (moments) {
      ck.adam_m = vals;
      ck.adam_v = vals;
      get_f64s(is, ck.adam_m);
      get_f64s(is, ck.adam_v);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ck;
}

std::vector<SinkPrediction> predict(const Model& m, const MeshGraph& g) {
  if (g.count(NodeKind::Buffer) == 0) throw DataError("graph " + g.design_id + " has no buffer nodes");
  if (g.count(NodeKind::Sink) == 0) throw DataError("graph " + g.design_id + " has no sink nodes");
  const PreparedGraph p = prepare_graph(g, m);
  const Matrix out = InferenceEngine<double>(m).run(p);
  std::vector<SinkPrediction> res;
  for (int node : p.sink_nodes) res.push_back({node, out(node, 0), out(node, 1)});
  return res;
}

DesignMetrics score(const MeshGraph& g, std::span<const SinkPrediction> pred) {
  if (!g.labeled()) throw DataError("graph " + g.design_id + " has no labels");
  DesignMetrics d;
  d.design_id = g.design_id;
  d.nodes = g.num_nodes();
  d.buffers = g.count(NodeKind::Buffer);
  d.sinks = g.labels.size();
  std::vector<const graph::SinkLabel*> by_node(g.num_nodes(), nullptr);
  for (const auto& l : g.labels) by_node[l.node] = &l;
  std::size_t matched = 0;
  for (const auto& p : pred) {
    if (p.node < 0 || static_cast<std::size_t>(p.node) >= by_node.size() || !by_node[p.node]) {
      throw DataError("prediction for a non-sink node in " + g.design_id);
    }
    d.mae_delay += std::abs(p.delay_ps - by_node[p.node]->delay_ps);
    d.mae_slew += std::abs(p.slew_ps - by_node[p.node]->slew_ps);
    ++matched;
  }
  if (matched != d.sinks) throw DataError("predictions do not cover every sink of " + g.design_id);
  for (const auto& l : g.labels) d.mean_delay += l.delay_ps;
  const double n = static_cast<double>(d.sinks);
  d.mae_delay /= n;
  d.mae_slew /= n;
  d.mean_delay /= n;
  return d;
}

EvalReport summarize(std::vector<DesignMetrics> designs) {
  EvalReport r;
  r.designs = std::move(designs);
  double sinks = 0.0;
  for (const auto& d : r.designs) {
    const double n = static_cast<double>(d.sinks);
    r.mae_delay += d.mae_delay * n;
    r.mae_slew += d.mae_slew * n;
    r.mean_delay += d.mean_delay * n;
    r.mean_design_mae_delay += d.mae_delay;
    r.mean_design_mae_slew += d.mae_slew;
    sinks += n;
  }
  if (sinks > 0) {
    r.mae_delay /= sinks;
    r.mae_slew /= sinks;
    r.mean_delay /= sinks;
    r.mean_design_mae_delay /= static_cast<double>(r.designs.size());
    r.mean_design_mae_slew /= static_cast<double>(r.designs.size());
  }
  return r;
}

EvalReport evaluate(const Model& m, std::span<const MeshGraph> graphs, int jobs) {
  const InferenceEngine<double> eng(m);
  std::vector<DesignMetrics> out(graphs.size());
  std::vector<std::string> errors(graphs.size());
  const int threads = jobs > 0 ? jobs : omp_get_max_threads();
  const auto n = static_cast<std::ptrdiff_t>(graphs.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const PreparedGraph p = prepare_graph(graphs[i], m);
      const Matrix y = eng.run(p);
      std::vector<SinkPrediction> pred;
      for (int node : p.sink_nodes) pred.push_back({node, y(node, 0), y(node, 1)});
      out[i] = score(graphs[i], pred);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return summarize(std::move(out));
}

}  // namespace meshtime::gnn
