#include "meshtime/harness.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "meshtime/common.hpp"
#include "meshtime/first_order.hpp"
#include "meshtime/rc_oracle.hpp"

namespace meshtime::harness {

using io::Json;

namespace {

int thread_count(int jobs) { return jobs > 0 ? jobs : omp_get_max_threads(); }

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Rethrows the first collected error with its original category.
void raise_first(const std::vector<std::string>& errors, const std::vector<char>& numerical) {
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i].empty()) continue;
    if (numerical[i]) throw NumericalError(errors[i]);
    throw DataError(errors[i]);
  }
}

}  // namespace

void update_manifest(const fs::path& dir, const std::string& section, const std::string& key, Json entry) {
  const fs::path p = dir / "manifest.json";
  Json m;
  if (fs::exists(p)) m = io::read_json(p);
  m["tool"] = "meshtime";
  m["version"] = kToolVersion;
  m[section][key] = std::move(entry);
  io::write_json(p, m);
}

fs::path design_file(const fs::path& dir, const std::string& id, const char* kind) {
  return dir / (id + "." + kind + ".json");
}

std::vector<std::string> list_designs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  std::vector<std::string> ids;
  const std::string suffix = ".graph.json";
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) ids.push_back(name.substr(0, name.size() - suffix.size()));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<std::string> gen(const GenOptions& o) {
  if (o.count < 1) throw DataError("--count must be at least 1");
  if (o.out.empty()) throw DataError("--out is required");
  o.tech.validate();
  fs::create_directories(o.out);

  const auto n = static_cast<std::ptrdiff_t>(o.count);
  std::vector<synth::SynthesizedDesign> designs(o.count);
  std::vector<graph::MeshGraph> graphs(o.count);
  std::vector<std::string> errors(o.count);
  std::vector<char> numerical(o.count, 0);
#pragma omp parallel for schedule(dynamic) num_threads(thread_count(o.jobs))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
    try {
      designs[i] = synth::synthesize(o.size_class, o.style, seed, o.tech, o.synth);
      graphs[i] = graph::build_graph(designs[i].netlist);
    } catch (const std::exception& e) {
      errors[i] = "generation failed for seed " + std::to_string(seed) + ": " + e.what();
      numerical[i] = dynamic_cast<const NumericalError*>(&e) != nullptr;
    }
  }
  raise_first(errors, numerical);

  std::vector<std::string> ids;
  Json outputs = Json::object();
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& d = designs[i];
    const std::string& id = d.design.id;
    ids.push_back(id);
    const std::pair<const char*, Json> docs[] = {{"design", io::to_json(d.design)},
                                                 {"mesh", io::to_json(d.mesh)},
                                                 {"netlist", io::to_json(d.netlist)},
                                                 {"graph", io::to_json(graphs[i])}};
    for (const auto& [kind, doc] : docs) {
      const fs::path p = design_file(o.out, id, kind);
      const std::string text = doc.dump(1) + "\n";
      io::write_text(p, text);
      outputs[p.filename().string()] = io::hex64(io::fnv1a(text));
    }
  }
  const std::string key = std::string(synth::to_string(o.size_class)) + "-" +
                          std::string(synth::to_string(o.style)) + "-" + std::to_string(o.seed) + "-n" +
                          std::to_string(o.count);
  update_manifest(o.out, "gen", key,
                  {{"count", o.count},
                   {"class", synth::to_string(o.size_class)},
                   {"style", synth::to_string(o.style)},
                   {"seed", o.seed},
                   {"tech", io::to_json(o.tech)},
                   {"synth", io::to_json(o.synth)},
                   {"designs", ids},
                   {"outputs", outputs}});
  return ids;
}

std::size_t label(const LabelOptions& o) {
  const std::vector<std::string> ids = list_designs(o.dir);
  if (ids.empty()) throw DataError("no designs in " + o.dir.string());
  std::vector<synth::MeshNetlist> nets(ids.size());
  std::vector<graph::MeshGraph> graphs(ids.size());
  Json inputs = Json::object();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const fs::path np = design_file(o.dir, ids[i], "netlist");
    nets[i] = io::read_netlist(np);
    graphs[i] = io::read_graph(design_file(o.dir, ids[i], "graph"));
    inputs[np.filename().string()] = io::hex64(io::hash_file(np));
  }
  oracle::label_dataset(nets, graphs, thread_count(o.jobs));
  for (std::size_t i = 0; i < ids.size(); ++i) io::write_json(design_file(o.dir, ids[i], "graph"), io::to_json(graphs[i]));
  const oracle::SimOptions so;
  update_manifest(o.dir, "label", "oracle",
                  {{"method", "trapezoidal, fixed step, sparse LDLT"},
                   {"delay_threshold", so.delay_threshold},
                   {"slew_low", so.slew_low},
                   {"slew_high", so.slew_high},
                   {"time_reference", "clock root, t = 0"},
                   {"designs", ids.size()},
                   {"inputs", inputs}});
  return ids.size();
}

std::array<int, 3> parse_split(const std::string& s) {
  std::array<int, 3> p{};
  char a = 0, b = 0;
  std::istringstream is(s);
  if (!(is >> p[0] >> a >> p[1] >> b >> p[2]) || a != '/' || b != '/' || !is.eof() || p[0] <= 0 || p[1] <= 0 ||
      p[2] < 0 || p[0] + p[1] + p[2] != 100) {
    throw DataError("split must look like 80/10/10 and sum to 100, got '" + s + "'");
  }
  return p;
}

Split split_ids(std::vector<std::string> ids, std::array<int, 3> pct, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(derive_seed(seed, 0x5911));
  rng.shuffle(ids);
  const std::size_t n = ids.size();
  const auto n_train = static_cast<std::size_t>(std::llround(double(n) * pct[0] / 100.0));
  const auto n_val = static_cast<std::size_t>(std::llround(double(n) * pct[1] / 100.0));
  if (n_train == 0 || n_val == 0 || n_train + n_val > n || (pct[2] > 0 && n_train + n_val == n)) {
    throw DataError("dataset of " + std::to_string(n) + " designs is too small for the requested split");
  }
  Split s;
  s.train.assign(ids.begin(), ids.begin() + n_train);
  s.val.assign(ids.begin() + n_train, ids.begin() + n_train + n_val);
  s.test.assign(ids.begin() + n_train + n_val, ids.end());
  return s;
}

namespace {

std::vector<graph::MeshGraph> load_graphs(const fs::path& dir, const std::vector<std::string>& ids, bool need_labels) {
  std::vector<graph::MeshGraph> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    out.push_back(io::read_graph(design_file(dir, id, "graph")));
    if (need_labels && !out.back().labeled()) {
      throw DataError("design " + id + " is not labeled; run `meshtime label` first");
    }
  }
  return out;
}

Json hashes(const fs::path& dir, const std::vector<std::string>& ids) {
  Json h = Json::object();
  for (const auto& id : ids) {
    const fs::path p = design_file(dir, id, "graph");
    h[p.filename().string()] = io::hex64(io::hash_file(p));
  }
  return h;
}

}  // namespace

TrainOutcome train(const TrainOptions& o) {
  if (o.out.empty()) throw DataError("--out is required");
  o.model.validate();
  TrainOutcome res;
  res.split = split_ids(list_designs(o.data), o.split, o.seed);

  auto as_used = [&](const std::vector<std::string>& ids) {
    std::vector<graph::MeshGraph> gs = load_graphs(o.data, ids, true);
    if (!o.model.aux_connections) {
      for (auto& g : gs) g = graph::strip_aux(g);
    }
    return gs;
  };
  const std::vector<graph::MeshGraph> train_g = as_used(res.split.train);
  const std::vector<graph::MeshGraph> val_g = as_used(res.split.val);

  gnn::Model model;
  model.config = o.model;
  model.stats = graph::compute_norm_stats(train_g);
  model.params = gnn::init_params(o.model, o.seed);

  std::vector<gnn::PreparedGraph> train_p, val_p;
  for (const auto& g : train_g) train_p.push_back(gnn::prepare_graph(g, model));
  for (const auto& g : val_g) val_p.push_back(gnn::prepare_graph(g, model));

  gnn::TrainConfig tc = o.train;
  tc.seed = o.seed;
  if (o.verbose) {
    auto prev = tc.on_epoch;
    tc.on_epoch = [prev](const gnn::EpochStats& s) {
      if (prev) prev(s);
      std::fprintf(stderr, "epoch %4d  train_mse %.4f  val_mse %.4f\n", s.epoch, s.train_mse, s.val_mse);
    };
  }
  gnn::TrainResult tr = gnn::train(model, train_p, val_p, tc);
  tr.meta.test_ids = res.split.test;

  res.ckpt.model = model;
  res.ckpt.meta = tr.meta;
  res.ckpt.adam = tc.adam;
  res.ckpt.adam_steps = tr.adam_steps;
  res.ckpt.adam_m = std::move(tr.adam_m);
  res.ckpt.adam_v = std::move(tr.adam_v);
  res.curve = tr.curve;

  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  gnn::save_checkpoint(o.out, res.ckpt);
  const fs::path curve = o.curve.empty() ? fs::path(o.out.string() + ".curve.csv") : o.curve;
  std::ostringstream cs;
  gnn::write_curve_csv(cs, res.curve);
  io::write_text(curve, cs.str());

  const fs::path dir = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
  update_manifest(dir, "train", o.out.filename().string(),
                  {{"data", o.data.string()},
                   {"split", {o.split[0], o.split[1], o.split[2]}},
                   {"seed", o.seed},
                   {"model",
                    {{"num_layers", o.model.num_layers},
                     {"hidden_channels", o.model.hidden_channels},
                     {"heads", o.model.heads},
                     {"jk_mode", gnn::to_string(o.model.jk_mode)},
                     {"aux_connections", o.model.aux_connections},
                     {"negative_slope", o.model.negative_slope}}},
                   {"optimizer",
                    {{"lr", tc.adam.lr}, {"weight_decay", tc.adam.weight_decay}, {"beta1", tc.adam.beta1},
                     {"beta2", tc.adam.beta2}, {"eps", tc.adam.eps}}},
                   {"max_epochs", tc.max_epochs},
                   {"patience", tc.patience},
                   {"epochs_run", tr.meta.epochs_run},
                   {"best_epoch", tr.meta.best_epoch},
                   {"curve", curve.filename().string()},
                   {"checkpoint_hash", io::hex64(io::hash_file(o.out))},
                   {"inputs", hashes(o.data, res.split.train)}});
  return res;
}

Baseline parse_baseline(const std::string& s) {
  if (s == "firstorder") return Baseline::FirstOrder;
  if (s == "none") return Baseline::None;
  throw DataError("unknown baseline '" + s + "' (firstorder|none)");
}

EvalOutcome evaluate(const EvalOptions& o) {
  const gnn::Checkpoint ck = gnn::load_checkpoint(o.ckpt);
  std::vector<std::string> ids = o.all || ck.meta.test_ids.empty() ? list_designs(o.data) : ck.meta.test_ids;
  if (ids.empty()) throw DataError("nothing to evaluate in " + o.data.string());
  std::sort(ids.begin(), ids.end());

  const gnn::InferenceEngine<double> eng(ck.model);
  EvalOutcome out;
  out.rows.resize(ids.size());
  std::vector<std::string> errors(ids.size());
  std::vector<char> numerical(ids.size(), 0);
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(dynamic) num_threads(thread_count(o.jobs))
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const graph::MeshGraph g = io::read_graph(design_file(o.data, ids[i], "graph"));
      if (!g.labeled()) throw DataError("design " + ids[i] + " is not labeled");
      const gnn::PreparedGraph p = gnn::prepare_graph(g, ck.model);
      const ad::Matrix y = eng.run(p);
      std::vector<gnn::SinkPrediction> pred;
      for (int node : p.sink_nodes) pred.push_back({node, y(node, 0), y(node, 1)});
      out.rows[i].gnn = gnn::score(g, pred);
      if (o.baseline == Baseline::FirstOrder) {
        const synth::MeshNetlist net = io::read_netlist(design_file(o.data, ids[i], "netlist"));
        const auto fo = baseline::first_order_delays(net, oracle::make_stimuli(net));
        const std::vector<int> sinks = g.sink_nodes();
        std::vector<double> label_of(g.num_nodes(), 0.0);
        for (const auto& l : g.labels) label_of[l.node] = l.delay_ps;
        double s = 0.0;
        for (std::size_t k = 0; k < sinks.size(); ++k) s += std::abs(fo.delay[k] - label_of[sinks[k]]);
        out.rows[i].baseline_mae_delay = s / static_cast<double>(sinks.size());
      }
    } catch (const std::exception& e) {
      errors[i] = ids[i] + ": " + e.what();
      numerical[i] = dynamic_cast<const NumericalError*>(&e) != nullptr;
    }
  }
  raise_first(errors, numerical);

  std::vector<gnn::DesignMetrics> dm;
  for (const auto& r : out.rows) dm.push_back(r.gnn);
  out.report = gnn::summarize(std::move(dm));
  if (o.baseline == Baseline::FirstOrder) {
    double pooled = 0.0, mean = 0.0, sinks = 0.0;
    for (const auto& r : out.rows) {
      pooled += r.baseline_mae_delay * static_cast<double>(r.gnn.sinks);
      mean += r.baseline_mae_delay;
      sinks += static_cast<double>(r.gnn.sinks);
    }
    out.baseline_mae_delay = pooled / sinks;
    out.baseline_mean_design_mae_delay = mean / static_cast<double>(out.rows.size());
  }
  if (!o.out.empty()) {
    std::ostringstream os;
    write_eval_csv(os, out);
    io::write_text(o.out, os.str());
  }
  return out;
}

void write_eval_csv(std::ostream& os, const EvalOutcome& r) {
  os << "design,sinks,buffers,nodes,mean_delay_ps,gnn_delay_mae_ps,gnn_slew_mae_ps,baseline_delay_mae_ps\n";
  for (const auto& row : r.rows) {
    const auto& m = row.gnn;
    os << m.design_id << ',' << m.sinks << ',' << m.buffers << ',' << m.nodes << ',' << fmt(m.mean_delay) << ','
       << fmt(m.mae_delay) << ',' << fmt(m.mae_slew) << ',' << fmt(row.baseline_mae_delay) << '\n';
  }
  std::size_t sinks = 0, buffers = 0, nodes = 0;
  for (const auto& row : r.rows) {
    sinks += row.gnn.sinks;
    buffers += row.gnn.buffers;
    nodes += row.gnn.nodes;
  }
  const double nd = static_cast<double>(std::max<std::size_t>(1, r.rows.size()));
  double mean_delay = 0.0;
  for (const auto& row : r.rows) mean_delay += row.gnn.mean_delay;
  os << "average," << fmt(double(sinks) / nd) << ',' << fmt(double(buffers) / nd) << ',' << fmt(double(nodes) / nd)
     << ',' << fmt(mean_delay / nd) << ',' << fmt(r.report.mean_design_mae_delay) << ','
     << fmt(r.report.mean_design_mae_slew) << ',' << fmt(r.baseline_mean_design_mae_delay) << '\n';
  os << "all_sinks," << sinks << ',' << buffers << ',' << nodes << ',' << fmt(r.report.mean_delay) << ','
     << fmt(r.report.mae_delay) << ',' << fmt(r.report.mae_slew) << ',' << fmt(r.baseline_mae_delay) << '\n';
}

std::vector<AblationRow> ablate(const AblateOptions& o) {
  if (o.out.empty()) throw DataError("--out is required");
  fs::create_directories(o.out);
  struct Variant {
    const char* name;
    bool aux, jk;
  };
  const Variant variants[] = {{"base", false, false}, {"aux", true, false}, {"jk", false, true}, {"full", true, true}};
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainOptions to;
    to.data = o.data;
    to.split = o.split;
    to.seed = o.seed;
    to.out = o.out / (std::string(v.name) + ".ckpt");
    to.model.aux_connections = v.aux;
    to.model.jk_mode = v.jk ? gnn::JkMode::Max : gnn::JkMode::None;
    to.train = o.train;
    to.verbose = o.verbose;
    if (o.verbose) std::fprintf(stderr, "variant %s (aux %s, jk %s)\n", v.name, v.aux ? "on" : "off", v.jk ? "max" : "none");
    const TrainOutcome t = train(to);
    EvalOptions eo;
    eo.ckpt = to.out;
    eo.data = o.data;
    eo.baseline = Baseline::None;
    eo.jobs = o.jobs;
    const EvalOutcome e = evaluate(eo);
    rows.push_back({v.name, v.aux, v.jk, e.report.mae_delay, e.report.mae_slew, t.ckpt.meta.best_epoch});
  }
  std::ostringstream os;
  write_ablation_csv(os, rows);
  io::write_text(o.out / "ablation.csv", os.str());
  Json summary = Json::object();
  for (const auto& r : rows) summary[r.variant] = {{"delay_mae_ps", r.mae_delay}, {"slew_mae_ps", r.mae_slew}};
  update_manifest(o.out, "ablate", "variants", {{"data", o.data.string()}, {"seed", o.seed}, {"results", summary}});
  return rows;
}

void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,aux,jk,delay_mae_ps,slew_mae_ps,best_epoch\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << (r.aux ? "on" : "off") << ',' << (r.jk ? "max" : "none") << ',' << fmt(r.mae_delay)
       << ',' << fmt(r.mae_slew) << ',' << r.best_epoch << '\n';
  }
}

namespace {

template <typename F>
double min_ms(int repeats, F&& f) {
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, repeats); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

}  // namespace

std::vector<BenchRow> bench(const BenchOptions& o) {
  const gnn::Checkpoint ck = gnn::load_checkpoint(o.ckpt);
  const std::vector<std::string> ids = list_designs(o.data);
  if (ids.empty()) throw DataError("no designs in " + o.data.string());
  const gnn::InferenceEngine<float> eng32(ck.model);
  const gnn::InferenceEngine<double> eng64(ck.model);
  std::vector<BenchRow> rows;
  for (const auto& id : ids) {
    const synth::MeshNetlist net = io::read_netlist(design_file(o.data, id, "netlist"));
    const graph::MeshGraph g = io::read_graph(design_file(o.data, id, "graph"));
    const synth::Design d = io::read_design(design_file(o.data, id, "design"));
    const gnn::PreparedGraph p = gnn::prepare_graph(g, ck.model);
    BenchRow r;
    r.design_id = id;
    r.size_class = synth::to_string(d.size_class);
    r.graph_nodes = p.num_nodes;
    r.electrical_nodes = net.nodes.size();
    r.sinks = net.sink_nodes.size();
    r.oracle_ms = min_ms(o.repeats, [&] { oracle::simulate(net, oracle::make_stimuli(net)); });
    r.first_order_ms = min_ms(o.repeats, [&] { baseline::first_order_delays(net, oracle::make_stimuli(net)); });
    r.gnn_ms = o.fp32 ? min_ms(o.repeats, [&] { eng32.run(p); }) : min_ms(o.repeats, [&] { eng64.run(p); });
    rows.push_back(r);
  }
  if (!o.out.empty()) {
    std::ostringstream os;
    write_bench_csv(os, rows);
    io::write_text(o.out, os.str());
    const fs::path dir = o.out.has_parent_path() ? o.out.parent_path() : fs::path(".");
    update_manifest(dir, "bench", o.out.filename().string(),
                    {{"data", o.data.string()},
                     {"checkpoint", o.ckpt.string()},
                     {"repeats", o.repeats},
                     {"precision", o.fp32 ? "fp32" : "fp64"},
                     {"threads", omp_get_max_threads()},
                     {"timing", "min over repeats; gnn excludes I/O and graph preparation, oracle includes factorization"}});
  }
  return rows;
}

void write_bench_csv(std::ostream& os, const std::vector<BenchRow>& rows) {
  os << "design,class,graph_nodes,electrical_nodes,sinks,oracle_ms,first_order_ms,gnn_ms,speedup_vs_oracle\n";
  for (const auto& r : rows) {
    os << r.design_id << ',' << r.size_class << ',' << r.graph_nodes << ',' << r.electrical_nodes << ',' << r.sinks
       << ',' << fmt(r.oracle_ms) << ',' << fmt(r.first_order_ms) << ',' << fmt(r.gnn_ms) << ',' << fmt(r.speedup())
       << '\n';
  }
  for (const char* cls : {"small", "medium", "large"}) {
    double o = 0, f = 0, g = 0, nodes = 0;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (r.size_class != cls) continue;
      o += r.oracle_ms;
      f += r.first_order_ms;
      g += r.gnn_ms;
      nodes += double(r.graph_nodes);
      ++count;
    }
    if (count == 0) continue;
    const double c = double(count);
    os << "mean_" << cls << ',' << cls << ',' << fmt(nodes / c) << ",,," << fmt(o / c) << ',' << fmt(f / c) << ','
       << fmt(g / c) << ',' << fmt(o / g) << '\n';
  }
}

void predict(const PredictOptions& o, std::ostream& fallback) {
  const gnn::Checkpoint ck = gnn::load_checkpoint(o.ckpt);
  std::vector<graph::MeshGraph> graphs;
  if (fs::is_directory(o.input)) {
    for (const auto& id : list_designs(o.input)) graphs.push_back(io::read_graph(design_file(o.input, id, "graph")));
  } else {
    graphs.push_back(io::read_graph(o.input));
  }
  std::ostringstream os;
  os << "design,node,sink_index,delay_ps,slew_ps\n";
  for (const auto& g : graphs) {
    const auto pred = gnn::predict(ck.model, g);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      os << g.design_id << ',' << pred[k].node << ',' << k << ',' << fmt(pred[k].delay_ps) << ','
         << fmt(pred[k].slew_ps) << '\n';
    }
  }
  if (o.out.empty()) {
    fallback << os.str();
  } else {
    io::write_text(o.out, os.str());
  }
}

}  // namespace meshtime::harness
