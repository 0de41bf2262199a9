// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// writes the same lines plus the measurements to <work>/acceptance_report.txt.
//
// Exit status is 0 once every criterion has been evaluated; with --strict
// any FAIL makes it 1.

#include <omp.h>

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "meshtime/common.hpp"
#include "meshtime/gnn.hpp"
#include "meshtime/harness.hpp"
#include "meshtime/io.hpp"
#include "oracle_checks.hpp"

using namespace meshtime;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Report {
 public:
  explicit Report(fs::path path) : path_(std::move(path)) {}

  void note(const std::string& line) {
    std::fprintf(stderr, "[%7.1fs] %s\n", elapsed(), line.c_str());
    notes_.push_back(line);
  }

  void criterion(int n, const char* title, const Outcome& o) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "criterion %d %s: ", n, o.pass ? "PASS" : "FAIL");
    const std::string line = std::string(buf) + title + " | " + o.detail;
    std::printf("%s\n", line.c_str());
    std::fflush(stdout);
    lines_.push_back(line);
    failures_ += o.pass ? 0 : 1;
    write();
  }

  int failures() const { return failures_; }

 private:
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  void write() const {
    std::ostringstream os;
    for (const auto& l : lines_) os << l << '\n';
    os << "\nmeasurements\n";
    for (const auto& n : notes_) os << "  " << n << '\n';
    io::write_text(path_, os.str());
  }

  fs::path path_;
  std::vector<std::string> lines_, notes_;
  int failures_ = 0;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_of(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct GenBlock {
  synth::SizeClass cls;
  synth::MeshStyle style;
  std::uint64_t seed;
  int count;
};

void generate(const fs::path& dir, const std::vector<GenBlock>& blocks) {
  fs::remove_all(dir);
  for (const auto& b : blocks) {
    harness::GenOptions g;
    g.count = b.count;
    g.size_class = b.cls;
    g.style = b.style;
    g.seed = b.seed;
    g.out = dir;
    harness::gen(g);
  }
}

// 45 Small and 45 Medium designs, 15 per style, each style on its own seed range.
std::vector<GenBlock> learning_blocks() {
  using synth::MeshStyle;
  using synth::SizeClass;
  std::vector<GenBlock> b;
  std::uint64_t seed = 1000;
  for (auto cls : {SizeClass::Small, SizeClass::Medium}) {
    for (auto style : {MeshStyle::Uniform, MeshStyle::NonUniform, MeshStyle::Fixed50um}) {
      b.push_back({cls, style, seed, 15});
      seed += 1000;
    }
  }
  return b;
}

std::vector<std::string> dir_files(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

// Number of files that differ (or exist on one side only).
int diff_dirs(const fs::path& a, const fs::path& b) {
  const auto fa = dir_files(a), fb = dir_files(b);
  int diff = 0;
  for (const auto& f : fa) {
    if (!std::binary_search(fb.begin(), fb.end(), f) || io::read_text(a / f) != io::read_text(b / f)) ++diff;
  }
  for (const auto& f : fb) diff += std::binary_search(fa.begin(), fa.end(), f) ? 0 : 1;
  return diff;
}

bool same_predictions(const std::vector<gnn::SinkPrediction>& x, const std::vector<gnn::SinkPrediction>& y) {
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].node != y[i].node || std::bit_cast<std::uint64_t>(x[i].delay_ps) != std::bit_cast<std::uint64_t>(y[i].delay_ps) ||
        std::bit_cast<std::uint64_t>(x[i].slew_ps) != std::bit_cast<std::uint64_t>(y[i].slew_ps)) {
      return false;
    }
  }
  return true;
}

Outcome criterion_oracle(Report& rep) {
  const auto rc = testsupport::single_rc_errors({10.0, 100.0, 500.0, 1000.0}, {1.0, 20.0, 100.0, 1000.0});
  const double expm = testsupport::expm_max_error(97, 10);
  rep.note("single RC worst relative error: delay " + num(rc.delay) + ", slew " + num(rc.slew));
  rep.note("dense expm worst |v - v_exact| over 10 networks: " + num(expm));
  return {rc.delay < 0.01 && rc.slew < 0.01 && expm <= 0.005,
          "ln2 RC delay err " + num(rc.delay) + " < 0.01, ln9 RC slew err " + num(rc.slew) +
              " < 0.01, expm max abs err " + num(expm) + " <= 0.005 of vdd"};
}

Outcome criterion_features(Report& rep) {
  const double worst = testsupport::feature_bruteforce_error(4242, 50);
  rep.note("feature brute-force worst relative error over 50 netlists: " + num(worst));
  return {worst <= 1e-9, "min_res/total_res/region_cap max rel err " + num(worst) + " <= 1e-9 on 50 netlists"};
}

Outcome criterion_gradients(Report& rep) {
  const auto ops = testsupport::op_gradient_errors(515, 3);
  double worst_op = 0.0;
  std::string worst_name;
  for (const auto& e : ops) {
    if (e.max_rel >= worst_op) {
      worst_op = e.max_rel;
      worst_name = e.name;
    }
  }
  const auto model = testsupport::model_gradient_check(616);
  rep.note("op gradient checks: " + std::to_string(ops.size()) + " ops, worst " + num(worst_op) + " (" + worst_name +
           ")");
  rep.note("8-layer model gradient check: " + std::to_string(model.probed) + " entries, worst " + num(model.max_rel) +
           ", largest gradient " + num(model.largest_gradient));
  return {worst_op < 1e-5 && model.max_rel < 1e-5,
          std::to_string(ops.size()) + " ops worst " + num(worst_op) + ", 8-layer model worst " + num(model.max_rel) +
              " (< 1e-5)"};
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Acceptance run"};
  fs::path work = "acceptance_work";
  int epochs = 1000;
  bool strict = false;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--epochs", epochs, "Maximum training epochs")->capture_default_str();
  app.add_flag("--strict", strict, "Exit 1 if any criterion fails");
  CLI11_PARSE(app, argc, argv);

  fs::create_directories(work);
  Report rep(work / "acceptance_report.txt");
  rep.note("threads " + std::to_string(omp_get_max_threads()) + ", work directory " + work.string());

  rep.criterion(1, "oracle correctness", criterion_oracle(rep));
  rep.criterion(2, "feature correctness", criterion_features(rep));
  rep.criterion(3, "gradient integrity", criterion_gradients(rep));

  // Learning criteria share one dataset and one ablation run.
  const fs::path data = work / "data";
  const auto blocks = learning_blocks();
  const double gen_s = seconds_of([&] { generate(data, blocks); });
  const double label_s = seconds_of([&] { harness::label({data, 0}); });
  const auto ids = harness::list_designs(data);
  double delay_sum = 0.0;
  std::size_t sink_count = 0;
  for (const auto& id : ids) {
    for (const auto& l : io::read_graph(harness::design_file(data, id, "graph")).labels) {
      delay_sum += l.delay_ps;
      ++sink_count;
    }
  }
  const double mean_delay = delay_sum / static_cast<double>(sink_count);
  rep.note("dataset: " + std::to_string(ids.size()) + " designs, " + std::to_string(sink_count) +
           " sinks, mean sink delay " + num(mean_delay) + " ps; gen " + num(gen_s, 3) + " s, label " + num(label_s, 3) +
           " s");

  harness::AblateOptions ao;
  ao.data = data;
  ao.seed = 0;
  ao.out = work / "ablate";
  ao.train.max_epochs = epochs;
  std::vector<harness::AblationRow> rows;
  const double ablate_s = seconds_of([&] { rows = harness::ablate(ao); });
  std::map<std::string, harness::AblationRow> by;
  for (const auto& r : rows) {
    by[r.variant] = r;
    rep.note("variant " + r.variant + ": held-out delay MAE " + num(r.mae_delay) + " ps, slew MAE " +
             num(r.mae_slew) + " ps, best epoch " + std::to_string(r.best_epoch));
  }
  rep.note("ablation (4 trainings + evals) took " + num(ablate_s / 60.0, 3) + " min");

  const fs::path full_ckpt = ao.out / "full.ckpt";
  const gnn::Checkpoint full = gnn::load_checkpoint(full_ckpt);
  harness::EvalOptions eo;
  eo.ckpt = full_ckpt;
  eo.data = data;
  eo.out = work / "eval_full.csv";
  const harness::EvalOutcome ev = harness::evaluate(eo);
  const double frac = ev.report.mae_delay / mean_delay;
  const double val_train = full.meta.best_val_mse / full.meta.train_mse;
  rep.note("full model: epochs " + std::to_string(full.meta.epochs_run) + ", best " +
           std::to_string(full.meta.best_epoch) + ", val mse " + num(full.meta.best_val_mse) + ", train mse " +
           num(full.meta.train_mse) + " ps^2");
  rep.note("held-out (" + std::to_string(ev.rows.size()) + " designs): GNN delay MAE " + num(ev.report.mae_delay) +
           " ps, slew MAE " + num(ev.report.mae_slew) + " ps, first-order delay MAE " + num(ev.baseline_mae_delay) +
           " ps");
  rep.criterion(4, "desk-scale learning",
                {frac <= 0.15 && val_train <= 2.0 && ids.size() >= 90,
                 std::to_string(ids.size()) + " designs; held-out delay MAE " + num(ev.report.mae_delay) + " ps = " +
                     num(100 * frac, 3) + "% of mean sink delay " + num(mean_delay) + " ps (<= 15%); val/train loss " +
                     num(val_train, 3) + " (<= 2)"});

  const double gap = ev.baseline_mae_delay / ev.report.mae_delay;
  rep.criterion(5, "baseline ordering",
                {gap >= 2.0, "first-order delay MAE " + num(ev.baseline_mae_delay) + " ps vs GNN " +
                                 num(ev.report.mae_delay) + " ps, ratio " + num(gap, 3) + " (>= 2)"});

  const auto &base = by["base"], &aux = by["aux"], &full_row = by["full"];
  rep.criterion(6, "ablation ordering",
                {base.mae_delay > full_row.mae_delay && aux.mae_delay < base.mae_delay,
                 "delay MAE base " + num(base.mae_delay) + " > full " + num(full_row.mae_delay) + "; aux " +
                     num(aux.mae_delay) + " < base; jk " + num(by["jk"].mae_delay)});

  // Runtime scaling on a separate set spanning the three classes.
  const fs::path bench_data = work / "bench_data";
  using synth::MeshStyle;
  using synth::SizeClass;
  generate(bench_data, {{SizeClass::Small, MeshStyle::Uniform, 9100, 3},
                        {SizeClass::Medium, MeshStyle::NonUniform, 9200, 3},
                        {SizeClass::Large, MeshStyle::Uniform, 9300, 2}});
  harness::BenchOptions bo;
  bo.data = bench_data;
  bo.ckpt = full_ckpt;
  bo.out = work / "bench.csv";
  bo.repeats = 3;
  const auto bench = harness::bench(bo);
  std::map<std::string, std::array<double, 4>> cls;  // oracle, gnn, nodes, count
  for (const auto& r : bench) {
    auto& c = cls[r.size_class];
    c[0] += r.oracle_ms;
    c[1] += r.gnn_ms;
    c[2] += static_cast<double>(r.graph_nodes);
    c[3] += 1.0;
  }
  std::string scaling;
  std::vector<double> ratios;
  for (const char* name : {"small", "medium", "large"}) {
    const auto& c = cls[name];
    const double ratio = c[1] / c[0];
    ratios.push_back(ratio);
    rep.note(std::string(name) + ": mean graph nodes " + num(c[2] / c[3], 6) + ", oracle " + num(c[0] / c[3]) +
             " ms, GNN " + num(c[1] / c[3]) + " ms, speedup " + num(1.0 / ratio));
    scaling += std::string(scaling.empty() ? "" : ", ") + name + " " + num(1.0 / ratio, 3) + "x";
  }
  const bool sublinear = ratios[1] < ratios[0] && ratios[2] < ratios[1];
  const double large_speedup = 1.0 / ratios[2];
  rep.criterion(7, "runtime scaling",
                {sublinear && large_speedup >= 50.0,
                 "speedup vs oracle " + scaling + "; GNN/oracle time falls with size: " +
                     (sublinear ? "yes" : "no") + "; Large speedup " + num(large_speedup, 3) + "x (>= 50x)"});

  // Determinism and round trips.
  const fs::path regen = work / "regen";
  generate(regen, blocks);
  harness::label({regen, 1});
  const int dataset_diff = diff_dirs(data, regen);

  auto short_train = [&](const fs::path& out) {
    harness::TrainOptions t;
    t.data = data;
    t.seed = 3;
    t.out = out;
    t.train.max_epochs = 3;
    return harness::train(t);
  };
  const auto t1 = short_train(work / "det_a" / "m.ckpt");
  short_train(work / "det_b" / "m.ckpt");
  const bool ckpt_same = io::read_text(work / "det_a" / "m.ckpt") == io::read_text(work / "det_b" / "m.ckpt");
  const bool curve_same =
      io::read_text(work / "det_a" / "m.ckpt.curve.csv") == io::read_text(work / "det_b" / "m.ckpt.curve.csv");

  const gnn::Checkpoint reload = gnn::load_checkpoint(work / "det_a" / "m.ckpt");
  gnn::save_checkpoint(work / "det_a" / "again.ckpt", reload);
  const gnn::Checkpoint reload2 = gnn::load_checkpoint(work / "det_a" / "again.ckpt");
  int pred_mismatch = 0, graph_mismatch = 0;
  for (const auto& id : ids) {
    const fs::path gp = harness::design_file(data, id, "graph");
    const graph::MeshGraph g = io::read_graph(gp);
    const auto in_memory = gnn::predict(t1.ckpt.model, g);
    if (!same_predictions(in_memory, gnn::predict(reload.model, g)) ||
        !same_predictions(in_memory, gnn::predict(reload2.model, g))) {
      ++pred_mismatch;
    }
    const std::string text = io::to_json(g).dump(1) + "\n";
    if (text != io::read_text(gp) || io::to_json(io::graph_from_json(io::Json::parse(text))).dump(1) + "\n" != text) {
      ++graph_mismatch;
    }
  }
  const bool ckpt_bytes = io::read_text(work / "det_a" / "m.ckpt") == io::read_text(work / "det_a" / "again.ckpt");
  rep.note("regenerated dataset differs in " + std::to_string(dataset_diff) + " files");
  rep.criterion(8, "determinism and round trips",
                {dataset_diff == 0 && ckpt_same && curve_same && ckpt_bytes && pred_mismatch == 0 && graph_mismatch == 0,
                 "regenerated dataset identical: " + std::string(dataset_diff == 0 ? "yes" : "no") +
                     "; checkpoints/curves identical: " + (ckpt_same && curve_same ? "yes" : "no") +
                     "; save/load bytes and predictions identical: " +
                     (ckpt_bytes && pred_mismatch == 0 ? "yes" : "no") + "; " + std::to_string(ids.size()) +
                     " graph JSONs lossless: " + (graph_mismatch == 0 ? "yes" : "no")});

  std::printf("%d of 8 criteria passed; report in %s\n", 8 - rep.failures(),
              (work / "acceptance_report.txt").string().c_str());
  return strict && rep.failures() > 0 ? 1 : 0;
}
