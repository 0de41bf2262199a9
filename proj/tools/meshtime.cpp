// meshtime: dataset generation, labeling, training, evaluation, ablation,
// benchmarking and prediction for clock-mesh timing.
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 numerical failure.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "meshtime/common.hpp"
#include "meshtime/harness.hpp"

namespace {

using namespace meshtime;

int default_jobs() {
  if (const char* env = std::getenv("MESHTIME_JOBS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return omp_get_max_threads();
}

void print_eval(const harness::EvalOutcome& e) {
  std::printf("designs %zu  sinks-pooled MAE delay %.4f ps  slew %.4f ps  (mean sink delay %.3f ps)\n",
              e.rows.size(), e.report.mae_delay, e.report.mae_slew, e.report.mean_delay);
  if (!std::isnan(e.baseline_mae_delay)) {
    std::printf("first-order baseline MAE delay %.4f ps\n", e.baseline_mae_delay);
  }
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Clock-mesh timing with graph attention networks"};
  app.require_subcommand(1);
  int jobs = default_jobs();
  app.add_option("--jobs", jobs, "Worker threads (default: $MESHTIME_JOBS or all cores)")->check(CLI::PositiveNumber);

  harness::GenOptions gen;
  std::string cls, style;
  auto* c_gen = app.add_subcommand("gen", "Generate synthetic designs, netlists and unlabeled graphs");
  c_gen->add_option("--count", gen.count, "Number of designs")->required()->check(CLI::PositiveNumber);
  c_gen->add_option("--class", cls, "Size class: small|medium|large")
      ->required()
      ->check(CLI::IsMember({"small", "medium", "large"}));
  c_gen->add_option("--style", style, "Mesh style: uniform|nonuniform|fixed")
      ->required()
      ->check(CLI::IsMember({"uniform", "nonuniform", "fixed"}));
  c_gen->add_option("--seed", gen.seed, "First design seed (designs use seed..seed+count-1)")->required();
  c_gen->add_option("--out", gen.out, "Dataset directory")->required();
  c_gen->add_option("--skew-sigma", gen.synth.skew_sigma, "Top-tree skew bound in ps")->capture_default_str();

  harness::LabelOptions lab;
  auto* c_label = app.add_subcommand("label", "Label every design with the RC transient oracle");
  c_label->add_option("--in", lab.dir, "Dataset directory")->required();

  harness::TrainOptions tr;
  std::string split = "80/10/10", jk = "max", aux = "on";
  auto* c_train = app.add_subcommand("train", "Train a model on a labeled dataset");
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--split", split, "train/val/test percentages")->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Seed for split, init and shuffling")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--curve", tr.curve, "Training curve CSV (default: <out>.curve.csv)");
  c_train->add_option("--epochs", tr.train.max_epochs, "Maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--patience", tr.train.patience, "Early-stopping patience")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--lr", tr.train.adam.lr, "Learning rate")->capture_default_str();
  c_train->add_option("--weight-decay", tr.train.adam.weight_decay, "L2 weight decay")->capture_default_str();
  c_train->add_option("--layers", tr.model.num_layers, "GAT layers")->capture_default_str()->check(CLI::PositiveNumber);
  c_train->add_option("--hidden", tr.model.hidden_channels, "Hidden channels (all heads)")->capture_default_str();
  c_train->add_option("--heads", tr.model.heads, "Attention heads")->capture_default_str();
  c_train->add_option("--jk", jk, "Jumping knowledge: max|none")->capture_default_str()->check(CLI::IsMember({"max", "none"}));
  c_train->add_option("--aux", aux, "Auxiliary connections: on|off")->capture_default_str()->check(CLI::IsMember({"on", "off"}));
  c_train->add_flag("--verbose", tr.verbose, "Print one line per epoch");

  harness::EvalOptions ev;
  std::string baseline = "firstorder";
  auto* c_eval = app.add_subcommand("eval", "Per-design MAE of a checkpoint (and the first-order baseline)");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  c_eval->add_option("--data", ev.data, "Labeled dataset directory")->required();
  c_eval->add_option("--baseline", baseline, "firstorder|none")->capture_default_str()->check(CLI::IsMember({"firstorder", "none"}));
  c_eval->add_flag("--all", ev.all, "Evaluate every design instead of the checkpoint's test split");
  c_eval->add_option("--out", ev.out, "CSV output");

  harness::AblateOptions ab;
  std::string ab_split = "80/10/10";
  auto* c_ablate = app.add_subcommand("ablate", "Train the four {aux, jk} variants and compare held-out MAE");
  c_ablate->add_option("--data", ab.data, "Labeled dataset directory")->required();
  c_ablate->add_option("--seed", ab.seed, "Seed shared by every variant")->required();
  c_ablate->add_option("--out", ab.out, "Output directory")->required();
  c_ablate->add_option("--split", ab_split, "train/val/test percentages")->capture_default_str();
  c_ablate->add_option("--epochs", ab.train.max_epochs, "Maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
  c_ablate->add_option("--patience", ab.train.patience, "Early-stopping patience")->capture_default_str()->check(CLI::PositiveNumber);
  c_ablate->add_flag("--verbose", ab.verbose, "Print one line per epoch");

  harness::BenchOptions be;
  std::string bench_precision = "fp32";
  auto* c_bench = app.add_subcommand("bench", "Wall-clock of GNN inference, first-order model and oracle per design");
  c_bench->add_option("--data", be.data, "Dataset directory")->required();
  c_bench->add_option("--ckpt", be.ckpt, "Checkpoint")->required();
  c_bench->add_option("--out", be.out, "CSV output");
  c_bench->add_option("--repeats", be.repeats, "Timing repeats (minimum is reported)")->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_bench->add_option("--precision", bench_precision, "Inference precision")
      ->capture_default_str()
      ->check(CLI::IsMember({"fp32", "fp64"}));

  harness::PredictOptions pr;
  auto* c_predict = app.add_subcommand("predict", "Per-sink delay/slew predictions for unlabeled graphs");
  c_predict->add_option("--ckpt", pr.ckpt, "Checkpoint")->required();
  c_predict->add_option("--in", pr.input, "Graph JSON file or dataset directory")->required();
  c_predict->add_option("--out", pr.out, "CSV output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  omp_set_num_threads(jobs);
  try {
    if (*c_gen) {
      gen.jobs = jobs;
      gen.size_class = synth::parse_size_class(cls);
      gen.style = synth::parse_mesh_style(style);
      const auto ids = harness::gen(gen);
      std::printf("generated %zu designs in %s\n", ids.size(), gen.out.string().c_str());
    } else if (*c_label) {
      lab.jobs = jobs;
      std::printf("labeled %zu designs\n", harness::label(lab));
    } else if (*c_train) {
      tr.split = harness::parse_split(split);
      tr.model.jk_mode = gnn::parse_jk_mode(jk);
      tr.model.aux_connections = aux == "on";
      const auto t = harness::train(tr);
      std::printf("trained %d epochs, best epoch %d, val_mse %.4f, train_mse %.4f -> %s\n", t.ckpt.meta.epochs_run,
                  t.ckpt.meta.best_epoch, t.ckpt.meta.best_val_mse, t.ckpt.meta.train_mse, tr.out.string().c_str());
    } else if (*c_eval) {
      ev.baseline = harness::parse_baseline(baseline);
      ev.jobs = jobs;
      const auto e = harness::evaluate(ev);
      if (ev.out.empty()) {
        harness::write_eval_csv(std::cout, e);
      } else {
        print_eval(e);
      }
    } else if (*c_ablate) {
      ab.split = harness::parse_split(ab_split);
      ab.jobs = jobs;
      const auto rows = harness::ablate(ab);
      harness::write_ablation_csv(std::cout, rows);
    } else if (*c_bench) {
      be.fp32 = bench_precision == "fp32";
      const auto rows = harness::bench(be);
      harness::write_bench_csv(std::cout, rows);
    } else if (*c_predict) {
      harness::predict(pr, std::cout);
    }
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  }
  return 0;
}
