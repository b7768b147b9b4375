// rqlvc: generate synthetic sequences, run rate-control experiments and
// build reports from their traces.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "rqlvc/errors.hpp"
#include "rqlvc/experiment.hpp"
#include "rqlvc/io.hpp"
#include "rqlvc/metrics.hpp"
#include "rqlvc/predictor.hpp"

namespace fs = std::filesystem;
using namespace rqlvc;

namespace {

std::vector<RdPoint> read_curve(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open " + path.string());
  return read_rd_curve_csv(in);
}

void print_summary(const Summary& summary) {
  fmt::print("{:<16} {:>12} {:>12}\n", "method", "mean dR %", "BD-rate %");
  for (const auto& m : summary.methods) {
    fmt::print("{:<16} {:>12.4f} {:>12.4f}\n", m.method, m.mean_deviation_pct, m.bd_rate_pct);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate control for variable-rate learned video coding on a simulated codec"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  int count = 5;
  int frames = kBenchmarkFrames;
  double drift = 1.0;
  std::string out;
  auto* generate = app.add_subcommand("generate", "Write drifting synthetic sequence profiles");
  generate->add_option("--seed", seed, "Generator seed")->capture_default_str();
  generate->add_option("--count", count, "Number of sequences")->capture_default_str();
  generate->add_option("--drift", drift, "AR(1) innovation of beta; alpha moves 2% as much")
      ->capture_default_str();
  generate->add_option("--frames", frames, "Frames per sequence")->capture_default_str();
  generate->add_option("--out", out, "Output directory")->required();

  std::string config;
  int jobs = 1;
  std::optional<std::uint64_t> run_seed;
  auto* run = app.add_subcommand("run", "Run an experiment config (default: built-in benchmark)");
  run->add_option("--config", config, "Experiment JSON");
  run->add_option("--out", out, "Output directory, overrides output_dir");
  run->add_option("--jobs", jobs, "Worker threads")->capture_default_str();
  run->add_option("--seed", run_seed, "Run this single seed instead of the configured list");

  std::string trace_dir;
  auto* report = app.add_subcommand("report", "Method-by-sequence table and per-frame deviations");
  report->add_option("traces", trace_dir, "Trace directory or run directory")->required();
  report->add_option("--out", out, "Report directory (default: <traces>/report)");

  auto* init = app.add_subcommand("init-config", "Write the built-in benchmark config");
  init->add_option("--out", out, "Output file")->required();

  std::string anchor_file, test_file;
  bool pchip = false;
  auto* bd = app.add_subcommand("bd-rate", "BD-rate of a test RD curve against an anchor");
  bd->add_option("anchor", anchor_file, "CSV of rate,psnr")->required();
  bd->add_option("test", test_file, "CSV of rate,psnr")->required();
  bd->add_flag("--pchip", pchip, "Piecewise cubic Hermite interpolation");

  auto* model_fit = app.add_subcommand("model-fit", "R^2 of linear, exponential and log laws");
  model_fit->add_option("--seed", seed)->capture_default_str();
  model_fit->add_option("--frames", frames, "Frames per sequence")->capture_default_str();

  int train_sequences = 20;
  auto* train = app.add_subcommand("train", "Fit the linear rate regressor on synthetic data");
  train->add_option("--seed", seed)->capture_default_str();
  train->add_option("--sequences", train_sequences, "Training sequences")->capture_default_str();
  train->add_option("--frames", frames, "Frames per sequence")->capture_default_str();
  train->add_option("--out", out, "Model JSON")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      for (const auto& p : cmd_generate(seed, count, drift, out, frames)) {
        fmt::print("{}\n", p.string());
      }
    } else if (*run) {
      ExperimentResult result;
      fs::path out_dir;
      if (config.empty()) {
        ExperimentConfig cfg = default_benchmark_config();
        if (!out.empty()) cfg.output_dir = out;
        if (run_seed) cfg.seeds = {*run_seed};
        result = run_experiment(cfg, jobs);
        out_dir = cfg.output_dir;
        write_experiment_outputs(result, out_dir);
      } else {
        std::optional<fs::path> out_override;
        if (!out.empty()) out_override = out;
        result = cmd_run(config, out_override, jobs, run_seed);
        out_dir = out.empty() ? load_experiment_config(config).output_dir : fs::path(out);
      }
      fmt::print("{} traces written to {}\n", result.traces.size(), (out_dir / "traces").string());
      print_summary(result.summary);
    } else if (*report) {
      const fs::path dest = out.empty() ? fs::path(trace_dir) / "report" : fs::path(out);
      const Report r = cmd_report(trace_dir, dest);
      std::cout << r.table_text;
      fmt::print("report written to {}\n", dest.string());
    } else if (*init) {
      write_text_file(out, default_benchmark_config_json().dump(2) + "\n");
    } else if (*bd) {
      const double v = bd_rate(read_curve(anchor_file), read_curve(test_file),
                               pchip ? BdInterpolation::kPchip : BdInterpolation::kCubic);
      fmt::print("{}\n", format_number(v));
    } else if (*model_fit) {
      const ModelFitStudy study = model_family_study(seed, frames);
      fmt::print("{:<10} {:>10} {:>12} {:>12}\n", "sequence", "linear", "exponential",
                 "logarithmic");
      for (const auto& r : study.rows) {
        fmt::print("{:<10} {:>10.4f} {:>12.4f} {:>12.4f}\n", r.sequence, r.r2_linear,
                   r.r2_exponential, r.r2_logarithmic);
      }
      fmt::print("{:<10} {:>10.4f} {:>12.4f} {:>12.4f}\n", "mean", study.mean.r2_linear,
                 study.mean.r2_exponential, study.mean.r2_logarithmic);
    } else if (*train) {
      std::vector<SequenceProfile> train_seqs, test_seqs;
      for (int i = 0; i < train_sequences + 5; ++i) {
        const auto index = static_cast<std::size_t>(i);
        const auto s = generate_sequence(make_rng(seed, index, Stream::kSequence)(), frames,
                                         kBenchmarkDrift, benchmark_base(index),
                                         fmt::format("train_{}", i));
        (i < train_sequences ? train_seqs : test_seqs).push_back(s);
      }
      const QualityGrid grid;
      const auto records = collect_training_records(train_seqs, grid, seed);
      const auto held_out = collect_training_records(test_seqs, grid, seed + 1);
      const RegressorPredictor model = train_regressor(records, grid);
      write_text_file(out, to_json(model).dump(2) + "\n");
      const auto acc = predictor_accuracy_study(model, held_out, grid, seed);
      fmt::print("held-out prediction error by level (%):");
      for (double v : acc.per_level_pct) fmt::print(" {:.2f}", v);
      fmt::print("  average {:.2f}\n", acc.average_pct);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
