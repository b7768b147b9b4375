#pragma once

// Experiment runner behind the command line tool: JSON configuration,
// parallel execution of (sequence, method, target, seed) cells, trace and
// summary output, reports over a trace directory, and the model-family and
// predictor-accuracy studies.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rqlvc/codec_sim.hpp"
#include "rqlvc/estimation.hpp"
#include "rqlvc/metrics.hpp"
#include "rqlvc/predictor.hpp"
#include "rqlvc/rate_control.hpp"

namespace rqlvc {

inline constexpr int kExperimentSchemaVersion = 1;

// Anchor quality levels of the benchmark.
inline constexpr std::array<double, 4> kAnchorLevels{10.0, 25.0, 40.0, 55.0};

enum class Protocol { kClosedLoop, kOneStep };

struct TargetSpec {
  enum class Kind { kAnchorQuality, kBits };
  Kind kind = Kind::kAnchorQuality;
  // Anchor quality level, or the per-frame rate R_s in bits.
  double value = 0.0;

  std::string label() const;
};

struct PredictorSpec {
  enum class Kind { kSynthetic, kOracle, kRegressor };
  Kind kind = Kind::kSynthetic;
  // Synthetic only; empty means the calibrated profile.
  std::optional<std::array<double, kGridSize>> sigmas;
  // Regressor only.
  std::optional<RegressorPredictor> regressor;

  std::unique_ptr<Predictor> make() const;
};

struct ExperimentConfig {
  std::vector<SequenceProfile> sequences;
  std::vector<EstimatorVariant> methods;
  std::vector<TargetSpec> targets;
  std::vector<std::uint64_t> seeds;
  Protocol protocol = Protocol::kClosedLoop;
  QualityRange one_step_range;
  RateControlConfig rate_control;  // variant is set per method
  // Seed of the multi-pass probe that fits the starting law when
  // rate_control.initial is not given.
  std::uint64_t calibration_seed = 0;
  PredictorSpec predictor;
  std::filesystem::path output_dir = "out";

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Relative file references inside `j` resolve against `base_dir`. Unknown
// fields are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Base frame of the i-th benchmark sequence (five distinct contents, cycled).
FrameProfile benchmark_base(std::size_t index);
std::string benchmark_name(std::size_t index);

inline constexpr int kBenchmarkFrames = 96;
inline constexpr double kBenchmarkNoise = 0.03;
inline constexpr DriftSpec kBenchmarkDrift{0.02, 1.0};
// Alpha innovation per unit of the scalar drift used by `generate`.
inline constexpr double kAlphaDriftPerBetaDrift = 0.02;

DriftSpec drift_from_scalar(double drift);

// Five drifting 96-frame sequences, five methods, the four anchor levels
// and seeds 0..19 with the calibrated synthetic predictor.
nlohmann::json default_benchmark_config_json();
ExperimentConfig default_benchmark_config();

struct ExperimentResult {
  // Anchors first, then method traces; order fixed by the config.
  std::vector<SequenceTrace> traces;
  Summary summary;
  RQParams initial;
};

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1);

// <out>/traces/<trace file>.csv and <out>/summary.csv.
void write_experiment_outputs(const ExperimentResult& result, const std::filesystem::path& out);

// Loads, runs and writes. `out` and `seed` override the config when set.
ExperimentResult cmd_run(const std::filesystem::path& config_path,
                         const std::optional<std::filesystem::path>& out = std::nullopt,
                         int jobs = 1, std::optional<std::uint64_t> seed = std::nullopt);

// `count` sequence files "<out>/seq_<i>.json" drifting from the benchmark
// bases. Returns the written paths.
std::vector<std::filesystem::path> cmd_generate(std::uint64_t seed, int count, double drift,
                                                const std::filesystem::path& out,
                                                int n_frames = kBenchmarkFrames);

// Every "*.csv" trace in a directory. Accepts a run directory holding a
// "traces" subdirectory.
std::vector<SequenceTrace> read_trace_dir(const std::filesystem::path& dir);

struct Report {
  Summary summary;
  std::vector<std::string> sequences;
  std::vector<std::string> methods;  // only methods present in the traces
  std::string table_csv;             // sequence by method
  std::string table_text;
  std::string method_csv;            // per-method averages
  std::string per_frame_csv;         // sequence, method, target, t, deviation_pct
};

Report build_report(std::span<const SequenceTrace> traces);

// Writes table.csv, table.txt, methods.csv, per_frame_deviation.csv and
// summary.csv into `out`.
Report cmd_report(const std::filesystem::path& trace_dir, const std::filesystem::path& out);

struct ModelFitRow {
  std::string sequence;
  double r2_linear = 0.0;
  double r2_exponential = 0.0;
  double r2_logarithmic = 0.0;
};

struct ModelFitStudy {
  std::vector<ModelFitRow> rows;
  ModelFitRow mean;
};

// Six drifting sequences; every frame probed at q = 4, 8, ..., 60 and each
// law fitted by least squares. R^2 is averaged over frames.
ModelFitStudy model_family_study(std::uint64_t seed, int n_frames = 32,
                                 double noise_sigma = kBenchmarkNoise);

// Coding contexts paired with multi-pass rates at the grid levels. Each
// frame's context comes from an encode of the previous frame at a random
// quality in [0, q_num - 1].
std::vector<TrainingRecord> collect_training_records(std::span<const SequenceProfile> sequences,
                                                     const QualityGrid& grid,
                                                     std::uint64_t seed,
                                                     int q_num = kDefaultQNum);

struct PredictorAccuracy {
  std::array<double, kGridSize> per_level_pct{};
  double average_pct = 0.0;
};

PredictorAccuracy predictor_accuracy_study(const Predictor& predictor,
                                           std::span<const TrainingRecord> records,
                                           const QualityGrid& grid, std::uint64_t seed);

}  // namespace rqlvc
