#include "rqlvc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "rqlvc/errors.hpp"
#include "rqlvc/io.hpp"

namespace rqlvc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Strict view of one JSON object: every key must be read, unread keys are
// reported as unknown fields.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(at(key), "missing required field");
    return j_.at(key);
  }

  double number(const std::string& key) { return as_number(raw(key), at(key)); }
  double number_or(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }
  int integer(const std::string& key) { return as_int(raw(key), at(key)); }
  int integer_or(const std::string& key, int fallback) {
    return has(key) ? integer(key) : fallback;
  }
  std::uint64_t seed(const std::string& key) { return as_seed(raw(key), at(key)); }
  std::string text(const std::string& key) {
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(at(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(at(item.key()), "unknown field");
    }
  }

  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    return v.get<double>();
  }
  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    return v.get<int>();
  }
  static std::uint64_t as_seed(const json& v, const std::string& path) {
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
      throw ConfigError(path, "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string index_path(const std::string& path, std::size_t i) {
  return fmt::format("{}[{}]", path, i);
}

const json& array_field(Fields& f, const std::string& key) {
  const json& v = f.raw(key);
  if (!v.is_array()) throw ConfigError(f.at(key), "expected an array");
  return v;
}

// Re-raises contract violations from the domain modules as configuration
// errors attached to `field`.
template <typename Fn>
auto config_guard(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
}

FrameProfile parse_frame(const json& j, const std::string& path) {
  Fields f(j, path);
  FrameProfile p;
  p.true_alpha = f.number("alpha");
  p.true_beta = f.number("beta");
  p.noise_sigma = f.number_or("noise_sigma", p.noise_sigma);
  p.d0 = f.number_or("d0", p.d0);
  p.decay_k = f.number_or("decay_k", p.decay_k);
  p.curvature = f.number_or("curvature", p.curvature);
  p.pixels = f.integer_or("pixels", p.pixels);
  f.finish();
  config_guard(path, [&] { p.validate(); });
  return p;
}

SequenceProfile parse_generate(const json& j, const std::string& path) {
  Fields f(j, path);
  const std::string name = f.text("name");
  const std::uint64_t seed = f.seed("seed");
  const int frames = f.integer_or("frames", kBenchmarkFrames);
  const int gop = f.integer_or("gop_length", 32);
  DriftSpec drift;
  if (f.has("drift")) {
    const json& d = f.raw("drift");
    if (d.is_number()) {
      drift = drift_from_scalar(Fields::as_number(d, f.at("drift")));
    } else {
      Fields df(d, f.at("drift"));
      drift.alpha = df.number("alpha");
      drift.beta = df.number("beta");
      df.finish();
    }
  }
  const FrameProfile base = parse_frame(f.raw("base"), f.at("base"));
  f.finish();
  return config_guard(path, [&] { return generate_sequence(seed, frames, drift, base, name, gop); });
}

SequenceProfile parse_sequence(const json& j, const std::string& path, const fs::path& base_dir) {
  Fields f(j, path);
  SequenceProfile p;
  if (f.has("file")) {
    if (f.has("generate")) throw ConfigError(path, "give either 'file' or 'generate'");
    fs::path file = f.text("file");
    if (file.is_relative()) file = base_dir / file;
    p = config_guard(f.at("file"), [&] { return sequence_profile_from_json(read_json_file(file)); });
  } else if (f.has("generate")) {
    p = parse_generate(f.raw("generate"), f.at("generate"));
  } else {
    throw ConfigError(path, "needs 'file' or 'generate'");
  }
  f.finish();
  return p;
}

TargetSpec parse_target(const json& j, const std::string& path) {
  TargetSpec t;
  if (j.is_number()) {
    t.value = j.get<double>();
    return t;
  }
  Fields f(j, path);
  if (f.has("quality")) {
    if (f.has("bits")) throw ConfigError(path, "give either 'quality' or 'bits'");
    t.value = f.number("quality");
  } else if (f.has("bits")) {
    t.kind = TargetSpec::Kind::kBits;
    t.value = f.number("bits");
  } else {
    throw ConfigError(path, "needs 'quality' or 'bits'");
  }
  f.finish();
  return t;
}

std::vector<std::uint64_t> parse_seeds(const json& j, const std::string& path) {
  std::vector<std::uint64_t> seeds;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) {
      seeds.push_back(Fields::as_seed(j[i], index_path(path, i)));
    }
    return seeds;
  }
  Fields f(j, path);
  const std::uint64_t first = f.seed("first");
  const int count = f.integer("count");
  f.finish();
  if (count < 0) throw ConfigError(f.at("count"), "must be non-negative");
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

template <typename Array>
Array parse_fixed_array(const json& j, const std::string& path) {
  Array out{};
  if (!j.is_array() || j.size() != out.size()) {
    throw ConfigError(path, fmt::format("expected an array of {} numbers", out.size()));
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Fields::as_number(j[i], index_path(path, i));
  return out;
}

void parse_rate_control(const json& j, const std::string& path, ExperimentConfig& cfg) {
  Fields f(j, path);
  RateControlConfig& rc = cfg.rate_control;
  rc.sliding_window = f.integer_or("sliding_window", rc.sliding_window);
  rc.minigop_len = f.integer_or("minigop_len", rc.minigop_len);
  if (f.has("weights")) {
    const json& w = array_field(f, "weights");
    rc.weights.clear();
    for (std::size_t i = 0; i < w.size(); ++i) {
      rc.weights.push_back(Fields::as_number(w[i], index_path(f.at("weights"), i)));
    }
  }
  rc.gop_length = f.integer_or("gop_length", rc.gop_length);
  if (f.has("grid")) {
    rc.grid.levels = parse_fixed_array<std::array<double, kGridSize>>(f.raw("grid"), f.at("grid"));
  }
  rc.q_num = f.integer_or("q_num", rc.q_num);
  rc.prior_weight = f.number_or("prior_weight", rc.prior_weight);
  rc.rate_floor = f.number_or("rate_floor", rc.rate_floor);
  if (f.has("initial")) {
    Fields init(f.raw("initial"), f.at("initial"));
    rc.initial = RQParams{init.number("alpha"), init.number("beta"), ModelKind::kLogarithmic};
    init.finish();
  }
  if (f.has("calibration_seed")) cfg.calibration_seed = f.seed("calibration_seed");
  f.finish();
}

PredictorSpec parse_predictor(const json& j, const std::string& path, const fs::path& base_dir) {
  Fields f(j, path);
  PredictorSpec spec;
  const std::string kind = f.text("kind");
  if (kind == "synthetic") {
    spec.kind = PredictorSpec::Kind::kSynthetic;
    if (f.has("sigmas")) {
      spec.sigmas =
          parse_fixed_array<std::array<double, kGridSize>>(f.raw("sigmas"), f.at("sigmas"));
    }
  } else if (kind == "oracle") {
    spec.kind = PredictorSpec::Kind::kOracle;
  } else if (kind == "regressor") {
    spec.kind = PredictorSpec::Kind::kRegressor;
    fs::path file = f.text("model_file");
    if (file.is_relative()) file = base_dir / file;
    spec.regressor = config_guard(f.at("model_file"),
                                  [&] { return regressor_from_json(read_json_file(file)); });
  } else {
    throw ConfigError(f.at("kind"), "expected synthetic, oracle or regressor, got '" + kind + "'");
  }
  f.finish();
  return spec;
}

// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown
// after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

bool valid_sequence_name(const std::string& name) {
  return !name.empty() && name.find("__") == std::string::npos &&
         name.find_first_of("/\\,\n") == std::string::npos;
}

std::string fixed(double v, int width) {
  if (std::isnan(v)) return fmt::format("{:>{}}", "-", width);
  return fmt::format("{:>{}.3f}", v, width);
}

}  // namespace

std::string TargetSpec::label() const {
  return kind == Kind::kAnchorQuality ? quality_label(value) : fmt::format("r{:g}", value);
}

std::unique_ptr<Predictor> PredictorSpec::make() const {
  switch (kind) {
    case Kind::kOracle:
      return std::make_unique<OraclePredictor>();
    case Kind::kRegressor:
      if (!regressor) throw ContractError("regressor predictor without a model");
      return std::make_unique<RegressorPredictor>(*regressor);
    case Kind::kSynthetic:
      break;
  }
  if (sigmas) return std::make_unique<SyntheticNoisyPredictor>(*sigmas);
  return std::make_unique<SyntheticNoisyPredictor>(SyntheticNoisyPredictor::calibrated());
}

void ExperimentConfig::validate() const {
  if (sequences.empty()) throw ConfigError("sequences", "needs at least one sequence");
  if (methods.empty()) throw ConfigError("methods", "needs at least one method");
  if (targets.empty() && protocol == Protocol::kClosedLoop) {
    throw ConfigError("targets", "needs at least one target");
  }
  if (seeds.empty()) throw ConfigError("seeds", "needs at least one seed");

  std::set<std::string> names;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const std::string path = index_path("sequences", i);
    if (!valid_sequence_name(sequences[i].name)) {
      throw ConfigError(path, "name must be non-empty without '__', '/', '\\' or ','");
    }
    if (!names.insert(sequences[i].name).second) {
      throw ConfigError(path, "duplicate sequence name '" + sequences[i].name + "'");
    }
    config_guard(path, [&] { sequences[i].validate(); });
  }
  if (std::set<EstimatorVariant>(methods.begin(), methods.end()).size() != methods.size()) {
    throw ConfigError("methods", "duplicate method");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds", "duplicate seed");
  }
  std::set<std::string> labels;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& t = targets[i];
    const std::string path = index_path("targets", i);
    if (t.kind == TargetSpec::Kind::kAnchorQuality && !is_valid_quality(t.value, rate_control.q_num)) {
      throw ConfigError(path, "anchor quality outside [0, q_num - 1]");
    }
    if (t.kind == TargetSpec::Kind::kBits && !(t.value > 0.0 && std::isfinite(t.value))) {
      throw ConfigError(path, "bits must be positive");
    }
    if (!labels.insert(t.label()).second) throw ConfigError(path, "duplicate target");
  }
  if (protocol == Protocol::kOneStep) {
    const auto& r = one_step_range;
    if (!is_valid_quality(r.lo, rate_control.q_num) || !is_valid_quality(r.hi, rate_control.q_num) ||
        r.hi < r.lo) {
      throw ConfigError("one_step_range", "needs lo <= hi within [0, q_num - 1]");
    }
  }
  config_guard("rate_control", [&] {
    RateControlConfig rc = rate_control;
    rc.variant = EstimatorVariant::kFusion;
    rc.validate();
  });
  if (predictor.kind == PredictorSpec::Kind::kRegressor) {
    if (!predictor.regressor) throw ConfigError("predictor.model_file", "no model loaded");
    if (!(predictor.regressor->grid() == rate_control.grid)) {
      throw ConfigError("predictor.model_file", "model was trained on a different quality grid");
    }
  }
  if (predictor.sigmas) {
    for (double s : *predictor.sigmas) {
      if (!(s >= 0.0 && std::isfinite(s))) {
        throw ConfigError("predictor.sigmas", "sigmas must be finite and non-negative");
      }
    }
  }
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  Fields f(j, "");
  const int version = f.integer("schema_version");
  if (version != kExperimentSchemaVersion) {
    throw ConfigError("schema_version", fmt::format("unsupported version {}", version));
  }
  ExperimentConfig cfg;

  const json& seqs = array_field(f, "sequences");
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    cfg.sequences.push_back(parse_sequence(seqs[i], index_path("sequences", i), base_dir));
  }

  const json& methods = array_field(f, "methods");
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const std::string path = index_path("methods", i);
    if (!methods[i].is_string()) throw ConfigError(path, "expected a method name");
    cfg.methods.push_back(
        config_guard(path, [&] { return variant_from_string(methods[i].get<std::string>()); }));
  }

  if (f.has("targets")) {
    const json& targets = array_field(f, "targets");
    for (std::size_t i = 0; i < targets.size(); ++i) {
      cfg.targets.push_back(parse_target(targets[i], index_path("targets", i)));
    }
  }
  cfg.seeds = parse_seeds(f.raw("seeds"), "seeds");

  if (f.has("protocol")) {
    const std::string protocol = f.text("protocol");
    if (protocol == "closed_loop") {
      cfg.protocol = Protocol::kClosedLoop;
    } else if (protocol == "one_step") {
      cfg.protocol = Protocol::kOneStep;
    } else {
      throw ConfigError("protocol", "expected closed_loop or one_step, got '" + protocol + "'");
    }
  }
  if (f.has("one_step_range")) {
    const auto r = parse_fixed_array<std::array<double, 2>>(f.raw("one_step_range"), "one_step_range");
    cfg.one_step_range = {r[0], r[1]};
  }
  if (f.has("rate_control")) parse_rate_control(f.raw("rate_control"), "rate_control", cfg);
  if (f.has("lms")) {
    Fields lms(f.raw("lms"), "lms");
    cfg.rate_control.lms_mu = lms.number_or("mu", cfg.rate_control.lms_mu);
    cfg.rate_control.lms_eta = lms.number_or("eta", cfg.rate_control.lms_eta);
    lms.finish();
  }
  if (f.has("predictor")) cfg.predictor = parse_predictor(f.raw("predictor"), "predictor", base_dir);
  if (f.has("output_dir")) {
    cfg.output_dir = f.text("output_dir");
    if (cfg.output_dir.is_relative() && !base_dir.empty()) cfg.output_dir = base_dir / cfg.output_dir;
  }
  f.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const std::exception& e) {
    throw ConfigError("<file>", e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

FrameProfile benchmark_base(std::size_t index) {
  // (alpha, rate at quality 10) of five contents: moderate, busy, flat,
  // detailed, low-motion.
  static constexpr std::array<std::array<double, 2>, 5> kBases{
      {{16.0, 4000.0}, {20.0, 8000.0}, {14.0, 3000.0}, {18.0, 6000.0}, {22.0, 2500.0}}};
  const auto& b = kBases[index % kBases.size()];
  FrameProfile f;
  f.true_alpha = b[0];
  f.true_beta = 10.0 - b[0] * std::log(b[1]);
  f.noise_sigma = kBenchmarkNoise;
  return f;
}

std::string benchmark_name(std::size_t index) { return fmt::format("synth_{}", index); }

DriftSpec drift_from_scalar(double drift) { return {kAlphaDriftPerBetaDrift * drift, drift}; }

json default_benchmark_config_json() {
  json sequences = json::array();
  for (std::size_t i = 0; i < 5; ++i) {
    sequences.push_back({{"generate",
                          {{"name", benchmark_name(i)},
                           {"seed", 100 + i},
                           {"frames", kBenchmarkFrames},
                           {"gop_length", 32},
                           {"drift", {{"alpha", kBenchmarkDrift.alpha}, {"beta", kBenchmarkDrift.beta}}},
                           {"base", to_json(benchmark_base(i))}}}});
  }
  json methods = json::array();
  for (auto v : kAllVariants) methods.push_back(std::string(to_string(v)));
  const RateControlConfig rc;
  return {{"schema_version", kExperimentSchemaVersion},
          {"sequences", sequences},
          {"methods", methods},
          {"targets", kAnchorLevels},
          {"seeds", {{"first", 0}, {"count", 20}}},
          {"protocol", "closed_loop"},
          {"rate_control",
           {{"sliding_window", rc.sliding_window},
            {"minigop_len", rc.minigop_len},
            {"weights", rc.weights},
            {"grid", rc.grid.levels},
            {"q_num", rc.q_num},
            {"prior_weight", rc.prior_weight},
            {"rate_floor", rc.rate_floor},
            {"calibration_seed", 0}}},
          {"lms", {{"mu", rc.lms_mu}, {"eta", rc.lms_eta}}},
          {"predictor", {{"kind", "synthetic"}}},
          {"output_dir", "out/benchmark"}};
}

ExperimentConfig default_benchmark_config() {
  return experiment_config_from_json(default_benchmark_config_json());
}

ExperimentResult run_experiment(const ExperimentConfig& config, int jobs) {
  config.validate();
  ExperimentResult result;
  const RateControlConfig& base_rc = config.rate_control;
  result.initial = base_rc.initial
                       ? *base_rc.initial
                       : calibrate_initial_params(config.sequences, base_rc.grid,
                                                  config.calibration_seed, base_rc.q_num);
  const auto predictor = config.predictor.make();

  auto method_cfg = [&](EstimatorVariant v) {
    RateControlConfig rc = base_rc;
    rc.variant = v;
    rc.initial = result.initial;
    return rc;
  };

  if (config.protocol == Protocol::kOneStep) {
    struct Cell {
      std::size_t seq;
      EstimatorVariant method;
      std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t s = 0; s < config.sequences.size(); ++s) {
      for (auto m : config.methods) {
        for (auto seed : config.seeds) cells.push_back({s, m, seed});
      }
    }
    result.traces.resize(cells.size());
    parallel_for(cells.size(), jobs, [&](std::size_t i) {
      const Cell& c = cells[i];
      result.traces[i] = run_one_step_eval(config.sequences[c.seq], method_cfg(c.method),
                                           predictor.get(), c.seed, config.one_step_range);
    });
    result.summary = summarize(result.traces);
    return result;
  }

  // Anchors first: their mean rate is the budget R_s of quality targets.
  struct AnchorCell {
    std::size_t seq;
    std::size_t target;
    std::uint64_t seed;
  };
  std::vector<AnchorCell> anchor_cells;
  for (std::size_t s = 0; s < config.sequences.size(); ++s) {
    for (std::size_t k = 0; k < config.targets.size(); ++k) {
      if (config.targets[k].kind != TargetSpec::Kind::kAnchorQuality) continue;
      for (auto seed : config.seeds) anchor_cells.push_back({s, k, seed});
    }
  }
  std::vector<SequenceTrace> anchors(anchor_cells.size());
  parallel_for(anchor_cells.size(), jobs, [&](std::size_t i) {
    const AnchorCell& c = anchor_cells[i];
    anchors[i] = run_constant_quality(config.sequences[c.seq], config.targets[c.target].value,
                                      c.seed, base_rc.q_num);
  });
  std::map<std::tuple<std::size_t, std::size_t, std::uint64_t>, double> anchor_rate;
  for (std::size_t i = 0; i < anchor_cells.size(); ++i) {
    const AnchorCell& c = anchor_cells[i];
    anchor_rate[{c.seq, c.target, c.seed}] = anchors[i].mean_rate();
  }

  struct Cell {
    std::size_t seq;
    std::size_t target;
    EstimatorVariant method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < config.sequences.size(); ++s) {
    for (std::size_t k = 0; k < config.targets.size(); ++k) {
      for (auto m : config.methods) {
        for (auto seed : config.seeds) cells.push_back({s, k, m, seed});
      }
    }
  }
  std::vector<SequenceTrace> traces(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    const Cell& c = cells[i];
    const TargetSpec& target = config.targets[c.target];
    const double r_s = target.kind == TargetSpec::Kind::kBits
                           ? target.value
                           : anchor_rate.at({c.seq, c.target, c.seed});
    traces[i] = run_closed_loop(config.sequences[c.seq], r_s, method_cfg(c.method),
                                predictor.get(), c.seed);
    traces[i].target = target.label();
  });

  result.traces = std::move(anchors);
  result.traces.insert(result.traces.end(), std::make_move_iterator(traces.begin()),
                       std::make_move_iterator(traces.end()));
  result.summary = summarize(result.traces);
  return result;
}

void write_experiment_outputs(const ExperimentResult& result, const fs::path& out) {
  const fs::path trace_dir = out / "traces";
  fs::create_directories(trace_dir);
  for (const auto& trace : result.traces) {
    std::ostringstream csv;
    write_trace_csv(csv, trace);
    write_text_file(trace_dir / trace_file_name(trace), csv.str());
  }
  std::ostringstream summary;
  write_summary_csv(summary, result.summary);
  write_text_file(out / "summary.csv", summary.str());
}

ExperimentResult cmd_run(const fs::path& config_path, const std::optional<fs::path>& out,
                         int jobs, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (out) cfg.output_dir = *out;
  if (seed) cfg.seeds = {*seed};
  ExperimentResult result = run_experiment(cfg, jobs);
  write_experiment_outputs(result, cfg.output_dir);
  return result;
}

std::vector<fs::path> cmd_generate(std::uint64_t seed, int count, double drift, const fs::path& out,
                                   int n_frames) {
  if (count < 1) throw ContractError("generate needs count >= 1");
  if (!(drift >= 0.0)) throw ContractError("drift must be non-negative");
  fs::create_directories(out);
  std::vector<fs::path> written;
  for (int i = 0; i < count; ++i) {
    const auto index = static_cast<std::size_t>(i);
    const std::uint64_t sequence_seed = make_rng(seed, index, Stream::kSequence)();
    const SequenceProfile profile =
        generate_sequence(sequence_seed, n_frames, drift_from_scalar(drift), benchmark_base(index),
                          fmt::format("seq_{}", i));
    const fs::path path = out / fmt::format("seq_{}.json", i);
    write_text_file(path, to_json(profile).dump(2) + "\n");
    written.push_back(path);
  }
  return written;
}

std::vector<SequenceTrace> read_trace_dir(const fs::path& dir) {
  fs::path root = dir;
  if (fs::is_directory(dir / "traces")) root = dir / "traces";
  if (!fs::is_directory(root)) throw ContractError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    const fs::path& p = entry.path();
    if (entry.is_regular_file() && p.extension() == ".csv" &&
        p.filename().string().find("__") != std::string::npos) {
      files.push_back(p);
    }
  }
  if (files.empty()) throw ContractError("no trace files in " + root.string());
  std::sort(files.begin(), files.end());
  std::vector<SequenceTrace> traces;
  traces.reserve(files.size());
  for (const auto& p : files) traces.push_back(read_trace_file(p));
  return traces;
}

Report build_report(std::span<const SequenceTrace> traces) {
  Report report;
  report.summary = summarize(traces);
  const Summary& summary = report.summary;
  for (const auto& row : summary.rows) {
    if (std::find(report.sequences.begin(), report.sequences.end(), row.sequence) ==
        report.sequences.end()) {
      report.sequences.push_back(row.sequence);
    }
  }
  for (const auto& m : summary.methods) report.methods.push_back(m.method);

  auto cell = [&](const MethodSummary& m, const std::string& seq) -> const SequenceSummary* {
    for (const auto& s : m.per_sequence) {
      if (s.sequence == seq) return &s;
    }
    return nullptr;
  };

  std::string csv = "sequence";
  for (const auto& m : report.methods) csv += fmt::format(",{0}_deviation_pct,{0}_bd_rate_pct", m);
  csv += "\n";
  for (const auto& seq : report.sequences) {
    csv += seq;
    for (const auto& m : summary.methods) {
      const SequenceSummary* s = cell(m, seq);
      if (s) {
        csv += "," + format_number(s->mean_deviation_pct) + "," + format_number(s->bd_rate_pct);
      } else {
        csv += ",,";
      }
    }
    csv += "\n";
  }
  report.table_csv = std::move(csv);

  std::string methods_csv = "method,mean_deviation_pct,bd_rate_pct\n";
  for (const auto& m : summary.methods) {
    methods_csv += fmt::format("{},{},{}\n", m.method, format_number(m.mean_deviation_pct),
                               format_number(m.bd_rate_pct));
  }
  report.method_csv = std::move(methods_csv);

  std::size_t name_width = 8;
  for (const auto& s : report.sequences) name_width = std::max(name_width, s.size());
  constexpr int kCol = 10;
  std::string text = fmt::format("{:<{}}", "sequence", name_width);
  for (const auto& m : report.methods) {
    text += fmt::format(" | {:^{}}", m, 2 * kCol + 1);
  }
  text += "\n" + fmt::format("{:<{}}", "", name_width);
  for (std::size_t i = 0; i < report.methods.size(); ++i) {
    text += fmt::format(" | {:>{}} {:>{}}", "dR %", kCol, "BD %", kCol);
  }
  text += "\n";
  for (const auto& seq : report.sequences) {
    text += fmt::format("{:<{}}", seq, name_width);
    for (const auto& m : summary.methods) {
      const SequenceSummary* s = cell(m, seq);
      if (s) {
        text += " | " + fixed(s->mean_deviation_pct, kCol) + " " + fixed(s->bd_rate_pct, kCol);
      } else {
        text += fmt::format(" | {:>{}}", "", 2 * kCol + 1);
      }
    }
    text += "\n";
  }
  text += fmt::format("{:<{}}", "average", name_width);
  for (const auto& m : summary.methods) {
    text += " | " + fixed(m.mean_deviation_pct, kCol) + " " + fixed(m.bd_rate_pct, kCol);
  }
  text += "\n";
  report.table_text = std::move(text);

  std::string per_frame = "sequence,method,target,t,deviation_pct\n";
  for (const auto& row : summary.rows) {
    std::vector<double> sum;
    std::vector<int> count;
    for (const auto& tr : traces) {
      if (tr.sequence != row.sequence || tr.method != row.method || tr.target != row.target) {
        continue;
      }
      for (const auto& f : tr.frames) {
        const auto t = static_cast<std::size_t>(f.t);
        if (t >= sum.size()) {
          sum.resize(t + 1, 0.0);
          count.resize(t + 1, 0);
        }
        sum[t] += f.deviation_pct;
        count[t] += 1;
      }
    }
    for (std::size_t t = 0; t < sum.size(); ++t) {
      if (count[t] == 0) continue;
      per_frame += fmt::format("{},{},{},{},{}\n", row.sequence, row.method, row.target, t,
                               format_number(sum[t] / count[t]));
    }
  }
  report.per_frame_csv = std::move(per_frame);
  return report;
}

Report cmd_report(const fs::path& trace_dir, const fs::path& out) {
  const auto traces = read_trace_dir(trace_dir);
  Report report = build_report(traces);
  fs::create_directories(out);
  write_text_file(out / "table.csv", report.table_csv);
  write_text_file(out / "table.txt", report.table_text);
  write_text_file(out / "methods.csv", report.method_csv);
  write_text_file(out / "per_frame_deviation.csv", report.per_frame_csv);
  std::ostringstream summary;
  write_summary_csv(summary, report.summary);
  write_text_file(out / "summary.csv", summary.str());
  return report;
}

ModelFitStudy model_family_study(std::uint64_t seed, int n_frames, double noise_sigma) {
  if (n_frames < 1) throw ContractError("model_family_study needs n_frames >= 1");
  if (!(noise_sigma >= 0.0)) throw ContractError("noise_sigma must be non-negative");
  std::vector<double> levels;
  for (int q = 4; q <= 60; q += 4) levels.push_back(q);

  ModelFitStudy study;
  constexpr std::size_t kSequences = 6;
  for (std::size_t i = 0; i < kSequences; ++i) {
    FrameProfile base = benchmark_base(i);
    if (i == 5) {
      // Sixth content: shallow slope, low rate.
      base.true_alpha = 12.0;
      base.true_beta = 10.0 - 12.0 * std::log(1500.0);
    }
    base.noise_sigma = noise_sigma;
    const std::uint64_t sequence_seed = make_rng(seed, i, Stream::kSequence)();
    const SequenceProfile seq =
        generate_sequence(sequence_seed, n_frames, kBenchmarkDrift, base, fmt::format("fit_{}", i));
    ModelFitRow row;
    row.sequence = seq.name;
    for (std::size_t t = 0; t < seq.frames.size(); ++t) {
      Rng rng = make_rng(seed, i * 100000 + t, Stream::kProbe);
      const auto points = multi_pass_probe(seq.frames[t], levels, rng);
      row.r2_linear += r_squared(points, fit_least_squares(points, ModelKind::kLinear));
      row.r2_exponential += r_squared(points, fit_least_squares(points, ModelKind::kExponential));
      row.r2_logarithmic += r_squared(points, fit_least_squares(points, ModelKind::kLogarithmic));
    }
    const double n = static_cast<double>(seq.frames.size());
    row.r2_linear /= n;
    row.r2_exponential /= n;
    row.r2_logarithmic /= n;
    study.rows.push_back(row);
  }
  study.mean.sequence = "mean";
  for (const auto& r : study.rows) {
    study.mean.r2_linear += r.r2_linear / kSequences;
    study.mean.r2_exponential += r.r2_exponential / kSequences;
    study.mean.r2_logarithmic += r.r2_logarithmic / kSequences;
  }
  return study;
}

std::vector<TrainingRecord> collect_training_records(std::span<const SequenceProfile> sequences,
                                                     const QualityGrid& grid, std::uint64_t seed,
                                                     int q_num) {
  grid.validate(q_num);
  std::vector<TrainingRecord> records;
  std::uint64_t index = 0;
  for (const auto& seq : sequences) {
    seq.validate();
    std::optional<EncodeResult> prev;
    for (const auto& frame : seq.frames) {
      TrainingRecord rec;
      Rng draw = make_rng(seed, index, Stream::kTargetDraw);
      std::uniform_real_distribution<double> uniform(0.0, max_quality(q_num));
      const double q_pre = uniform(draw);
      rec.context = prev ? context_from(*prev, frame)
                         : first_context(frame.rate_at(grid.midpoint()), frame, grid);
      Rng probe = make_rng(seed, index, Stream::kProbe);
      const auto points = multi_pass_probe(frame, grid.levels, probe, q_num);
      for (std::size_t k = 0; k < kGridSize; ++k) rec.observed_rates[k] = points[k].rate;
      records.push_back(rec);

      Rng pre = make_rng(seed, index, Stream::kPreEncode);
      prev = encode_frame(frame, q_pre, pre, q_num);
      ++index;
    }
  }
  return records;
}

PredictorAccuracy predictor_accuracy_study(const Predictor& predictor,
                                           std::span<const TrainingRecord> records,
                                           const QualityGrid& grid, std::uint64_t seed) {
  if (records.empty()) throw ContractError("predictor_accuracy_study needs records");
  std::array<std::vector<RatePair>, kGridSize> pairs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng = make_rng(seed, i, Stream::kPredictor);
    const auto predicted = predictor.predict(records[i].context, grid, rng).rates();
    for (std::size_t k = 0; k < kGridSize; ++k) {
      pairs[k].push_back({records[i].observed_rates[k], predicted[k]});
    }
  }
  PredictorAccuracy acc;
  for (std::size_t k = 0; k < kGridSize; ++k) {
    acc.per_level_pct[k] = predictor_accuracy_pct(pairs[k]);
    acc.average_pct += acc.per_level_pct[k] / static_cast<double>(kGridSize);
  }
  return acc;
}

}  // namespace rqlvc
