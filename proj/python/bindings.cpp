#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "rqlvc/codec_sim.hpp"
#include "rqlvc/errors.hpp"
#include "rqlvc/estimation.hpp"
#include "rqlvc/experiment.hpp"
#include "rqlvc/io.hpp"
#include "rqlvc/metrics.hpp"
#include "rqlvc/predictor.hpp"
#include "rqlvc/rate_control.hpp"
#include "rqlvc/rq_model.hpp"

namespace py = pybind11;
using namespace rqlvc;

namespace {

std::vector<RQPoint> to_points(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<RQPoint> points;
  points.reserve(pairs.size());
  for (const auto& [r, q] : pairs) points.push_back({r, q});
  return points;
}

std::vector<RdPoint> to_curve(const std::vector<std::pair<double, double>>& pairs) {
  std::vector<RdPoint> curve;
  curve.reserve(pairs.size());
  for (const auto& [r, p] : pairs) curve.push_back({r, p});
  return curve;
}

// Python sees JSON as text; the package wrapper converts with the json module.
ExperimentConfig config_from_text(const std::string& text, const std::string& base_dir) {
  return experiment_config_from_json(nlohmann::json::parse(text), base_dir);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Rate control for variable-rate learned video coding on a simulated codec";

  py::register_exception<DegenerateFitError>(m, "DegenerateFitError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  // R-Q laws
  py::enum_<ModelKind>(m, "ModelKind")
      .value("LINEAR", ModelKind::kLinear)
      .value("EXPONENTIAL", ModelKind::kExponential)
      .value("LOGARITHMIC", ModelKind::kLogarithmic);

  py::class_<RQPoint>(m, "RQPoint")
      .def(py::init<double, double>(), py::arg("rate"), py::arg("quality"))
      .def_readwrite("rate", &RQPoint::rate)
      .def_readwrite("quality", &RQPoint::quality);

  py::class_<RQParams>(m, "RQParams")
      .def(py::init([](double alpha, double beta, ModelKind kind) {
             return RQParams{alpha, beta, kind};
           }),
           py::arg("alpha"), py::arg("beta"), py::arg("kind") = ModelKind::kLogarithmic)
      .def_readwrite("alpha", &RQParams::alpha)
      .def_readwrite("beta", &RQParams::beta)
      .def_readwrite("kind", &RQParams::kind)
      .def("__repr__", [](const RQParams& p) {
        return "RQParams(alpha=" + format_number(p.alpha) + ", beta=" + format_number(p.beta) +
               ", kind=" + std::string(to_string(p.kind)) + ")";
      });

  m.def("eval_quality", &eval_quality, py::arg("params"), py::arg("rate"));
  m.def("invert_rate", &invert_rate, py::arg("params"), py::arg("quality"));
  m.def(
      "fit_least_squares",
      [](const std::vector<std::pair<double, double>>& points, ModelKind kind) {
        return fit_least_squares(to_points(points), kind);
      },
      py::arg("points"), py::arg("kind") = ModelKind::kLogarithmic,
      "Fit a law to (rate, quality) pairs.");
  m.def(
      "r_squared",
      [](const std::vector<std::pair<double, double>>& points, const RQParams& params) {
        return r_squared(to_points(points), params);
      },
      py::arg("points"), py::arg("params"));
  m.def(
      "lambda_from_quality",
      [](double q, double lambda_min, double lambda_max, int q_num) {
        return lambda_from_quality(LambdaMap{lambda_min, lambda_max, q_num}, q);
      },
      py::arg("quality"), py::arg("lambda_min") = 85.0, py::arg("lambda_max") = 840.0,
      py::arg("q_num") = kDefaultQNum);

  // Codec simulator
  py::class_<FrameProfile>(m, "FrameProfile")
      .def(py::init<>())
      .def_readwrite("alpha", &FrameProfile::true_alpha)
      .def_readwrite("beta", &FrameProfile::true_beta)
      .def_readwrite("noise_sigma", &FrameProfile::noise_sigma)
      .def_readwrite("d0", &FrameProfile::d0)
      .def_readwrite("decay_k", &FrameProfile::decay_k)
      .def_readwrite("curvature", &FrameProfile::curvature)
      .def_readwrite("pixels", &FrameProfile::pixels)
      .def("rate_at", &FrameProfile::rate_at, py::arg("quality"))
      .def("true_law", &FrameProfile::true_law);

  py::class_<SequenceProfile>(m, "SequenceProfile")
      .def(py::init<>())
      .def_readwrite("name", &SequenceProfile::name)
      .def_readwrite("gop_length", &SequenceProfile::gop_length)
      .def_readwrite("frames", &SequenceProfile::frames)
      .def("to_json", [](const SequenceProfile& p) { return to_json(p).dump(); });

  py::class_<EncodeResult>(m, "EncodeResult")
      .def_readonly("rate", &EncodeResult::rate)
      .def_readonly("distortion", &EncodeResult::distortion)
      .def_readonly("quality_used", &EncodeResult::quality_used)
      .def_readonly("psnr_db", &EncodeResult::psnr_db);

  m.def(
      "encode_frame",
      [](const FrameProfile& profile, double quality, std::uint64_t seed, std::uint64_t index) {
        Rng rng = make_rng(seed, index, Stream::kEncode);
        return encode_frame(profile, quality, rng);
      },
      py::arg("profile"), py::arg("quality"), py::arg("seed") = 0, py::arg("index") = 0);
  m.def(
      "generate_sequence",
      [](std::uint64_t seed, int n_frames, double alpha_drift, double beta_drift,
         const FrameProfile& base, std::string name) {
        return generate_sequence(seed, n_frames, DriftSpec{alpha_drift, beta_drift}, base,
                                 std::move(name));
      },
      py::arg("seed"), py::arg("n_frames"), py::arg("alpha_drift"), py::arg("beta_drift"),
      py::arg("base"), py::arg("name") = "synthetic");
  m.def("benchmark_base", &benchmark_base, py::arg("index"));

  // Predictors
  py::class_<QualityGrid>(m, "QualityGrid")
      .def(py::init<>())
      .def_readwrite("levels", &QualityGrid::levels);
  py::class_<Predictor>(m, "Predictor")
      .def("name", &Predictor::name)
      .def(
          "predict_rates",
          [](const Predictor& p, const FrameProfile& frame, double prev_rate, std::uint64_t seed) {
            const QualityGrid grid;
            EncodeResult prev;
            prev.rate = prev_rate;
            prev.quality_used = grid.midpoint();
            prev.distortion = frame.d0;
            Rng rng = make_rng(seed, 0, Stream::kPredictor);
            return p.predict(context_from(prev, frame), grid, rng).rates();
          },
          py::arg("frame"), py::arg("prev_rate"), py::arg("seed") = 0,
          "Rates at the default grid for a frame coded after one of prev_rate bits.");
  py::class_<OraclePredictor, Predictor>(m, "OraclePredictor").def(py::init<>());
  py::class_<SyntheticNoisyPredictor, Predictor>(m, "SyntheticNoisyPredictor")
      .def(py::init<>())
      .def(py::init<std::array<double, kGridSize>>(), py::arg("sigmas"))
      .def_static("calibrated", &SyntheticNoisyPredictor::calibrated)
      .def_property_readonly("sigmas", &SyntheticNoisyPredictor::sigmas);
  m.def("mae_loss", [](const std::vector<double>& predicted, const std::vector<double>& observed) {
    return mae_loss(predicted, observed);
  });
  m.def("expected_lognormal_error_pct", &expected_lognormal_error_pct, py::arg("sigma"));

  // Estimation
  py::enum_<EstimatorVariant>(m, "EstimatorVariant")
      .value("FUSION", EstimatorVariant::kFusion)
      .value("PREDICTOR_ONLY", EstimatorVariant::kPredictorOnly)
      .value("HISTORY_ONLY", EstimatorVariant::kHistoryOnly)
      .value("ADAPTIVE_LMS", EstimatorVariant::kAdaptiveLms)
      .value("FOUR_PASS", EstimatorVariant::kFourPassOracle);
  m.def(
      "estimate_batch",
      [](const std::vector<std::pair<double, double>>& predicted,
         const std::vector<std::pair<double, double>>& observed, const RQParams& fallback) {
        const auto p = to_points(predicted);
        const auto o = to_points(observed);
        const auto est = estimate_batch(p, o, fallback);
        return py::make_tuple(est.params, est.used_fallback);
      },
      py::arg("predicted"), py::arg("observed"), py::arg("fallback"));

  py::class_<LmsState>(m, "LmsState")
      .def(py::init([](double alpha, double beta, double mu, double eta) {
             return LmsState{alpha, beta, mu, eta};
           }),
           py::arg("alpha"), py::arg("beta"), py::arg("mu") = 0.01, py::arg("eta") = 0.01)
      .def_readwrite("alpha", &LmsState::alpha)
      .def_readwrite("beta", &LmsState::beta);
  m.def(
      "lms_step",
      [](const LmsState& state, double r_target, const std::function<double(double)>& encode) {
        const auto step = lms_step(state, r_target, [&](double q) {
          EncodeResult r;
          r.rate = encode(q);
          r.quality_used = q;
          return r;
        });
        return py::make_tuple(step.state, step.encoded.rate, step.q_real, step.q_est);
      },
      py::arg("state"), py::arg("r_target"), py::arg("encode"),
      "encode maps a quality level to the produced rate. Returns (state, rate, q_real, q_est).");

  // Rate control
  py::class_<RateControlConfig>(m, "RateControlConfig")
      .def(py::init<>())
      .def_readwrite("sliding_window", &RateControlConfig::sliding_window)
      .def_readwrite("minigop_len", &RateControlConfig::minigop_len)
      .def_readwrite("weights", &RateControlConfig::weights)
      .def_readwrite("gop_length", &RateControlConfig::gop_length)
      .def_readwrite("variant", &RateControlConfig::variant)
      .def_readwrite("grid", &RateControlConfig::grid)
      .def_readwrite("initial", &RateControlConfig::initial);
  py::class_<BudgetState>(m, "BudgetState")
      .def(py::init<>())
      .def_readwrite("n_coded", &BudgetState::n_coded)
      .def_readwrite("consumed_bits", &BudgetState::consumed_bits)
      .def_readwrite("minigop_consumed", &BudgetState::minigop_consumed)
      .def_readwrite("minigop_pos", &BudgetState::minigop_pos)
      .def_readwrite("minigop_frames", &BudgetState::minigop_frames);
  m.def("allocate_minigop", &allocate_minigop, py::arg("r_s"), py::arg("state"), py::arg("cfg"));
  m.def("allocate_frame", &allocate_frame, py::arg("r_mg"), py::arg("state"), py::arg("cfg"));

  py::class_<FrameRecord>(m, "FrameRecord")
      .def_readonly("t", &FrameRecord::t)
      .def_readonly("r_target", &FrameRecord::r_target)
      .def_readonly("q_pred", &FrameRecord::q_pred)
      .def_readonly("r_enc", &FrameRecord::r_enc)
      .def_readonly("psnr_db", &FrameRecord::psnr_db)
      .def_readonly("alpha", &FrameRecord::alpha)
      .def_readonly("beta", &FrameRecord::beta)
      .def_readonly("deviation_pct", &FrameRecord::deviation_pct);
  py::class_<SequenceTrace>(m, "SequenceTrace")
      .def_readonly("sequence", &SequenceTrace::sequence)
      .def_readonly("method", &SequenceTrace::method)
      .def_readwrite("target", &SequenceTrace::target)
      .def_readonly("seed", &SequenceTrace::seed)
      .def_readonly("frames", &SequenceTrace::frames)
      .def("total_bits", &SequenceTrace::total_bits)
      .def("mean_rate", &SequenceTrace::mean_rate)
      .def("mean_psnr_db", &SequenceTrace::mean_psnr_db)
      .def("mean_deviation_pct", &SequenceTrace::mean_deviation_pct);

  m.def(
      "run_closed_loop",
      [](const SequenceProfile& profile, double r_s, const RateControlConfig& cfg,
         const Predictor* predictor, std::uint64_t seed) {
        return run_closed_loop(profile, r_s, cfg, predictor, seed);
      },
      py::arg("profile"), py::arg("r_s"), py::arg("cfg"), py::arg("predictor") = nullptr,
      py::arg("seed") = 0);
  m.def(
      "run_one_step_eval",
      [](const SequenceProfile& profile, const RateControlConfig& cfg, const Predictor* predictor,
         std::uint64_t seed, double q_lo, double q_hi) {
        return run_one_step_eval(profile, cfg, predictor, seed, QualityRange{q_lo, q_hi});
      },
      py::arg("profile"), py::arg("cfg"), py::arg("predictor") = nullptr, py::arg("seed") = 0,
      py::arg("q_lo") = 10.0, py::arg("q_hi") = 30.0);
  m.def(
      "run_constant_quality",
      [](const SequenceProfile& profile, double quality, std::uint64_t seed) {
        return run_constant_quality(profile, quality, seed);
      },
      py::arg("profile"), py::arg("quality"), py::arg("seed") = 0);

  // Metrics
  m.def("rate_deviation_pct", &rate_deviation_pct, py::arg("r_target"), py::arg("r_enc"));
  m.def(
      "predictor_accuracy_pct",
      [](const std::vector<double>& encoded, const std::vector<double>& predicted) {
        if (encoded.size() != predicted.size()) {
          throw ContractError("encoded and predicted differ in length");
        }
        std::vector<RatePair> pairs;
        for (std::size_t i = 0; i < encoded.size(); ++i) pairs.push_back({encoded[i], predicted[i]});
        return predictor_accuracy_pct(pairs);
      },
      py::arg("encoded"), py::arg("predicted"));
  m.def(
      "bd_rate",
      [](const std::vector<std::pair<double, double>>& anchor,
         const std::vector<std::pair<double, double>>& test, bool pchip) {
        return bd_rate(to_curve(anchor), to_curve(test),
                       pchip ? BdInterpolation::kPchip : BdInterpolation::kCubic);
      },
      py::arg("anchor"), py::arg("test"), py::arg("pchip") = false,
      "BD-rate in percent between curves of (rate, psnr) pairs.");

  py::class_<MethodSummary>(m, "MethodSummary")
      .def_readonly("method", &MethodSummary::method)
      .def_readonly("mean_deviation_pct", &MethodSummary::mean_deviation_pct)
      .def_readonly("bd_rate_pct", &MethodSummary::bd_rate_pct);
  py::class_<Summary>(m, "Summary")
      .def_readonly("methods", &Summary::methods)
      .def("csv", [](const Summary& s) {
        std::ostringstream out;
        write_summary_csv(out, s);
        return out.str();
      });
  m.def("summarize", [](const std::vector<SequenceTrace>& traces) { return summarize(traces); });

  // Experiments
  py::class_<ExperimentResult>(m, "ExperimentResult")
      .def_readonly("traces", &ExperimentResult::traces)
      .def_readonly("summary", &ExperimentResult::summary)
      .def_readonly("initial", &ExperimentResult::initial);
  m.def("default_benchmark_config_text", [] { return default_benchmark_config_json().dump(); });
  m.def(
      "run_experiment_text",
      [](const std::string& text, int jobs, const std::string& base_dir) {
        const ExperimentConfig cfg = config_from_text(text, base_dir);
        py::gil_scoped_release release;
        return run_experiment(cfg, jobs);
      },
      py::arg("config"), py::arg("jobs") = 1, py::arg("base_dir") = "");
  m.def("write_experiment_outputs", &write_experiment_outputs, py::arg("result"), py::arg("out"));
  m.def(
      "cmd_run",
      [](const std::filesystem::path& config, const std::optional<std::filesystem::path>& out,
         int jobs) { return cmd_run(config, out, jobs); },
      py::arg("config"), py::arg("out") = std::nullopt, py::arg("jobs") = 1);
  m.def("cmd_generate", &cmd_generate, py::arg("seed"), py::arg("count"), py::arg("drift"),
        py::arg("out"), py::arg("n_frames") = kBenchmarkFrames);
  m.def(
      "cmd_report",
      [](const std::filesystem::path& traces, const std::filesystem::path& out) {
        return cmd_report(traces, out).table_text;
      },
      py::arg("traces"), py::arg("out"), "Writes the report files and returns the text table.");
  m.def(
      "model_family_study",
      [](std::uint64_t seed, int n_frames) {
        const auto study = model_family_study(seed, n_frames);
        py::dict d;
        d["linear"] = study.mean.r2_linear;
        d["exponential"] = study.mean.r2_exponential;
        d["logarithmic"] = study.mean.r2_logarithmic;
        return d;
      },
      py::arg("seed") = 0, py::arg("n_frames") = 32, "Mean R^2 of each law.");
}
