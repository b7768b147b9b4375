import math

import pytest

import rqlvc


def test_log_fit_recovers_parameters():
    pts = [(r, 5.0 * math.log(r) - 12.0) for r in (100.0, 400.0, 2500.0, 9000.0)]
    p = rqlvc.fit_least_squares(pts, rqlvc.ModelKind.LOGARITHMIC)
    assert p.alpha == pytest.approx(5.0, abs=1e-9)
    assert p.beta == pytest.approx(-12.0, abs=1e-9)
    assert rqlvc.r_squared(pts, p) == pytest.approx(1.0)


def test_degenerate_fit_raises():
    with pytest.raises(rqlvc.DegenerateFitError):
        rqlvc.fit_least_squares([(100.0, 1.0), (100.0, 2.0)])


def test_lambda_endpoints():
    assert rqlvc.lambda_from_quality(0) == 85.0
    assert rqlvc.lambda_from_quality(63) == 840.0


def test_metrics():
    assert rqlvc.rate_deviation_pct(1000.0, 1020.0) == pytest.approx(2.0, abs=1e-12)
    anchor = [(1000.0, 30.0), (2000.0, 33.0), (4000.0, 36.0), (8000.0, 39.0)]
    shifted = [(1.1 * r, p) for r, p in anchor]
    assert rqlvc.bd_rate(anchor, anchor) == pytest.approx(0.0, abs=1e-9)
    assert rqlvc.bd_rate(anchor, shifted) == pytest.approx(10.0, abs=1e-6)


def test_lms_no_update_on_target():
    state = rqlvc.LmsState(2.0, 0.0)
    new, rate, q_real, q_est = rqlvc.lms_step(state, 100.0, lambda q: math.exp(q / 2.0))
    assert rate == pytest.approx(100.0)
    assert (new.alpha, new.beta) == (state.alpha, state.beta)


def test_closed_loop_oracle_conserves_budget():
    base = rqlvc.benchmark_base(0)
    base.noise_sigma = 0.0
    seq = rqlvc.generate_sequence(1, 96, 0.0, 0.0, base, "flat")
    cfg = rqlvc.RateControlConfig()
    cfg.variant = rqlvc.EstimatorVariant.FUSION
    r_s = base.rate_at(25.0)
    trace = rqlvc.run_closed_loop(seq, r_s, cfg, rqlvc.OraclePredictor(), 3)
    assert len(trace.frames) == 96
    assert abs(trace.total_bits() - 96 * r_s) / (96 * r_s) < 0.005


def test_experiment_roundtrip(tmp_path):
    cfg = rqlvc.default_benchmark_config()
    cfg["sequences"] = cfg["sequences"][:1]
    cfg["sequences"][0]["generate"]["frames"] = 16
    cfg["seeds"] = [0]
    cfg["methods"] = ["fusion", "four_pass"]
    result = rqlvc.run_experiment(cfg)
    assert [m.method for m in result.summary.methods] == ["fusion", "four_pass"]
    rqlvc.write_experiment_outputs(result, tmp_path)
    table = rqlvc.cmd_report(tmp_path, tmp_path / "report")
    assert "fusion" in table
    assert (tmp_path / "summary.csv").read_text() == result.summary.csv()


def test_unknown_config_field_rejected():
    cfg = rqlvc.default_benchmark_config()
    cfg["lms"]["gamma"] = 1.0
    with pytest.raises(rqlvc.ConfigError, match="lms.gamma"):
        rqlvc.run_experiment(cfg)
