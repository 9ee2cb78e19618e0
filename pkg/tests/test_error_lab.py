import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsplit.error_lab import (ErrorSpec, RateReport, coupled_errors, exp_integrability_probe,
                               fit_rate, moment_estimate, moment_probe, parse_functional,
                               rate_experiment, strong_error)
from acsplit.errors import ConfigurationError, DomainError, ExperimentError, FitError
from acsplit.integrators import SchemeConfig, run_trajectory
from acsplit.noise import QSpec
from oracles import galerkin_ode

NO_NOISE = QSpec.diagonal(0, 0.0)


# -- fitting -----------------------------------------------------------------------------

@pytest.mark.parametrize("slope", [1.0, 0.25, 0.5])
def test_exact_power_law(slope):
    dts = [2.0**-e for e in range(5, 10)]
    fit = fit_rate(dts, [3.0 * d**slope for d in dts])
    assert fit.slope == pytest.approx(slope, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.ci[0] == pytest.approx(slope, abs=1e-9) and fit.ci[1] == pytest.approx(slope, abs=1e-9)


def test_perturbed_power_law():
    dts = np.array([2.0**-e for e in range(5, 10)])
    noise = np.array([1.01, 0.99, 1.005, 0.995, 1.0])
    fit = fit_rate(dts, dts**0.5 * noise)
    assert abs(fit.slope - 0.5) <= 0.02
    assert fit.ci[0] < fit.slope < fit.ci[1]


def test_weights_ignore_outlier():
    dts = np.array([2.0**-e for e in range(5, 10)])
    err = dts.copy()
    err[0] *= 5
    w = np.array([1e-8, 1, 1, 1, 1])
    assert fit_rate(dts, err, w).slope == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("dts,errs", [
    ([0.1, 0.05], [1.0, 0.5]),
    ([0.1, 0.1, 0.1], [1.0, 0.9, 0.8]),
    ([0.1, 0.05, 0.025], [1.0, 0.0, 0.3]),
    ([0.1, 0.05, 0.025], [1.0, math.nan, 0.3]),
])
def test_fit_errors(dts, errs):
    with pytest.raises(FitError):
        fit_rate(dts, errs)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-3, 3))
def test_fit_recovers_any_power_law(slope, log_c):
    dts = [2.0**-e for e in range(3, 9)]
    fit = fit_rate(dts, [math.exp(log_c) * d**slope for d in dts])
    assert fit.slope == pytest.approx(slope, abs=1e-9)


def test_moment_estimate():
    v = np.array([1.0, 2.0, 3.0])
    est, se = moment_estimate(v, 2)
    assert est == pytest.approx(math.sqrt(14 / 3))
    assert se > 0
    assert moment_estimate(np.zeros(4), 2) == (0.0, 0.0)


def test_error_spec_validation():
    ErrorSpec("L4", p=4)
    with pytest.raises(ConfigurationError):
        ErrorSpec("L4", p=2)
    with pytest.raises(ConfigurationError):
        ErrorSpec(p=1)
    with pytest.raises(ConfigurationError):
        ErrorSpec(time="average")
    with pytest.raises(DomainError):
        ErrorSpec("L3")


def test_report_round_trip(tmp_path):
    rep = RateReport([0.1, 0.05, 0.025], [1.0, 0.5, 0.25], [0.01, 0.005, 0.002], 1.0, 0.0,
                     (0.9, 1.1), {"noise": "white", "seed": 3})
    back = RateReport.from_json(rep.to_json(tmp_path / "r.json"))
    assert back == rep
    assert json.loads((tmp_path / "r.json").read_text())["slope"] == 1.0
    rep.to_csv(tmp_path / "r.csv")
    rows = (tmp_path / "r.csv").read_text().splitlines()
    assert rows[0] == "dt,error,stderr" and len(rows) == 4
    rep.to_long_csv(tmp_path / "l.csv")
    assert len((tmp_path / "l.csv").read_text().splitlines()) == 7


# -- strong errors -------------------------------------------------------------------------

def test_error_at_reference_step_is_zero():
    cfg = SchemeConfig(K=16, dt=2.0**-8, T=0.25)
    assert strong_error(cfg, 2.0**-8, ErrorSpec(samples=4)) == (0.0, 0.0)


def test_noiseless_error_matches_direct_runs():
    spec = ErrorSpec(time="endpoint", samples=3)
    dt_ref = 2.0**-12
    c_ref = galerkin_ode(SchemeConfig(K=1, x0="sine k=1 amp=0.8").initial_coeffs(), 0.5)
    errs = []
    for e in (6, 7, 8):
        cfg = SchemeConfig(K=1, dt=2.0**-e, T=0.5, noise=NO_NOISE, x0="sine k=1 amp=0.8")
        est, se = strong_error(cfg, dt_ref, spec)
        ref = run_trajectory(SchemeConfig(K=1, dt=dt_ref, T=0.5, noise=NO_NOISE, x0=cfg.x0)).states[-1]
        direct = abs(run_trajectory(cfg).states[-1, 0] - ref[0])
        assert est == pytest.approx(direct, rel=1e-10)
        assert se <= 1e-12 * est
        # the reference itself is close to the exact flow
        assert abs(ref[0] - c_ref[0]) < 0.1 * direct
        errs.append(est)
    assert errs[0] / errs[1] == pytest.approx(2, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(2, rel=0.15)


def test_reference_too_coarse():
    cfg = SchemeConfig(K=8, dt=2.0**-6, T=0.25)
    with pytest.raises(ConfigurationError):
        strong_error(cfg, 2.0**-8, ErrorSpec(samples=2))


def test_divergence_threshold():
    cfg = SchemeConfig(scheme="plain", K=16, dt=0.1, T=1.0, noise=NO_NOISE, x0="constant c=50")
    with pytest.raises(ExperimentError):
        strong_error(cfg, 0.1 / 8, ErrorSpec(samples=4))


def test_coupled_errors_shapes_and_start():
    cfg = SchemeConfig(K=16, dt=2.0**-5, T=0.25)
    errs, bad = coupled_errors(cfg, [2.0**-5, 2.0**-6], 2.0**-9, ErrorSpec(samples=5))
    assert [e.shape for e in errs] == [(9, 5), (17, 5)]
    assert np.all(errs[0][0] == 0) and not bad.any()


def test_sup_dominates_endpoint():
    cfg = SchemeConfig(K=32, dt=2.0**-5, T=0.25, noise=QSpec.diagonal(1.1))
    kw = dict(samples=20)
    e_end = strong_error(cfg, 2.0**-9, ErrorSpec(time="endpoint", **kw), seed=3)[0]
    e_mom = strong_error(cfg, 2.0**-9, ErrorSpec(time="sup_moment", **kw), seed=3)[0]
    e_sup = strong_error(cfg, 2.0**-9, ErrorSpec(time="sup", **kw), seed=3)[0]
    assert e_end <= e_mom <= e_sup


def test_errors_shrink_with_dt():
    cfg = SchemeConfig(K=32, dt=2.0**-4, T=0.25, noise=QSpec.diagonal(1.1))
    rep = rate_experiment(cfg, [2.0**-4, 2.0**-5, 2.0**-6], 2.0**-9, ErrorSpec(samples=20), seed=1)
    assert rep.dts == sorted(rep.dts, reverse=True)
    assert rep.errors[0] > rep.errors[1] > rep.errors[2]
    assert rep.meta["samples"] == 20 and rep.meta["n_divergent"] == 0


def test_threads_do_not_change_results():
    cfg = SchemeConfig(K=16, dt=2.0**-5, T=0.25)
    spec = ErrorSpec(samples=12)
    a, _ = coupled_errors(cfg, [2.0**-5], 2.0**-8, spec, seed=2, threads=1, batch_size=4)
    b, _ = coupled_errors(cfg, [2.0**-5], 2.0**-8, spec, seed=2, threads=3, batch_size=5)
    np.testing.assert_array_equal(a[0], b[0])


def test_stderr_scales_like_inverse_root_samples():
    cfg = SchemeConfig(K=16, dt=2.0**-5, T=0.25)
    se = [strong_error(cfg, 2.0**-8, ErrorSpec(time="endpoint", samples=M), seed=7)[1]
          for M in (100, 400)]
    assert se[0] / se[1] == pytest.approx(2, rel=0.3)


# -- probes ---------------------------------------------------------------------------------

def test_parse_functional():
    assert parse_functional("sup L4^4") == ("sup", "L4", 4.0)
    assert parse_functional(" int H2 ^ 2") == ("int", "H2", 2.0)
    with pytest.raises(ConfigurationError):
        parse_functional("max L4^4")
    with pytest.raises(DomainError):
        parse_functional("sup L3^3")


def test_probes_on_zero_solution():
    cfg = SchemeConfig(K=16, dt=2.0**-6, T=0.25, noise=NO_NOISE, x0="zero")
    for f in ("sup L4^4", "sup H1^2", "int H2^2"):
        r = moment_probe(cfg, f, 5)
        assert r.estimate == 0 and r.stderr == 0
    for target in ("XN", "ZN"):
        r = exp_integrability_probe(cfg, 1.0, 5, target=target)
        assert r.estimate == 1.0 and r.tail_count == 0


def test_int_functional_of_deterministic_path():
    # int_0^T ||X_n||_{L2}^2 on a single decaying mode vs the ODE path
    cfg = SchemeConfig(K=1, dt=2.0**-8, T=0.25, noise=NO_NOISE, x0="sine k=1 amp=0.5")
    rec = run_trajectory(cfg)
    l2 = rec.norms["L2"] ** 2
    expected = cfg.dt * (l2.sum() - 0.5 * (l2[0] + l2[-1]))
    assert moment_probe(cfg, "int L2^2", 3).estimate == pytest.approx(expected, rel=1e-12)
    assert moment_probe(cfg, "sup L2^2", 3).estimate == pytest.approx(0.25, rel=1e-12)


def test_exp_probe_small_c():
    cfg = SchemeConfig(K=32, dt=2.0**-6, T=0.25, noise=QSpec.diagonal(2))
    assert exp_integrability_probe(cfg, 0.0, 10).estimate == 1.0
    r = exp_integrability_probe(cfg, 1e-8, 10)
    assert r.estimate == pytest.approx(1.0, abs=1e-7)


def test_exp_probe_deterministic_value():
    # one sample, no noise: exp(c * dt * sum_n ||X_n||_sup^2) over n < N
    cfg = SchemeConfig(K=8, dt=2.0**-5, T=0.25, noise=NO_NOISE, x0="sine k=1 amp=1")
    rec = run_trajectory(cfg)
    expected = math.exp(0.7 * cfg.dt * np.sum(rec.norms["sup"][:-1] ** 2))
    assert exp_integrability_probe(cfg, 0.7, 1).estimate == pytest.approx(expected, rel=1e-12)


def test_exp_probe_overflow_is_reported():
    cfg = SchemeConfig(K=16, dt=2.0**-5, T=0.25, noise=NO_NOISE, x0="sine k=1 amp=1")
    r = exp_integrability_probe(cfg, 1e5, 3, target="ZN")
    assert r.tail_count == 3 and r.estimate == math.inf
    assert math.isfinite(r.log_estimate)


def test_exp_probe_validation():
    cfg = SchemeConfig(K=8, dt=2.0**-5, T=0.25)
    with pytest.raises(ConfigurationError):
        exp_integrability_probe(cfg, 1.0, 2, target="YN")
    with pytest.raises(ConfigurationError):
        exp_integrability_probe(cfg, -1.0, 2)


def test_white_noise_h1_grows_with_resolution():
    # E||X_N||_{H1}^2 ~ sum_k q_k (1 - e^{-2 lam_k T}) / 2 grows linearly in K for white noise
    vals = []
    for K in (64, 128, 256):
        cfg = SchemeConfig(K=K, dt=2.0**-7, T=0.25, x0="zero")
        vals.append(moment_probe(cfg, "sup H1^2", 20, seed=5).estimate)
    assert vals[1] / vals[0] == pytest.approx(2, rel=0.25)
    assert vals[2] / vals[1] == pytest.approx(2, rel=0.25)


def test_l4_moment_stable_under_halving():
    vals = []
    for dt in (1e-3, 5e-4):
        cfg = SchemeConfig(K=256, dt=dt, T=1.0, x0="bump a=1 w=0.3")
        vals.append(moment_probe(cfg, "sup L4^4", 100, seed=4).estimate)
    assert 0.5 <= vals[1] / vals[0] <= 2
