"""Monte Carlo strong errors, rate fits and moment probes.

Strong errors are measured against the same scheme run with a much finer
step on the identical noise path (coupled refinement), so the difference is
purely the time-discretisation error at fixed spatial resolution.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import ConfigurationError, ExperimentError, FitError
from .flow import phi
from .integrators import sample_streams, simulate_coupled
from .noise import coarsening_factor
from .spectral import parse_norm_kind

log = logging.getLogger(__name__)

TIME_AGGREGATIONS = ("endpoint", "sup", "sup_moment")
MAX_DIVERGENT_FRACTION = 0.01
EXP_OVERFLOW = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class ErrorSpec:
    """How a pathwise error is reduced to one number.

    ``time="endpoint"`` uses ``t = T``; ``"sup"`` takes the sup over the
    coarse grid points inside the expectation; ``"sup_moment"`` takes it
    outside (``sup_n E[...]``).  The Omega-moment is ``(E err^p)^{1/p}``.
    """

    norm: str = "L2"
    time: str = "sup"
    p: float = 2.0
    samples: int = 100

    def __post_init__(self):
        family, q = parse_norm_kind(self.norm)
        if self.time not in TIME_AGGREGATIONS:
            raise ConfigurationError(f"time aggregation must be one of {TIME_AGGREGATIONS}", key="time")
        if self.p < 2:
            raise ConfigurationError("moment p must be >= 2", key="p")
        if family == "L" and self.p < q:
            raise ConfigurationError(f"moment p={self.p} must be >= q={q}", key="p")
        if self.samples < 1:
            raise ConfigurationError("need at least one sample", key="samples")


def moment_estimate(values, p):
    """``(mean v^p)^{1/p}`` with a delta-method standard error."""
    v = np.asarray(values, dtype=float) ** p
    m = v.mean()
    if m == 0:
        return 0.0, 0.0
    se_m = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else math.inf
    return float(m ** (1.0 / p)), float(se_m * m ** (1.0 / p - 1.0) / p)


# -- rate fit -------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci: tuple


def fit_rate(dts, errors, weights=None, level=0.95):
    """Weighted least squares of ``log err`` on ``log dt``.

    Returns the slope (the empirical order), the intercept and a ``level``
    confidence interval for the slope from the Student t distribution.
    """
    x = np.log(np.asarray(dts, dtype=float))
    y = np.asarray(errors, dtype=float)
    if x.size != y.size:
        raise FitError("dts and errors differ in length")
    if x.size < 3:
        raise FitError(f"need at least 3 points, got {x.size}")
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise FitError("errors must be positive and finite")
    y = np.log(y)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise FitError("weights must be positive")
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx <= 1e-12 * np.sum(w):
        raise FitError("dts have no spread")
    ym = np.sum(w * y) / np.sum(w)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    dof = x.size - 2
    resid = y - (intercept + slope * x)
    s2 = np.sum(w * resid**2) / dof
    half = float(stats.t.ppf(0.5 + level / 2, dof) * math.sqrt(s2 / sxx))
    return RateFit(slope, intercept, (slope - half, slope + half))


@dataclass
class RateReport:
    dts: list
    errors: list
    stderr: list
    slope: float
    intercept: float
    ci: tuple
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["ci"] = list(self.ci)
        return d

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        d["ci"] = tuple(d["ci"])
        return cls(**d)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dt", "error", "stderr"])
            for row in zip(self.dts, self.errors, self.stderr):
                w.writerow([repr(v) for v in row])

    def to_long_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dt", "sample_stat", "value"])
            for dt, e, s in zip(self.dts, self.errors, self.stderr):
                w.writerow([repr(dt), "error", repr(e)])
                w.writerow([repr(dt), "stderr", repr(s)])


# -- batched driver ----------------------------------------------------------------------

def _batches(samples, batch_size):
    return [(s, min(s + batch_size, samples)) for s in range(0, samples, batch_size)]


def _run_batches(fn, samples, threads, batch_size):
    """Apply ``fn(start, stop)`` over sample batches; results in sample order."""
    spans = _batches(samples, batch_size)
    threads = threads or os.cpu_count() or 1
    if threads == 1 or len(spans) == 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), spans))


def _check_divergence(diverged, what):
    n_div = int(np.count_nonzero(diverged))
    if n_div > MAX_DIVERGENT_FRACTION * diverged.size:
        raise ExperimentError(f"{what}: {n_div} of {diverged.size} samples diverged")
    if n_div:
        log.warning("%s: excluding %d divergent samples", what, n_div)
    return n_div


def coupled_errors(config, dts, dt_ref, spec, seed=0, threads=1, batch_size=100):
    """Per-sample, per-grid-point errors of ``config`` at each step in ``dts``.

    Returns ``(errors, diverged)`` where ``errors[i]`` has shape
    ``(n_i + 1, samples)`` (grid points of ``dts[i]``, including t = 0) and
    ``diverged`` flags samples with a non-finite state at any level.
    """
    factors = [coarsening_factor(dt, dt_ref, "dts") for dt in dts]
    if any(m < 8 and m != 1 for m in factors):
        raise ConfigurationError("dt_ref must be at most dt/8 for every compared dt", key="dt_ref")
    sp = config.spectrum
    x0 = config.initial_coeffs()
    n_levels = [int(round(config.T / dt)) for dt in dts]

    def batch(start, stop):
        b = stop - start
        errs = [np.zeros((n + 1, b)) for n in n_levels]
        bad = np.zeros(b, dtype=bool)
        ref = {}

        def observe(level, n, state):
            finite = np.all(np.isfinite(state), axis=-1)
            bad[~finite] = True
            if level == 0:
                ref["x"] = state
                return
            with np.errstate(invalid="ignore", over="ignore"):
                errs[level - 1][n] = sp.norm(state - ref["x"], spec.norm)

        simulate_coupled(sp, config.noise, x0, config.T, dt_ref, [1] + factors,
                         sample_streams(seed, start, stop), observe, scheme=config.scheme)
        return errs, bad

    parts = _run_batches(batch, spec.samples, threads, batch_size)
    errors = [np.concatenate([p[0][i] for p in parts], axis=1) for i in range(len(dts))]
    diverged = np.concatenate([p[1] for p in parts])
    return errors, diverged


def _reduce_errors(err, keep, spec):
    err = err[:, keep]
    if spec.time == "endpoint":
        return moment_estimate(err[-1], spec.p)
    if spec.time == "sup":
        return moment_estimate(err.max(axis=0), spec.p)
    per_time = [moment_estimate(e, spec.p) for e in err]
    return max(per_time, key=lambda t: t[0])


def strong_error(config, dt_ref, spec, seed=0, threads=1):
    """``(estimate, stderr)`` of the strong error of ``config`` at its own ``dt``."""
    if math.isclose(config.dt, dt_ref, rel_tol=1e-12):
        return 0.0, 0.0
    errors, diverged = coupled_errors(config, [config.dt], dt_ref, spec, seed, threads)
    _check_divergence(diverged, "strong_error")
    return _reduce_errors(errors[0], ~diverged, spec)


def rate_experiment(config, dts, dt_ref, spec, seed=0, threads=1):
    """Strong errors for every step in ``dts`` on shared noise paths, plus the fitted rate."""
    dts = sorted((float(d) for d in dts), reverse=True)
    errors, diverged = coupled_errors(config, dts, dt_ref, spec, seed, threads)
    n_div = _check_divergence(diverged, "rate_experiment")
    est = [_reduce_errors(e, ~diverged, spec) for e in errors]
    values = [e for e, _ in est]
    ses = [s for _, s in est]
    rel = np.array([s / e if e > 0 else math.inf for e, s in est])
    weights = 1.0 / np.maximum(rel, 1e-3) ** 2 if np.all(np.isfinite(rel)) else None
    fit = fit_rate(dts, values, weights)
    meta = {
        "noise": str(config.noise), "K": config.K, "T": config.T, "x0": config.x0,
        "scheme": config.scheme, "samples": spec.samples, "seed": seed, "dt_ref": dt_ref,
        "norm": spec.norm, "time": spec.time, "p": spec.p, "n_divergent": n_div,
    }
    return RateReport(dts, values, ses, fit.slope, fit.intercept, fit.ci, meta)


# -- probes ---------------------------------------------------------------------------------

_FUNCTIONAL_RE = re.compile(r"^\s*(sup|int)\s+(\S+?)\s*\^\s*([0-9.]+)\s*$")


def parse_functional(text):
    """``"sup L4^4"`` -> ``("sup", "L4", 4.0)``; ``"int H2^2"`` integrates in time."""
    m = _FUNCTIONAL_RE.match(text)
    if m is None:
        raise ConfigurationError(f"bad functional {text!r}; expected e.g. 'sup H1^2'", key="functional")
    parse_norm_kind(m.group(2))
    return m.group(1), m.group(2), float(m.group(3))


@dataclass
class ProbeResult:
    """Monte Carlo mean of a path functional.

    ``estimate`` is ``E[functional]``; for ``sup`` functionals
    ``sup_of_mean`` is ``sup_n E[||X_n||^p]`` and ``mean_curve`` the per-time
    means it is taken over.
    """

    functional: str
    estimate: float
    stderr: float
    sup_of_mean: float | None
    mean_curve: list
    n_divergent: int

    def to_dict(self):
        return asdict(self)


def _path_values(config, samples, seed, threads, batch_size, reduce):
    """Run ``config`` once per sample; ``reduce(start, stop) -> (observer, collect)``."""
    sp = config.spectrum
    x0 = config.initial_coeffs()

    def batch(start, stop):
        observe, collect = reduce(stop - start)
        simulate_coupled(sp, config.noise, x0, config.T, config.dt, [1],
                         sample_streams(seed, start, stop), observe, scheme=config.scheme)
        return collect()

    return _run_batches(batch, samples, threads, batch_size)


def moment_probe(config, functional, samples, seed=0, threads=1, batch_size=100):
    """Monte Carlo estimate of a moment functional of the numerical path."""
    agg, kind, p = parse_functional(functional)
    sp = config.spectrum
    n = config.n_steps

    def reduce(b):
        vals = np.zeros((n + 1, b))

        def observe(level, i, state):
            with np.errstate(invalid="ignore", over="ignore"):
                vals[i] = sp.norm(state, kind) ** p

        return observe, lambda: vals

    vals = np.concatenate(_path_values(config, samples, seed, threads, batch_size, reduce), axis=1)
    bad = ~np.all(np.isfinite(vals), axis=0)
    n_div = _check_divergence(bad, "moment_probe")
    vals = vals[:, ~bad]
    if agg == "sup":
        per_sample = vals.max(axis=0)
    else:
        per_sample = config.dt * (vals[1:-1].sum(axis=0) + 0.5 * (vals[0] + vals[-1])) if n else 0 * vals[0]
    curve = vals.mean(axis=1)
    se = per_sample.std(ddof=1) / math.sqrt(per_sample.size) if per_sample.size > 1 else math.inf
    return ProbeResult(functional, float(per_sample.mean()), float(se),
                       float(curve.max()) if agg == "sup" else None, curve.tolist(), n_div)


@dataclass
class ExpProbeResult:
    """Estimate of ``E[exp(c int_0^T ||path||_sup^2 dt)]``.

    The mean is formed in log space; ``tail_count`` counts samples whose
    exponent alone overflows a double, in which case ``estimate`` is inf.
    """

    target: str
    c: float
    estimate: float
    stderr: float
    log_estimate: float
    max_exponent: float
    tail_count: int
    n_divergent: int

    def to_dict(self):
        return asdict(self)


def exp_integrability_probe(config, c, samples, seed=0, target="XN", substeps=4,
                            threads=1, batch_size=100):
    """Exponential moment of ``c int ||.||_sup^2`` along the numerical path.

    ``target="XN"`` integrates the grid values with the left-endpoint rule;
    ``target="ZN"`` integrates the interpolant ``phi_tau(X_n)`` on
    ``substeps`` left-endpoint nodes per step.
    """
    if target not in ("XN", "ZN"):
        raise ConfigurationError("target must be 'XN' or 'ZN'", key="target")
    if c < 0:
        raise ConfigurationError("c must be nonnegative", key="c")
    sp = config.spectrum
    n, dt = config.n_steps, config.dt
    taus = [dt * i / substeps for i in range(substeps)] if target == "ZN" else [0.0]

    def reduce(b):
        acc = np.zeros(b)

        def observe(level, i, state):
            if i == n:
                return
            with np.errstate(invalid="ignore", over="ignore"):
                g = sp.to_grid(state)
                for tau in taus:
                    acc[...] += (dt / len(taus)) * np.max(np.abs(phi(g, tau)), axis=-1) ** 2

        return observe, lambda: acc

    integral = np.concatenate(_path_values(config, samples, seed, threads, batch_size, reduce))
    bad = ~np.isfinite(integral)
    n_div = _check_divergence(bad, "exp_integrability_probe")
    a = c * integral[~bad]
    tail = int(np.count_nonzero(a > EXP_OVERFLOW))
    log_est = float(logsumexp(a) - math.log(a.size)) if a.size else math.nan
    est = math.exp(log_est) if log_est < EXP_OVERFLOW else math.inf
    if tail or a.size < 2:
        se = math.inf
    else:
        se = float(np.exp(a).std(ddof=1) / math.sqrt(a.size))
    return ExpProbeResult(target, float(c), est, se, log_est, float(a.max()) if a.size else math.nan,
                          tail, n_div)


__all__ = [
    "ErrorSpec", "RateFit", "RateReport", "ProbeResult", "ExpProbeResult",
    "fit_rate", "moment_estimate", "coupled_errors", "strong_error", "rate_experiment",
    "parse_functional", "moment_probe", "exp_integrability_probe",
]
