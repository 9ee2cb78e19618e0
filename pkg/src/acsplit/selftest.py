"""Built-in invariant checks, runnable from the command line.

Each check returns ``(passed, detail)``.  Statistical checks use fixed seeds
so their outcome is reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from . import flow
from .integrators import Stepper
from .noise import QSpec, RngStream, convolution_increment, increment_variance, make_tape
from .spectral import LaplacianSpectrum

DEFAULT_CONSTANTS = {
    "one_sided": flow.ONE_SIDED_CONSTANT,
    "drift_gap": flow.DRIFT_GAP_CONSTANT,
    "local_lipschitz": flow.LOCAL_LIPSCHITZ_CONSTANT,
}
SEED = 20240521


def _pair_samples(n, seed=SEED):
    rng = np.random.default_rng(seed)
    z1 = rng.uniform(-5, 5, n)
    z2 = rng.uniform(-5, 5, n)
    dt = 0.5 * (1.0 - rng.random(n))  # (0, 0.5]
    return z1, z2, dt


def check_round_trip(consts):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for K in (8, 64, 4096):
        sp = LaplacianSpectrum(K)
        c = rng.standard_normal(K)
        worst = max(worst, np.max(np.abs(sp.to_spectral(sp.to_grid(c)) - c)) / np.max(np.abs(c)))
    return worst <= 1e-12, f"max relative round-trip error {worst:.2e}"


def check_flow_semigroup(consts):
    rng = np.random.default_rng(SEED)
    z = rng.uniform(-5, 5, 20000)
    s, t = rng.uniform(0, 0.5, (2, z.size))
    err = np.max(np.abs(flow.phi(flow.phi(z, s), t) - flow.phi(z, s + t)) / (1 + np.abs(z)))
    return err <= 1e-11, f"max scaled defect {err:.2e}"


def check_phi_lipschitz(consts, n=100_000):
    z1, z2, dt = _pair_samples(n)
    lhs = np.abs(flow.phi(z1, dt) - flow.phi(z2, dt))
    rhs = np.exp(dt) * np.abs(z1 - z2)
    bad = int(np.count_nonzero(lhs > rhs * (1 + 1e-12)))
    return bad == 0, f"{bad} violations of |phi(a)-phi(b)| <= e^dt |a-b|"


def check_psi_one_sided(consts, n=100_000):
    z1, z2, dt = _pair_samples(n)
    d = z1 - z2
    bad = 0
    for q in (2, 4):
        lhs = (flow.psi(z1, dt) - flow.psi(z2, dt)) * d ** (q - 1)
        bad += int(np.count_nonzero(lhs > consts["one_sided"] * np.abs(d) ** q))
    return bad == 0, f"{bad} violations with C1={consts['one_sided']}"


def check_psi_drift_gap(consts, n=100_000):
    z1, _, dt = _pair_samples(n)
    lhs = np.abs(flow.psi(z1, dt) - flow.drift(z1))
    bad = int(np.count_nonzero(lhs > consts["drift_gap"] * dt * (1 + np.abs(z1) ** 5)))
    return bad == 0, f"{bad} violations with C2={consts['drift_gap']}"


def check_psi_local_lipschitz(consts, n=100_000):
    z1, z2, dt = _pair_samples(n)
    lhs = np.abs(flow.psi(z1, dt) - flow.psi(z2, dt))
    rhs = consts["local_lipschitz"] * np.abs(z1 - z2) * (1 + z1**2 + z2**2)
    bad = int(np.count_nonzero(lhs > rhs))
    return bad == 0, f"{bad} violations with C3={consts['local_lipschitz']}"


def check_ou_increment_variance(consts, n=100_000):
    lam = np.array([np.pi**2])
    v = float(increment_variance(QSpec.white(), lam, 0.01)[0])
    g = RngStream(SEED, 0, "selftest").generator().standard_normal(n) * math.sqrt(v)
    se = v * math.sqrt(2.0 / (n - 1))
    dev = abs(g.var(ddof=1) - v) / se
    return dev <= 3, f"sample variance {dev:.2f} standard errors from {v:.6g}"


def check_ou_stationary_variance(consts, n=100_000):
    lam, dt = np.pi**2, 0.01
    v = float(increment_variance(QSpec.white(), np.array([lam]), dt)[0])
    gen = RngStream(SEED, 1, "selftest").generator()
    w = np.zeros(n)
    decay = math.exp(-lam * dt)
    for _ in range(200):  # t = 2
        w = decay * w + math.sqrt(v) * gen.standard_normal(n)
    target = 1.0 / (2.0 * lam)
    se = target * math.sqrt(2.0 / (n - 1))
    dev = abs(w.var(ddof=1) - target) / se
    return dev <= 3, f"variance at t=2 is {dev:.2f} standard errors from {target:.6g}"


def check_step_equivalence(consts):
    rng = np.random.default_rng(SEED)
    sp = LaplacianSpectrum(64)
    worst = 0.0
    for dt in (1e-3, 0.05, 0.3):
        x = rng.standard_normal((50, 64)) / np.arange(1, 65)
        inc = 0.01 * rng.standard_normal((50, 64))
        a = Stepper(sp, dt, "splitting")(x, inc)
        b = Stepper(sp, dt, "aux")(x, inc)
        scale = 1 + np.linalg.norm(x, axis=-1)
        worst = max(worst, float(np.max(np.linalg.norm(a - b, axis=-1) / scale)))
    return worst <= 1e-11, f"max scaled difference {worst:.2e}"


def check_noise_coupling(consts):
    K, m, n_coarse, dt_f = 16, 4, 32, 0.01
    tape = make_tape(QSpec.white(), K, m * n_coarse, dt_f, RngStream(SEED, 0))
    sp = LaplacianSpectrum(K)
    fine = np.zeros(K)
    decay_f = sp.semigroup_factors(dt_f)
    decay_c = sp.semigroup_factors(m * dt_f)
    coarse = np.zeros(K)
    worst = 0.0
    for n in range(n_coarse):
        for j in range(m):
            fine = decay_f * fine + convolution_increment(tape, n * m + j, 1)
        coarse = decay_c * coarse + convolution_increment(tape, n, m)
        worst = max(worst, float(np.max(np.abs(fine - coarse))))
    return worst <= 1e-12, f"max coarse/fine mismatch {worst:.2e}"


CHECKS = {
    "transform_round_trip": check_round_trip,
    "flow_semigroup": check_flow_semigroup,
    "phi_lipschitz": check_phi_lipschitz,
    "psi_one_sided": check_psi_one_sided,
    "psi_drift_gap": check_psi_drift_gap,
    "psi_local_lipschitz": check_psi_local_lipschitz,
    "ou_increment_variance": check_ou_increment_variance,
    "ou_stationary_variance": check_ou_stationary_variance,
    "step_equivalence": check_step_equivalence,
    "noise_coupling": check_noise_coupling,
}


def run_selftest(constants=None):
    """Run every check; ``constants`` overrides entries of :data:`DEFAULT_CONSTANTS`."""
    consts = dict(DEFAULT_CONSTANTS)
    consts.update(constants or {})
    results = []
    for name, fn in CHECKS.items():
        ok, detail = fn(consts)
        results.append((name, bool(ok), detail))
    return results
