"""Time stepping for the spectral Galerkin stochastic Allen-Cahn system.

Three one-step maps share the same plumbing: state advanced in spectral
space, reaction term applied pointwise on the grid, exact convolution
increment added at the end of the step.

* ``splitting``: ``X <- S(dt) phi_dt(X) + increment``
* ``aux``: ``X <- S(dt) (X + dt psi_dt(X)) + increment`` (same map, written as
  exponential Euler for the modified drift)
* ``plain``: ``X <- S(dt) (X + dt F(X)) + increment`` (baseline; can blow up)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import flow
from .errors import ConfigurationError, DomainError
from .noise import (QSpec, RngStream, aggregation_weights, coarsening_factor,
                    convolution_increment, draw_increments, increment_variance)
from .spectral import LaplacianSpectrum

SCHEMES = ("splitting", "aux", "plain")
TRAJECTORY_NORMS = ("L2", "L4", "sup", "H1", "H2")


# -- initial data -------------------------------------------------------------

def parse_profile(text):
    """``"bump a=1 w=0.3"`` -> ``("bump", {"a": 1.0, "w": 0.3})``."""
    parts = str(text).split()
    if not parts:
        raise ConfigurationError("empty initial profile", key="x0")
    params = {}
    for item in parts[1:]:
        if "=" not in item:
            raise ConfigurationError(f"bad profile parameter {item!r}", key="x0")
        k, v = item.split("=", 1)
        params[k] = float(v)
    return parts[0], params


def initial_profile(spectrum, profile="zero", **params):
    """Spectral coefficients of a named initial condition.

    * ``zero``
    * ``sine k=1 amp=1``: ``amp * sqrt(2) sin(k pi x)``
    * ``bump a=1 w=0.3 c=0.5``: smooth compactly supported bump
      ``a exp(1 - 1/(1 - ((x - c)/w)^2))``, in H^2 and vanishing at 0 and 1
      when ``[c - w, c + w]`` lies inside the domain
    * ``constant c=1``: constant value on the interior nodes, projected onto
      the K modes (the boundary mismatch shows up as Gibbs ringing)
    """
    if isinstance(profile, str) and not params and " " in profile.strip():
        profile, params = parse_profile(profile)
    x = spectrum.nodes
    if profile == "zero":
        return np.zeros(spectrum.K)
    if profile == "sine":
        k = int(params.get("k", 1))
        if not 1 <= k <= spectrum.K:
            raise ConfigurationError(f"sine mode {k} outside 1..{spectrum.K}", key="x0")
        c = np.zeros(spectrum.K)
        c[k - 1] = params.get("amp", 1.0)
        return c
    if profile == "bump":
        a, w, c0 = params.get("a", 1.0), params.get("w", 0.3), params.get("c", 0.5)
        u = (x - c0) / w
        inside = np.abs(u) < 1
        g = np.zeros_like(x)
        g[inside] = a * np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
        return spectrum.to_spectral(g)
    if profile == "constant":
        return spectrum.to_spectral(np.full(spectrum.K, params.get("c", 1.0)))
    raise ConfigurationError(f"unknown initial profile {profile!r}", key="x0")


# -- configuration --------------------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "splitting"
    K: int = 512
    dt: float = 2.0**-8
    T: float = 0.5
    noise: QSpec = field(default_factory=QSpec.white)
    x0: str = "bump a=1 w=0.3"
    dt0: float = 0.5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}", key="scheme")
        if self.T < 0:
            raise ConfigurationError("T must be nonnegative", key="T")
        if not 0 < self.dt <= self.dt0:
            raise ConfigurationError(f"dt must lie in (0, dt0={self.dt0}], got {self.dt}", key="dt")
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigurationError(f"T={self.T} is not an integer multiple of dt={self.dt}", key="dt")

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @property
    def spectrum(self):
        return LaplacianSpectrum(self.K)

    def initial_coeffs(self):
        return initial_profile(self.spectrum, self.x0)


# -- one-step maps ----------------------------------------------------------------

class Stepper:
    """One step of ``scheme`` with step ``dt`` on ``spectrum``; batched over leading axes."""

    def __init__(self, spectrum, dt, scheme="splitting"):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {scheme!r}", key="scheme")
        if dt < 0:
            raise DomainError(f"time step must be nonnegative, got {dt}")
        self.spectrum = spectrum
        self.dt = dt
        self.scheme = scheme
        self.decay = spectrum.semigroup_factors(dt)

    def __call__(self, x, increment=0.0):
        sp, dt = self.spectrum, self.dt
        with np.errstate(over="ignore", invalid="ignore"):
            g = sp.to_grid(x)
            if self.scheme == "splitting":
                y = sp.to_spectral(flow.phi(g, dt))
            elif self.scheme == "aux":
                y = x + dt * sp.to_spectral(flow.psi(g, dt))
            else:
                y = x + dt * sp.to_spectral(flow.drift(g))
            return self.decay * y + increment


def splitting_step(spectrum, x, dt, increment=0.0):
    return Stepper(spectrum, dt, "splitting")(x, increment)


def aux_exp_euler_step(spectrum, x, dt, increment=0.0):
    return Stepper(spectrum, dt, "aux")(x, increment)


def plain_exp_euler_step(spectrum, x, dt, increment=0.0):
    return Stepper(spectrum, dt, "plain")(x, increment)


def zn_eval(spectrum, x_prev, tau, dt):
    """Grid values of the right-continuous interpolant at ``t_{n-1} + tau``.

    Between grid points only the reaction flow acts, pointwise:
    ``Z(t_{n-1} + tau) = phi_tau(X_{n-1})``.
    """
    if not 0 <= tau < dt:
        raise DomainError(f"tau must lie in [0, dt={dt}), got {tau}")
    return flow.phi(spectrum.to_grid(x_prev), tau)


# -- single trajectories --------------------------------------------------------------

@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    norms: dict
    diverged_at: int | None = None

    @property
    def diverged(self):
        return self.diverged_at is not None

    def to_csv(self, path):
        cols = list(self.norms)
        data = np.column_stack([self.times] + [self.norms[c] for c in cols])
        np.savetxt(path, data, delimiter=",", fmt="%.17g",
                   header=",".join(["t"] + cols), comments="")


def _state_norms(spectrum, states, kinds):
    with np.errstate(over="ignore", invalid="ignore"):
        return {k: spectrum.norm(states, k) for k in kinds}


def run_trajectory(config, tape=None, record_every=1, norms=TRAJECTORY_NORMS):
    """Advance ``config`` over ``[0, T]`` driven by ``tape``.

    ``tape=None`` means no noise.  States are recorded every ``record_every``
    steps plus the final step.  The run stops at the first non-finite state
    and reports its step index in ``diverged_at``.
    """
    sp = config.spectrum
    step = Stepper(sp, config.dt, config.scheme)
    m = 1
    if tape is not None:
        if tape.K != config.K:
            raise ConfigurationError(f"tape has K={tape.K}, config has K={config.K}", key="K")
        m = coarsening_factor(config.dt, tape.dt_fine)
        if tape.n_steps < m * config.n_steps:
            raise ConfigurationError("tape shorter than the time horizon", key="T")
    x = config.initial_coeffs()
    times, states = [0.0], [x]
    diverged_at = None
    n_steps = config.n_steps
    for n in range(n_steps):
        inc = 0.0 if tape is None else convolution_increment(tape, n, m)
        x = step(x, inc)
        if not np.all(np.isfinite(x)):
            diverged_at = n + 1
            times.append((n + 1) * config.dt)
            states.append(x)
            break
        if (n + 1) % record_every == 0 or n + 1 == n_steps:
            times.append((n + 1) * config.dt)
            states.append(x)
    states = np.array(states)
    return TrajectoryRecord(np.array(times), states, _state_norms(sp, states, norms), diverged_at)


# -- coupled batched runs ----------------------------------------------------------------

def simulate_coupled(spectrum, noise, x0, T, dt_fine, factors, streams, observer,
                     scheme="splitting", chunk=256):
    """Run one solver per coarsening factor on a shared fine noise path.

    ``streams`` holds one :class:`RngStream` per sample (the batch).  Fine
    increments are drawn in chunks and folded into each level's accumulator
    with the recursion ``acc <- exp(-lambda dt_fine) acc + g``, which after
    ``m`` fine steps equals the aggregated coarse convolution increment.

    ``observer(level, n, state)`` is called with the batch state of each level
    at its grid points ``n = 0, 1, ...``.  Levels are visited in the order of
    ``factors`` within each fine step, so a level listed earlier with a
    dividing factor is already up to date when later levels report.
    """
    n_fine = T / dt_fine
    if abs(n_fine - round(n_fine)) > 1e-9 * max(1.0, n_fine):
        raise ConfigurationError(f"T={T} is not a multiple of the fine step {dt_fine}", key="dt_ref")
    n_fine = int(round(n_fine))
    for m in factors:
        if n_fine % m:
            raise ConfigurationError(f"coarsening factor {m} does not divide {n_fine} fine steps", key="dts")

    batch = len(streams)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (batch, spectrum.K))
    steppers = [Stepper(spectrum, m * dt_fine, scheme) for m in factors]
    states = [x0.copy() for _ in factors]
    accs = [np.zeros((batch, spectrum.K)) for _ in factors]
    fine_decay = spectrum.semigroup_factors(dt_fine)
    std = np.sqrt(increment_variance(noise, spectrum.lam, dt_fine))
    gens = [s.generator() for s in streams]
    noiseless = not np.any(std > 0)

    for i in range(len(factors)):
        observer(i, 0, states[i])
    for j0 in range(0, n_fine, chunk):
        c = min(chunk, n_fine - j0)
        if noiseless:
            block = np.zeros((c, batch, spectrum.K))
        else:
            block = np.stack([draw_increments(std, g, c) for g in gens], axis=1)
        for jj in range(c):
            j = j0 + jj + 1
            for i, m in enumerate(factors):
                if m == 1:
                    accs[i] = block[jj]
                else:
                    accs[i] = fine_decay * accs[i] + block[jj]
                if j % m == 0:
                    states[i] = steppers[i](states[i], accs[i])
                    accs[i] = np.zeros_like(accs[i])
                    observer(i, j // m, states[i])
    return states


def sample_streams(seed, start, stop, purpose="noise"):
    return [RngStream(seed, s, purpose) for s in range(start, stop)]


def exact_coarse_increments(tape, m):
    """All coarse increments of ``tape`` for factor ``m`` (explicit weighted sums)."""
    n = tape.n_steps // m
    w = aggregation_weights(tape.lam, m, tape.dt_fine)
    return np.einsum("jk,njk->nk", w, tape.increments[: n * m].reshape(n, m, tape.K))

