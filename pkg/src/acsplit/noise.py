"""Diagonal Q-Wiener noise and exact sampling of the stochastic convolution.

Mode k of ``omega(t) = int_0^t S(t - s) dW^Q(s)`` is an Ornstein-Uhlenbeck
process, so its increments over a step are Gaussian with variance
``q_k (1 - exp(-2 lambda_k dt)) / (2 lambda_k)``.  A :class:`NoiseTape`
stores those increments on a fine grid; coarser grids are served by
aggregating fine entries with semigroup weights, which is pathwise exact.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError, ResourceError
from .spectral import LaplacianSpectrum

MAX_TAPE_ENTRIES = 50_000_000
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class QSpec:
    """Covariance ``Q e_k = sqrt(q_k) e_k``.

    ``kind="white"`` is ``Q = I``.  ``kind="diagonal"`` uses
    ``q_k = scale * lambda_k ** (-gamma)``.
    """

    kind: str = "white"
    gamma: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("white", "diagonal"):
            raise ConfigurationError(f"unknown noise kind {self.kind!r}", key="noise")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be nonnegative", key="gamma")
        if self.scale < 0:
            raise ConfigurationError("scale must be nonnegative", key="scale")

    @classmethod
    def white(cls):
        return cls("white")

    @classmethod
    def diagonal(cls, gamma, scale=1.0):
        return cls("diagonal", float(gamma), float(scale))

    def values(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.kind == "white":
            return np.ones_like(lam)
        return self.scale * lam ** (-self.gamma)

    def __str__(self):
        if self.kind == "white":
            return "white"
        return f"diagonal(gamma={self.gamma:g}, scale={self.scale:g})"


def q_value(spec, k):
    """``q_k`` for the 1-based mode index ``k``."""
    if k < 1:
        raise DomainError(f"mode index starts at 1, got {k}")
    return float(spec.values((np.pi * k) ** 2))


def hs_norm_sq(spec, s, K):
    """Truncated ``||(-A)^{s/2} Q||_{HS}^2 = sum_{k <= K} q_k lambda_k^s``."""
    lam = LaplacianSpectrum(K).lam
    return float(np.sum(spec.values(lam) * lam**s))


def stationary_variance(spec, k):
    """Long-time variance ``q_k / (2 lambda_k)`` of mode ``k`` of omega."""
    lam = (np.pi * k) ** 2
    return q_value(spec, k) / (2.0 * lam)


def increment_variance(spec, lam, dt):
    """Per-mode variance of the convolution increment over one step."""
    lam = np.asarray(lam, dtype=float)
    q = spec.values(lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = q * -np.expm1(-2.0 * lam * dt) / (2.0 * lam)
    # lambda -> 0 limit is plain Brownian motion
    return np.where(lam > 0, v, q * dt)


@dataclass(frozen=True)
class RngStream:
    """Counter-based stream keyed by ``(seed, sample, purpose)``.

    Backed by Philox; distinct keys give independent streams and no state is
    shared between samples, so samples can be generated in any order.
    """

    seed: int
    sample: int = 0
    purpose: str = "noise"

    def key(self):
        tag = zlib.crc32(self.purpose.encode())
        return np.array([self.seed & _MASK64, ((self.sample & 0xFFFFFFFF) << 32) | tag],
                        dtype=np.uint64)

    def generator(self):
        return np.random.Generator(np.random.Philox(key=self.key()))


@dataclass(frozen=True)
class NoiseTape:
    """Fine-grid convolution increments of one sample path.

    ``increments[j, k]`` is the contribution of ``[j dt_fine, (j+1) dt_fine]``
    to mode ``k`` (time-major).  ``lam`` holds the eigenvalues used for the
    aggregation weights.
    """

    increments: np.ndarray
    dt_fine: float
    lam: np.ndarray
    seed: int = 0
    sample: int = 0

    @property
    def K(self):
        return self.increments.shape[1]

    @property
    def n_steps(self):
        return self.increments.shape[0]

    @property
    def g(self):
        """Mode-major view ``g[k][j]``."""
        return self.increments.T

    def save(self, path):
        """Write as CSV: one row per mode, header with the tape metadata."""
        path = Path(path)
        header = (f"K={self.K} N_fine={self.n_steps} dt_fine={self.dt_fine!r} "
                  f"seed={self.seed} sample={self.sample}")
        np.savetxt(path, self.g, delimiter=",", fmt="%.17g", header=header)

    @classmethod
    def load(cls, path):
        path = Path(path)
        with path.open() as fh:
            header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        K, n = int(meta["K"]), int(meta["N_fine"])
        g = np.loadtxt(path, delimiter=",", ndmin=2).reshape(K, n)
        return cls(np.ascontiguousarray(g.T), float(meta["dt_fine"]),
                   LaplacianSpectrum(K).lam, int(meta["seed"]), int(meta["sample"]))


def draw_increments(std, gen, n):
    """``n`` consecutive time steps of increments from ``gen`` (time-major)."""
    return std * gen.standard_normal((n, std.shape[-1]))


def make_tape(spec, K, n_fine, dt_fine, rng, max_entries=MAX_TAPE_ENTRIES):
    """Pre-generate all fine increments of one sample path."""
    if n_fine < 0 or dt_fine <= 0:
        raise ConfigurationError("tape needs n_fine >= 0 and dt_fine > 0", key="dt_fine")
    if K * n_fine > max_entries:
        raise ResourceError(f"tape of {K} x {n_fine} entries exceeds cap {max_entries}")
    spectrum = LaplacianSpectrum(K)
    std = np.sqrt(increment_variance(spec, spectrum.lam, dt_fine))
    g = draw_increments(std, rng.generator(), n_fine)
    return NoiseTape(g, float(dt_fine), spectrum.lam, rng.seed, rng.sample)


def aggregation_weights(lam, m, dt_fine):
    """Weights ``exp(-lambda (m - 1 - j) dt_fine)``, shape ``(m, K)``."""
    lags = np.arange(m - 1, -1, -1, dtype=float)[:, None]
    return np.exp(-lags * dt_fine * np.asarray(lam)[None, :])


def convolution_increment(tape, n, m=1):
    """Coarse increment over ``[n m dt_fine, (n + 1) m dt_fine]``.

    Sum of the ``m`` fine increments of that window, each propagated to the
    window end by the semigroup.
    """
    if int(m) != m or m < 1:
        raise ConfigurationError(f"coarsening factor must be a positive integer, got {m}", key="m")
    m = int(m)
    lo, hi = n * m, (n + 1) * m
    if n < 0 or hi > tape.n_steps:
        raise ConfigurationError(
            f"coarse step {n} with factor {m} needs fine steps [{lo}, {hi}) but tape has {tape.n_steps}",
            key="dt",
        )
    window = tape.increments[lo:hi]
    if m == 1:
        return window[0].copy()
    return np.sum(aggregation_weights(tape.lam, m, tape.dt_fine) * window, axis=0)


def coarsening_factor(dt, dt_fine, what="dt"):
    """Integer ratio ``dt / dt_fine``; raises when the grids do not nest."""
    ratio = dt / dt_fine
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-9 * max(1.0, ratio):
        raise ConfigurationError(f"{what}={dt!r} is not a multiple of the fine step {dt_fine!r}", key=what)
    return m
