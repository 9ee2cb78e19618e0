"""Dirichlet Laplacian eigenbasis on (0, 1).

Fields are plain numpy arrays whose last axis has length ``K``.  A spectral
field holds the coefficients of ``e_k(x) = sqrt(2) sin(k pi x)``, k = 1..K; a
grid field holds nodal values at the interior nodes ``x_j = (j + 1)/(K + 1)``.
Leading axes are treated as a batch (e.g. Monte Carlo samples).

The two representations are linked by a scaled DST-I, which is an exact
bijection on the K-mode space.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft

from .errors import ConfigurationError, DomainError

_NORM_RE = re.compile(r"^(?:(L)(\d+)|(H)(-?\d+(?:\.\d*)?)|(sup))$", re.IGNORECASE)


def parse_norm_kind(kind):
    """Split a norm name into ``(family, order)``.

    Accepted spellings: ``"L2"``, ``"L4"`` (any even ``q >= 2``), ``"sup"``,
    ``"H1"``, ``"H2"``, ``"H0.5"`` (Sobolev order ``s``, any real).
    """
    if isinstance(kind, tuple):
        family, order = kind
    else:
        m = _NORM_RE.match(str(kind).strip())
        if m is None:
            raise DomainError(f"unknown norm kind {kind!r}")
        if m.group(1):
            family, order = "L", int(m.group(2))
        elif m.group(3):
            family, order = "H", float(m.group(4))
        else:
            family, order = "sup", None
    if family == "L":
        if order < 2 or order % 2:
            raise DomainError(f"L^q norms need an even q >= 2, got q={order}")
        order = int(order)
    elif family not in ("H", "sup"):
        raise DomainError(f"unknown norm family {family!r}")
    return family, order


def _largest_prime_factor(n):
    p, best = 2, 1
    while p * p <= n:
        while n % p == 0:
            n, best = n // p, p
        p += 1
    return max(best, n)


@lru_cache(maxsize=8)
def _sine_matrix(K):
    j = np.arange(1, K + 1)
    m = np.sqrt(2.0) * np.sin(np.pi * np.outer(j, j) / (K + 1))
    m.setflags(write=False)
    return m


def _dst1(a, K):
    """Unnormalised DST-I times 1/sqrt(2) along the last axis.

    pocketfft falls back to Bluestein when K + 1 has a large prime factor
    (K = 256 is about ten times slower than K = 512); a dense product is
    cheaper there for moderate K.
    """
    if 64 <= K <= 2048 and _largest_prime_factor(K + 1) > 100:
        return a @ _sine_matrix(K)
    return scipy.fft.dst(a, type=1, axis=-1) / math.sqrt(2.0)


@dataclass(frozen=True)
class LaplacianSpectrum:
    """First ``K`` Dirichlet eigenvalues ``lambda_k = (k pi)^2`` on (0, 1)."""

    K: int
    lam: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ConfigurationError(f"K must be a positive integer, got {self.K!r}", key="K")
        lam = (np.pi * np.arange(1, self.K + 1, dtype=float)) ** 2
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def nodes(self):
        return np.arange(1, self.K + 1) / (self.K + 1)

    def _check(self, a):
        a = np.asarray(a, dtype=float)
        if a.shape[-1:] != (self.K,):
            raise ConfigurationError(
                f"field has trailing length {a.shape[-1] if a.ndim else 0}, spectrum has K={self.K}",
                key="K",
            )
        return a

    # -- transforms ---------------------------------------------------------

    def to_grid(self, coeffs):
        """Nodal values ``sum_k c_k sqrt(2) sin(k pi x_j)``."""
        c = self._check(coeffs)
        return _dst1(c, self.K)

    def to_spectral(self, values):
        """Inverse of :meth:`to_grid` (trapezoid L2 projection on the grid)."""
        g = self._check(values)
        return _dst1(g, self.K) / (self.K + 1)

    # -- diagonal operators -------------------------------------------------

    def semigroup_factors(self, t):
        if t < 0:
            raise DomainError(f"semigroup time must be nonnegative, got {t}")
        return np.exp(-self.lam * t)

    def apply_semigroup(self, coeffs, t):
        """``S(t) c = exp(-lambda_k t) c_k``."""
        return self.semigroup_factors(t) * self._check(coeffs)

    def apply_fractional_power(self, coeffs, r):
        """``(-A)^{r/2} c``; negative ``r`` smooths."""
        c = self._check(coeffs)
        if r == 0:
            return c.copy()
        return self.lam ** (0.5 * r) * c

    # -- norms ----------------------------------------------------------------

    def norm(self, coeffs, kind="L2"):
        """Norm of a spectral field; reduces over the last axis."""
        family, order = parse_norm_kind(kind)
        c = self._check(coeffs)
        if family == "H":
            return np.sqrt(np.sum(self.lam**order * c * c, axis=-1))
        if family == "L" and order == 2:
            return np.sqrt(np.sum(c * c, axis=-1))
        return self.grid_norm(self.to_grid(c), (family, order))

    def grid_norm(self, values, kind="L2"):
        """Norm of a grid field.

        L^q norms use the composite trapezoid rule with zero boundary values,
        i.e. weight ``1/(K+1)`` on every interior node.  Sobolev norms go
        through the spectral representation.
        """
        family, order = parse_norm_kind(kind)
        g = self._check(values)
        if family == "sup":
            return np.max(np.abs(g), axis=-1)
        if family == "H":
            return self.norm(self.to_spectral(g), (family, order))
        return (np.sum(g**order, axis=-1) / (self.K + 1)) ** (1.0 / order)
