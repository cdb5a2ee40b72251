"""Independent brute-force verifiers backing the test suite.

Every oracle here is a fresh code path sharing no helper with its primary
counterpart (only the geometry distance primitives are reused): full tuple
loops for U-statistics, an independently coded acceptance sweep for
birth-growth, closed-form Poisson identities on the torus, and a
from-scratch normal CDF.  Clarity over speed; size caps keep the oracles out
of production loops.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from poissonclt import geometry
from poissonclt.errors import InputError
from poissonclt.geometry import Space

_USTAT_CAP = 300
_BG_CAP = 500


@dataclass(frozen=True)
class OracleReport:
    instance: str
    primary: float
    oracle: float
    tolerance: float

    @property
    def discrepancy(self) -> float:
        return abs(self.primary - self.oracle)

    @property
    def agree(self) -> bool:
        return self.discrepancy <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "instance": self.instance,
            "primary": self.primary,
            "oracle": self.oracle,
            "discrepancy": self.discrepancy,
            "tolerance": self.tolerance,
            "agree": self.agree,
        }


def naive_ustat(kernel, chi) -> float:
    """H by full ordered-tuple enumeration over the window points of chi.

    No spatial index, no candidate pruning: every (k-1)-tuple of distinct
    other points is visited and the kernel's vanishing radius re-checked.
    """
    n = len(chi)
    if n > _USTAT_CAP:
        raise InputError(f"naive_ustat capped at {_USTAT_CAP} points")
    space = chi.domain.space
    mask = chi.window_mask()
    k = kernel.order
    total = 0.0
    for i in range(n):
        if not mask[i]:
            continue
        p = chi.point(i)
        others = [j for j in range(n) if j != i]
        for tup in itertools.permutations(others, k - 1):
            pts = [p] + [chi.point(j) for j in tup]
            far = False
            for a, b in itertools.combinations(pts, 2):
                if geometry.distance(space, a.loc, b.loc) >= kernel.delta:
                    far = True
                    break
            if far:
                continue
            if kernel.fn is None:
                total += 0.5
            else:
                total += kernel.fn(space, pts)
    return total


def naive_birth_growth(
    space: Space,
    locs: np.ndarray,
    times: np.ndarray,
    speeds: np.ndarray,
    t0: float = math.inf,
) -> np.ndarray:
    """Acceptance flags by a plain chronological double loop."""
    locs = np.asarray(locs, dtype=float)
    times = np.asarray(times, dtype=float)
    speeds = np.asarray(speeds, dtype=float)
    n = len(times)
    if n > _BG_CAP:
        raise InputError(f"naive_birth_growth capped at {_BG_CAP} seeds")
    flags = [False] * n
    for j in sorted(range(n), key=lambda i: times[i]):
        if times[j] > t0:
            continue
        ok = True
        for i in range(n):
            if not flags[i] or times[i] >= times[j]:
                continue
            grown = (times[j] - times[i]) * speeds[i]
            if geometry.distance(space, locs[i], locs[j]) < grown:
                ok = False
                break
        flags[j] = ok
    return np.asarray(flags, dtype=bool)


def torus_isolated_mean(volume: float, rho: float, dim: int, side: float) -> float:
    """E[# isolated points] = nu(W) exp(-kappa_d rho^d) on the unit-intensity
    torus (void probability; requires rho << side)."""
    if rho >= side / 4.0:
        raise InputError("closed form needs rho < side/4")
    return volume * math.exp(-geometry.unit_ball_volume(dim) * rho ** dim)


def torus_edge_mean(volume: float, delta: float, dim: int, side: float) -> float:
    """E[# delta-edges] = nu(W) kappa_d delta^d / 2 on the unit-intensity torus."""
    if delta >= side / 4.0:
        raise InputError("closed form needs delta < side/4")
    return volume * geometry.unit_ball_volume(dim) * delta ** dim / 2.0


_SQRT_PI = math.sqrt(math.pi)
_SQRT2 = math.sqrt(2.0)


def _erf_series(z: float) -> float:
    # erf(z) = (2/sqrt(pi)) e^{-z^2} sum_n (2 z^2)^n z / (1*3*...*(2n+1))
    term = z
    acc = z
    zz2 = 2.0 * z * z
    for n in range(1, 200):
        term *= zz2 / (2 * n + 1)
        acc += term
        if abs(term) < 1e-18 * abs(acc):
            break
    return 2.0 / _SQRT_PI * math.exp(-z * z) * acc


def _erfc_cf(z: float) -> float:
    # Lentz evaluation of erfc(z) = e^{-z^2}/sqrt(pi) * 1/(z + (1/2)/(z + 1/(z + ...)))
    tiny = 1e-300
    b = z
    c = 1.0 / tiny
    d = 1.0 / b
    f = d
    for n in range(1, 300):
        a = n / 2.0
        d = 1.0 / (b + a * d)
        c = b + a / c
        if c == 0.0:
            c = tiny
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-17:
            break
    return math.exp(-z * z) / _SQRT_PI * f


def normal_cdf_reference(x: float) -> float:
    """Standard normal CDF, written from scratch for cross-checking.

    Series for |x| <= 3, complementary-error continued fraction beyond;
    Phi(0) = 1/2 exactly and Phi(-x) = 1 - Phi(x) by construction.  Max
    absolute error <= 1e-14 on |x| <= 8.
    """
    if not math.isfinite(x):
        raise InputError("normal_cdf_reference needs finite input")
    if x == 0.0:
        return 0.5
    ax = abs(x)
    if ax <= 3.0:
        val = 0.5 + 0.5 * _erf_series(ax / _SQRT2)
    else:
        val = 1.0 - 0.5 * _erfc_cf(ax / _SQRT2)
    return val if x > 0 else 1.0 - val
