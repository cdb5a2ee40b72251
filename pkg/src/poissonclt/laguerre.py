"""Paraboloid thinning of weighted points (Laguerre tessellation duality).

A weighted point (x, h) is retained when the boundary of its upward
paraboloid { (z, h_z) : h_z >= h + |x-z|^2 / (2t) } is not covered by the
upward paraboloids of the other points; equivalently, its Laguerre cell

    { w : (z - x) . w <= (|z|^2 - |x|^2)/2 + t (h_z - h)   for all z }

is non-empty.  Retention is decided by linear feasibility: interval
intersection in d=1, a Chebyshev-slack LP (HiGHS) in d=2.  A d=1 boundary
scan that never forms the linear system serves as the independent oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from poissonclt import geometry
from poissonclt.errors import ConfigError, InputError, UnsupportedError
from poissonclt.process import (
    Configuration,
    MarkedPoint,
    PointMass,
    PowerWeight,
    SpaceTimeDomain,
)
from poissonclt.scores import ScoreFamily

#: a cell counts as non-empty when the LP finds a point with slack >= -TOL
#: (closed cells; degenerate single-point cells are retained)
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class WeightedPoint:
    x: np.ndarray
    h: float

    def __post_init__(self) -> None:
        if not self.h > 0:
            raise InputError("weights must be positive")


@dataclass(frozen=True)
class LaguerreConfig:
    """Aperture t, weight-density exponent beta, window scale and truncations."""

    t: float = 0.5
    beta: float = 0.0
    dim: int = 1
    margin: float = 0.0
    h_max: float = 10.0

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ConfigError("aperture t must be positive")
        if self.beta <= -1:
            raise ConfigError("beta must exceed -1")
        if self.dim not in (1, 2):
            raise UnsupportedError("retention is implemented for d in {1, 2}")
        if self.margin < 0:
            raise ConfigError("margin must be non-negative")
        if not self.h_max > 0:
            raise ConfigError("h_max must be positive")


def laguerre_domain(cfg: LaguerreConfig, lam: float) -> SpaceTimeDomain:
    """Window of volume lam plus the simulation halo, weights as time axis."""
    side = lam ** (1.0 / cfg.dim)
    space = geometry.euclidean_box(cfg.dim, side + 2.0 * cfg.margin)
    window = geometry.centered_box(space, side)
    carrier = geometry.full_window(space)
    return SpaceTimeDomain(
        space, window, carrier, PowerWeight(cfg.beta, cfg.h_max), PointMass(1.0)
    )


def auto_margin(lam: float, eps: float, rate: float, dim: int) -> float:
    """Halo width from the space-localization decay exp(-rate r^d)."""
    if rate <= 0:
        raise ConfigError("need a positive fitted decay rate")
    return max(1.0, (math.log(max(lam / eps, math.e)) / rate) ** (1.0 / dim))


def auto_h_max(lam: float, eps: float, rate: float, dim: int) -> float:
    """Weight truncation from the retention decay exp(-rate s^(d/2))."""
    if rate <= 0:
        raise ConfigError("need a positive fitted decay rate")
    return max(1.0, (math.log(max(lam / eps, math.e)) / rate) ** (2.0 / dim))


# ---------------------------------------------------------------------------
# retention via cell feasibility


def _constraints(
    x: np.ndarray, h: float, xs: np.ndarray, hs: np.ndarray, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Half-space system a_i . w <= b_i of the Laguerre cell of (x, h)."""
    a = xs - x
    b = 0.5 * (np.sum(xs ** 2, axis=1) - np.sum(x ** 2)) + t * (hs - h)
    return a, b


def _feasible_1d(a: np.ndarray, b: np.ndarray, lo: float, hi: float) -> bool:
    for ai, bi in zip(a[:, 0], b):
        if ai > 0:
            hi = min(hi, bi / ai)
        elif ai < 0:
            lo = max(lo, bi / ai)
        elif bi < -FEASIBILITY_TOL:
            return False
    return lo <= hi + FEASIBILITY_TOL


def _feasible_2d(a: np.ndarray, b: np.ndarray, box: float | None) -> bool:
    """Chebyshev-slack LP: maximize s subject to a.w + |a| s <= b, s <= 1.

    The system is feasible (with slack >= -TOL) iff the optimum s* >= -TOL.
    The program itself is always feasible and bounded, so HiGHS terminates
    deterministically.
    """
    norms = np.linalg.norm(a, axis=1)
    fixed = norms == 0.0
    if np.any(b[fixed] < -FEASIBILITY_TOL):
        return False
    a, b, norms = a[~fixed], b[~fixed], norms[~fixed]
    if len(a) == 0:
        return True
    a_ub = np.column_stack([a, norms])
    bounds = [(None, None), (None, None), (None, 1.0)]
    if box is not None:
        bounds = [(-box, box), (-box, box), (None, 1.0)]
    res = linprog(
        c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b, bounds=bounds, method="highs"
    )
    if res.status != 0:
        raise RuntimeError(f"feasibility LP failed: {res.message}")
    return -res.fun >= -FEASIBILITY_TOL


def is_retained(
    x: np.ndarray,
    h: float,
    xs: np.ndarray,
    hs: np.ndarray,
    cfg: LaguerreConfig,
    radius: float = math.inf,
) -> bool:
    """Whether (x, h) survives the thinning against competitors (xs, hs).

    ``radius`` restricts the test to the cylinder of that radius around x:
    competitors outside the open ball B_radius(x) are ignored and the cell
    point w is confined to the cylinder (exact interval in d=1, inscribed
    box in d=2).  radius=inf gives the full retention test.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xs = np.asarray(xs, dtype=float).reshape(-1, x.size)
    hs = np.asarray(hs, dtype=float)
    if x.size != cfg.dim:
        raise UnsupportedError("point dimension must match cfg.dim")
    if np.isfinite(radius):
        keep = np.linalg.norm(xs - x, axis=1) < radius
        xs, hs = xs[keep], hs[keep]
    a, b = _constraints(x, h, xs, hs, cfg.t)
    if cfg.dim == 1:
        lo, hi = -math.inf, math.inf
        if np.isfinite(radius):
            lo, hi = x[0] - radius, x[0] + radius
        return _feasible_1d(a, b, lo, hi)
    box = radius / math.sqrt(2.0) if np.isfinite(radius) else None
    if box is not None:
        # shift to coordinates centered at x so the box is symmetric
        b = b - a @ x
        res = _feasible_2d(a, b, box)
        return res
    return _feasible_2d(a, b, None)


def count_thinned(chi: Configuration, cfg: LaguerreConfig) -> int:
    """Number of retained points whose location lies in the window."""
    mask = chi.window_mask()
    n = 0
    for i in np.flatnonzero(mask):
        rows = np.flatnonzero(chi.ids != chi.ids[i])
        if is_retained(
            chi.coords[i], float(chi.times[i]), chi.coords[rows], chi.times[rows], cfg
        ):
            n += 1
    return n


# ---------------------------------------------------------------------------
# score family


class LaguerreScore(ScoreFamily):
    """Retention indicator with the cylinder-based short-range family.

    xi^[r] tests coverage of the upward-paraboloid boundary only inside the
    radius-r cylinder around the evaluated point, ignoring competitors
    outside it; xi^(s) is weight restriction (weights play the time role).
    """

    moment_hint = 1.0
    interaction_radius = None

    def __init__(self, cfg: LaguerreConfig):
        self.cfg = cfg

    def _eval(self, p: MarkedPoint, chi: Configuration, radius: float) -> float:
        if p.time is None:
            raise InputError("laguerre scores need the weight coordinate")
        rows = np.flatnonzero(chi.ids != p.id)
        return float(
            is_retained(
                p.loc, p.time, chi.coords[rows], chi.times[rows], self.cfg, radius
            )
        )

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        return self._eval(p, chi, math.inf)

    def evaluate_space_restricted(self, p: MarkedPoint, chi: Configuration, r: float) -> float:
        return self._eval(p, chi, r)

    def total(self, config: Configuration) -> float:
        return float(count_thinned(config, self.cfg))


# ---------------------------------------------------------------------------
# d=1 boundary-scan oracle


def boundary_scan_oracle_1d(
    x: float,
    h: float,
    xs: np.ndarray,
    hs: np.ndarray,
    cfg: LaguerreConfig,
    grid_step: float = 1e-3,
) -> bool:
    """Retention by direct scan of the upward-paraboloid boundary (d=1).

    For each competitor z the set of boundary abscissae w it covers is a
    closed half-line whose endpoint is the crossing of two parabolas,
    computed in closed form.  Scanning the O(n) breakpoints, the midpoints
    between them and probes grid_step beyond the extremes therefore decides
    coverage exactly; each probe is checked by direct paraboloid arithmetic
    (no linear system is ever formed).
    """
    if cfg.dim != 1:
        raise UnsupportedError("the boundary scan oracle is for d=1")
    xs = np.asarray(xs, dtype=float).reshape(-1)
    hs = np.asarray(hs, dtype=float)
    if xs.size == 0:
        return True
    t = cfg.t

    def uncovered(w: float) -> bool:
        # boundary point of the up paraboloid at abscissa w
        h_w = h + (x - w) ** 2 / (2.0 * t)
        # covered iff some competitor's point lies inside the down paraboloid
        margins = hs - (h_w - (xs - w) ** 2 / (2.0 * t))
        return bool(np.min(margins) > -FEASIBILITY_TOL)

    probes: list[float] = []
    for z, hz in zip(xs, hs):
        if z == x:
            if hz < h - FEASIBILITY_TOL:
                return False  # same-axis competitor with lower weight covers all
            continue
        w_star = (t * (hz - h) + 0.5 * (z * z - x * x)) / (z - x)
        probes.append(w_star)
    if not probes:
        return True
    probes.sort()
    candidates = [probes[0] - max(grid_step, 1.0), probes[-1] + max(grid_step, 1.0)]
    candidates += probes
    candidates += [0.5 * (a + b) for a, b in zip(probes, probes[1:])]
    candidates += [p - grid_step for p in probes] + [p + grid_step for p in probes]
    return any(uncovered(w) for w in candidates)
