"""Score functions and their short-range (restricted) families.

A score family evaluates a per-point contribution xi(p, chi) together with
its space-restricted version xi^[r] (input clipped to the open ball B_r(p))
and time-restricted version xi^(s) (input clipped to times < s, with the
1{t_p < s} prefactor).  The evaluated point is always treated as part of the
input configuration; if a point with the same id is already present in chi it
is not double counted.

Families shipped here: local U-statistics with finite range delta, the
isolated-point indicator of the random geometric graph, and power-weighted
k-nearest-neighbor sums.  Birth-growth and Laguerre scores live in their own
modules and subclass ScoreFamily.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from poissonclt import geometry
from poissonclt.errors import DomainError, InputError, UnsupportedError
from poissonclt.geometry import EUCLIDEAN, HYPERBOLIC, TORUS, Space
from poissonclt.process import Configuration, MarkedPoint, restrict_space, restrict_time


class ScoreFamily:
    """Base class wiring the canonical restriction contracts.

    Subclasses implement ``evaluate``; the default restricted evaluations are
    restriction-of-input, which subclasses may override (U-statistics and
    Laguerre use non-canonical short-range families).
    """

    #: optional a-priori bound used as a fallback for the fifth-moment constant
    moment_hint: float | None = None
    #: adding a point farther than this from an existing one never changes the
    #: existing point's score; None when no such radius exists
    interaction_radius: float | None = None

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        raise NotImplementedError

    def evaluate_space_restricted(self, p: MarkedPoint, chi: Configuration, r: float) -> float:
        if math.isinf(r):
            return self.evaluate(p, chi)
        return self.evaluate(p, restrict_space(chi, p.loc, r))

    def evaluate_time_restricted(self, p: MarkedPoint, chi: Configuration, s: float) -> float:
        if p.time is None:
            raise DomainError("time restriction requires a space-time domain")
        if not p.time < s:
            return 0.0
        return self.evaluate(p, restrict_time(chi, s))

    def total(self, config: Configuration) -> float:
        """H = sum of scores over the points of config inside the window."""
        mask = config.window_mask()
        return float(
            sum(self.evaluate(config.point(i), config) for i in np.flatnonzero(mask))
        )


def _other_rows(p: MarkedPoint, chi: Configuration) -> np.ndarray:
    """Row indices of chi excluding any copy of the evaluated point (by id)."""
    return np.flatnonzero(chi.ids != p.id)


@dataclass
class PlainScore(ScoreFamily):
    """Wrap a plain callable xi(p, chi) into a family with canonical restrictions."""

    fn: Callable[[MarkedPoint, Configuration], float]
    moment_hint: float | None = None
    interaction_radius: float | None = None

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        return float(self.fn(p, chi))


def canonical_restrictions(
    fn: Callable[[MarkedPoint, Configuration], float],
    moment_hint: float | None = None,
    interaction_radius: float | None = None,
) -> PlainScore:
    return PlainScore(fn, moment_hint, interaction_radius)


# ---------------------------------------------------------------------------
# local U-statistics


@dataclass(frozen=True)
class UStatKernel:
    """Symmetric-range kernel of a local U-statistic.

    ``fn(space, pts)`` receives the k marked points of an ordered tuple (the
    evaluated point first) and must vanish whenever any pairwise distance is
    >= delta; ``fn=None`` selects the half-indicator edge kernel (k=2), whose
    score sum is the edge count of the delta-geometric graph.  ``sup_bound``
    is the sup-norm of fn, used by the per-evaluation magnitude assertion.
    """

    order: int
    delta: float
    fn: Callable[[Space, Sequence[MarkedPoint]], float] | None = None
    sup_bound: float = 0.5

    def __post_init__(self) -> None:
        if self.order < 2:
            raise InputError("U-statistic order must be >= 2")
        if self.order > 4:
            raise UnsupportedError("U-statistic order capped at k <= 4")
        if not self.delta > 0:
            raise InputError("kernel range delta must be positive")


class UStatScore(ScoreFamily):
    """xi(p, chi) = sum of the kernel over ordered (k-1)-tuples of distinct
    points of chi within range delta of p (and of each other)."""

    def __init__(self, kernel: UStatKernel):
        self.kernel = kernel
        self.moment_hint = None
        self.interaction_radius = kernel.delta

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        kern = self.kernel
        space = chi.domain.space
        rows = _other_rows(p, chi)
        if rows.size == 0:
            return 0.0
        d = geometry.distances_to(space, chi.coords[rows], p.loc)
        near = rows[d < kern.delta]
        m = near.size
        if m < kern.order - 1:
            return 0.0
        if kern.fn is None:
            # edge kernel: each neighbor contributes 1/2
            val = 0.5 * m
        else:
            val = 0.0
            pts = [chi.point(int(i)) for i in near]
            for tup in itertools.permutations(range(m), kern.order - 1):
                args = [p] + [pts[i] for i in tup]
                if _max_pairwise(space, args) >= kern.delta:
                    continue
                val += kern.fn(space, args)
        bound = kern.sup_bound * m ** (kern.order - 1)
        assert abs(val) <= bound + 1e-9, "U-statistic magnitude bound violated"
        return float(val)

    def evaluate_space_restricted(self, p: MarkedPoint, chi: Configuration, r: float) -> float:
        # canonical short-range family: 0 below the kernel range, restriction above
        if r < self.kernel.delta:
            return 0.0
        return super().evaluate_space_restricted(p, chi, r)

    def total(self, config: Configuration) -> float:
        if self.kernel.fn is None:
            return edge_count_total(config, self.kernel.delta)
        return super().total(config)


def _max_pairwise(space: Space, pts: Sequence[MarkedPoint]) -> float:
    worst = 0.0
    for a, b in itertools.combinations(pts, 2):
        worst = max(worst, geometry.distance(space, a.loc, b.loc))
    return worst


# ---------------------------------------------------------------------------
# isolated points


class IsolatedScore(ScoreFamily):
    """Indicator that p has no other point strictly within distance rho."""

    moment_hint = 1.0

    def __init__(self, rho: float):
        if not rho > 0:
            raise InputError("rho must be positive")
        self.rho = rho
        self.interaction_radius = rho

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        rows = _other_rows(p, chi)
        if rows.size == 0:
            return 1.0
        d = geometry.distances_to(chi.domain.space, chi.coords[rows], p.loc)
        return 0.0 if bool(np.any(d < self.rho)) else 1.0

    def total(self, config: Configuration) -> float:
        space = config.domain.space
        n = len(config)
        if n == 0:
            return 0.0
        mask = config.window_mask()
        if space.kind in (EUCLIDEAN, TORUS):
            nnd = _flat_nn_distances(space, config.coords)
        else:
            nnd = _pairwise_nn_distances(space, config.coords)
        return float(np.count_nonzero(mask & (nnd >= self.rho)))


def _flat_nn_distances(space: Space, coords: np.ndarray) -> np.ndarray:
    """Nearest-neighbor distance per point on a flat space (periodic on torus)."""
    n = len(coords)
    if n == 1:
        return np.full(1, np.inf)
    boxsize = space.extent if space.kind == TORUS else None
    pts = coords % space.extent if space.kind == TORUS else coords
    tree = cKDTree(pts, boxsize=boxsize)
    dd, _ = tree.query(pts, k=2)
    return dd[:, 1]


def _pairwise_nn_distances(space: Space, coords: np.ndarray) -> np.ndarray:
    n = len(coords)
    if n == 1:
        return np.full(1, np.inf)
    # hyperboloid model: cosh d = x0 y0 - <x_sp, y_sp>
    gram = np.outer(coords[:, 0], coords[:, 0]) - coords[:, 1:] @ coords[:, 1:].T
    np.fill_diagonal(gram, -np.inf)
    return np.arccosh(np.maximum(gram.max(axis=1), 1.0))


def _pairwise_nn_distances_sorted(space: Space, coords: np.ndarray, k: int):
    gram = np.outer(coords[:, 0], coords[:, 0]) - coords[:, 1:] @ coords[:, 1:].T
    np.fill_diagonal(gram, -np.inf)
    d = np.arccosh(np.maximum(gram, 1.0))
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return np.take_along_axis(d, order, axis=1), order


def edge_count_total(config: Configuration, delta: float) -> float:
    """Edge count of the delta-geometric graph on config (window points only
    counted per the score-sum definition: half per endpoint inside W)."""
    space = config.domain.space
    n = len(config)
    if n < 2:
        return 0.0
    mask = config.window_mask()
    if space.kind in (EUCLIDEAN, TORUS):
        boxsize = space.extent if space.kind == TORUS else None
        pts = config.coords % space.extent if space.kind == TORUS else config.coords
        tree = cKDTree(pts, boxsize=boxsize)
        pairs = tree.query_pairs(delta, output_type="ndarray")
        if len(pairs):
            # re-filter strictly: the tree reports closed-ball pairs
            d = _pair_distances(space, config.coords, pairs)
            pairs = pairs[d < delta]
    else:
        gram = np.outer(config.coords[:, 0], config.coords[:, 0]) - (
            config.coords[:, 1:] @ config.coords[:, 1:].T
        )
        d = np.arccosh(np.maximum(gram, 1.0))
        iu = np.triu_indices(n, k=1)
        sel = d[iu] < delta
        pairs = np.column_stack([iu[0][sel], iu[1][sel]])
    if len(pairs) == 0:
        return 0.0
    w = 0.5 * mask[pairs[:, 0]].astype(float) + 0.5 * mask[pairs[:, 1]].astype(float)
    return float(np.sum(w))


def _pair_distances(space: Space, coords: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    delta = np.abs(coords[pairs[:, 0]] - coords[pairs[:, 1]])
    if space.kind == TORUS:
        delta = np.minimum(delta, space.extent - delta)
    return np.linalg.norm(delta, axis=1)


# ---------------------------------------------------------------------------
# k-nearest-neighbor sums


@dataclass(frozen=True)
class KnnScoreConfig:
    k: int
    alpha: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InputError("k must be >= 1")
        if self.alpha < 0:
            raise InputError("alpha must be non-negative")


class KnnScore(ScoreFamily):
    """Per-point share of the power-weighted kNN-graph edge lengths.

    xi(x, chi) = sum over y in V_k(x) of (1/2 if mutual else 1) d(x,y)^alpha,
    so the score sum counts each undirected edge exactly once.  With fewer
    than k other points, all of them are neighbors.  Equidistant neighbors are
    ordered by point id, which keeps restriction tests bit-exact.
    """

    def __init__(self, cfg: KnnScoreConfig):
        self.cfg = cfg
        self.interaction_radius = None  # kNN edges have unbounded reach

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        space = chi.domain.space
        rows = _other_rows(p, chi)
        if rows.size == 0:
            return 0.0
        d = geometry.distances_to(space, chi.coords[rows], p.loc)
        order = np.lexsort((chi.ids[rows], d))
        m = min(self.cfg.k, rows.size)
        val = 0.0
        for j in order[:m]:
            y_row = int(rows[j])
            w = 0.5 if self._is_knn_of(chi, y_row, p) else 1.0
            val += w * d[j] ** self.cfg.alpha
        return float(val)

    def _is_knn_of(self, chi: Configuration, y_row: int, p: MarkedPoint) -> bool:
        """Whether p belongs to V_k(y, chi + p), ties broken by id."""
        space = chi.domain.space
        y = chi.point(y_row)
        rows = np.flatnonzero((chi.ids != y.id) & (chi.ids != p.id))
        if rows.size < self.cfg.k:
            return True
        d = geometry.distances_to(space, chi.coords[rows], y.loc)
        dp = geometry.distance(space, y.loc, p.loc)
        closer = np.count_nonzero(
            (d < dp) | ((d == dp) & (chi.ids[rows] < p.id))
        )
        return closer < self.cfg.k

    def total(self, config: Configuration) -> float:
        space = config.domain.space
        n = len(config)
        k = self.cfg.k
        if n < 2:
            return 0.0
        if n <= k + 1 or space.kind == HYPERBOLIC and n > 4000:
            return super().total(config)
        mask = config.window_mask()
        if space.kind in (EUCLIDEAN, TORUS):
            boxsize = space.extent if space.kind == TORUS else None
            pts = config.coords % space.extent if space.kind == TORUS else config.coords
            tree = cKDTree(pts, boxsize=boxsize)
            dd, ii = tree.query(pts, k=k + 1)
            dd, ii = dd[:, 1:], ii[:, 1:]
        else:
            dd, ii = _pairwise_nn_distances_sorted(space, config.coords, k)
        # undirected edges, each once; weight by the endpoint(s) inside W
        neigh_sets = [set(map(int, row)) for row in ii]
        val = 0.0
        for x in range(n):
            for col in range(dd.shape[1]):
                y = int(ii[x, col])
                mutual = x in neigh_sets[y]
                if mutual and y < x:
                    continue  # handled from the smaller-index endpoint
                share = 0.0
                if mutual:
                    share = 0.5 * (float(mask[x]) + float(mask[y]))
                else:
                    share = float(mask[x])
                if share:
                    val += share * dd[x, col] ** self.cfg.alpha
        return float(val)
