"""Metric measure spaces used by the simulators.

Three space kinds are supported:

* ``euclidean_box`` -- the cube [-L/2, L/2]^d with the Euclidean metric and
  Lebesgue measure;
* ``flat_torus``    -- [0, L)^d with the wrapped metric.  Boundary-free, so
  closed-form Poisson identities hold exactly; used as a testing space;
* ``hyperbolic_ball`` -- the geodesic ball B(o, L) in the hyperbolic space of
  curvature -1, dimension d.  Points are stored in hyperboloid-model
  coordinates (d+1 reals with Minkowski norm -1), which keeps the arccosh
  distance numerically stable near the boundary.  A Poincare-ball conversion
  is provided for export only.

All operations are pure; ``SpatialIndex`` is immutable after construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from poissonclt.errors import InputError

EUCLIDEAN = "euclidean_box"
TORUS = "flat_torus"
HYPERBOLIC = "hyperbolic_ball"

_KINDS = (EUCLIDEAN, TORUS, HYPERBOLIC)

# knot count for the tabulated radial inverse CDF in hyperbolic d >= 3
_RADIAL_KNOTS = 2 ** 14


@dataclass(frozen=True)
class Space:
    """A metric measure space: kind, dimension and linear extent.

    ``extent`` is the box side length for the flat kinds and the geodesic
    ball radius for ``hyperbolic_ball``.  Hyperbolic curvature is -1 exactly.
    """

    kind: str
    dim: int
    extent: float

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise InputError(f"unknown space kind {self.kind!r}")
        if self.dim < 1:
            raise InputError("dim must be >= 1")
        if not self.extent > 0:
            raise InputError("extent must be positive")

    @property
    def ambient_dim(self) -> int:
        """Number of stored coordinates per point."""
        return self.dim + 1 if self.kind == HYPERBOLIC else self.dim


def euclidean_box(dim: int, side: float) -> Space:
    return Space(EUCLIDEAN, dim, float(side))


def flat_torus(dim: int, side: float) -> Space:
    return Space(TORUS, dim, float(side))


def hyperbolic_ball(dim: int, radius: float) -> Space:
    return Space(HYPERBOLIC, dim, float(radius))


def unit_ball_volume(dim: int) -> float:
    """kappa_d, the Lebesgue volume of the Euclidean unit ball."""
    return math.pi ** (dim / 2.0) / math.gamma(1.0 + dim / 2.0)


# ---------------------------------------------------------------------------
# points


def origin(space: Space) -> np.ndarray:
    if space.kind == HYPERBOLIC:
        p = np.zeros(space.dim + 1)
        p[0] = 1.0
        return p
    if space.kind == TORUS:
        return np.full(space.dim, space.extent / 2.0)
    return np.zeros(space.dim)


def minkowski_dot(a: np.ndarray, b: np.ndarray) -> float:
    return float(-a[0] * b[0] + a[1:] @ b[1:])


def hyperboloid_point(direction: np.ndarray, radius: float) -> np.ndarray:
    """Point at geodesic distance ``radius`` from the origin along ``direction``.

    ``direction`` must be a unit vector in R^d (the tangent space at o).
    """
    direction = np.asarray(direction, dtype=float)
    nrm = np.linalg.norm(direction)
    if not np.isclose(nrm, 1.0, atol=1e-9):
        raise InputError("direction must be a unit vector")
    out = np.empty(direction.size + 1)
    out[0] = math.cosh(radius)
    out[1:] = math.sinh(radius) * direction
    return out


def check_point(space: Space, p: np.ndarray) -> None:
    """Validate a point's coordinate representation for ``space``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (space.ambient_dim,):
        raise InputError(
            f"point has {p.shape} coordinates, expected ({space.ambient_dim},)"
        )
    if space.kind == HYPERBOLIC:
        if p[0] < 1.0 - 1e-12:
            raise InputError("hyperboloid point must have x0 >= 1")
        if abs(minkowski_dot(p, p) + 1.0) > 1e-9:
            raise InputError("hyperboloid point must satisfy <x,x> = -1")


def to_poincare_ball(p: np.ndarray) -> np.ndarray:
    """Convert hyperboloid coordinates to the Poincare ball model (export only)."""
    p = np.asarray(p, dtype=float)
    return p[1:] / (1.0 + p[0])


# ---------------------------------------------------------------------------
# distance


def distance(space: Space, a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic distance between two points of ``space``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != (space.ambient_dim,) or b.shape != (space.ambient_dim,):
        raise InputError("dimension mismatch in distance()")
    if space.kind == EUCLIDEAN:
        return float(np.linalg.norm(a - b))
    if space.kind == TORUS:
        delta = np.abs(a - b)
        delta = np.minimum(delta, space.extent - delta)
        return float(np.linalg.norm(delta))
    # hyperboloid model: d = arccosh(-<a,b>), clamped against rounding below 1
    c = -minkowski_dot(a, b)
    return math.acosh(max(c, 1.0))


def distances_to(space: Space, coords: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Vector of distances from every row of ``coords`` to ``p``."""
    coords = np.asarray(coords, dtype=float)
    p = np.asarray(p, dtype=float)
    if coords.size == 0:
        return np.zeros(0)
    if space.kind == EUCLIDEAN:
        return np.linalg.norm(coords - p, axis=1)
    if space.kind == TORUS:
        delta = np.abs(coords - p)
        delta = np.minimum(delta, space.extent - delta)
        return np.linalg.norm(delta, axis=1)
    c = coords[:, 0] * p[0] - coords[:, 1:] @ p[1:]
    return np.arccosh(np.maximum(c, 1.0))


# ---------------------------------------------------------------------------
# ball volumes


def ball_volume(space: Space, r: float) -> float:
    """Measure of a geodesic ball of radius ``r``.

    Euclidean and torus use the closed form kappa_d r^d (on the torus this is
    valid for r <= side/2, where balls do not self-overlap).  Hyperbolic d=2
    uses 2 pi (cosh r - 1); higher dimensions integrate the radial density
    d kappa_d sinh^{d-1}(u) by adaptive quadrature (relative error <= 1e-10).
    """
    if r < 0:
        raise InputError("radius must be non-negative")
    if r == 0.0:
        return 0.0
    d = space.dim
    if space.kind in (EUCLIDEAN, TORUS):
        if space.kind == TORUS and r > space.extent / 2.0:
            raise InputError("torus ball volume only defined for r <= side/2")
        return unit_ball_volume(d) * r ** d
    if d == 2:
        return 2.0 * math.pi * (math.cosh(r) - 1.0)
    dk = d * unit_ball_volume(d)
    val, _ = integrate.quad(
        lambda u: math.sinh(u) ** (d - 1), 0.0, r, epsabs=0.0, epsrel=1e-12, limit=200
    )
    return dk * val


# ---------------------------------------------------------------------------
# windows


@dataclass(frozen=True)
class BoxWindow:
    """Axis-aligned box, for the flat space kinds."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.lo) != len(self.hi):
            raise InputError("lo and hi must have equal length")
        if any(h <= l for l, h in zip(self.lo, self.hi)):
            raise InputError("box window must have positive extent on every axis")


@dataclass(frozen=True)
class BallWindow:
    """Geodesic ball centered at the space origin."""

    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise InputError("ball window radius must be positive")


Window = BoxWindow | BallWindow


def full_window(space: Space) -> Window:
    """The window covering the whole carrier set of ``space``."""
    if space.kind == HYPERBOLIC:
        return BallWindow(space.extent)
    if space.kind == TORUS:
        return BoxWindow((0.0,) * space.dim, (space.extent,) * space.dim)
    half = space.extent / 2.0
    return BoxWindow((-half,) * space.dim, (half,) * space.dim)


def centered_box(space: Space, side: float) -> BoxWindow:
    if space.kind == HYPERBOLIC:
        raise InputError("box windows are for flat spaces")
    if space.kind == TORUS:
        c = space.extent / 2.0
        if side > space.extent:
            raise InputError("box exceeds torus")
        return BoxWindow((c - side / 2.0,) * space.dim, (c + side / 2.0,) * space.dim)
    return BoxWindow((-side / 2.0,) * space.dim, (side / 2.0,) * space.dim)


def window_volume(space: Space, window: Window) -> float:
    if isinstance(window, BoxWindow):
        return float(np.prod(np.asarray(window.hi) - np.asarray(window.lo)))
    return ball_volume(space, window.radius)


def window_contains(space: Space, window: Window, coords: np.ndarray) -> np.ndarray:
    """Boolean mask of which rows of ``coords`` lie in the (closed) window."""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[None, :]
    if isinstance(window, BoxWindow):
        lo = np.asarray(window.lo)
        hi = np.asarray(window.hi)
        return np.all((coords >= lo) & (coords <= hi), axis=1)
    if space.kind == HYPERBOLIC:
        return np.arccosh(np.maximum(coords[:, 0], 1.0)) <= window.radius
    return np.linalg.norm(coords - origin(space), axis=1) <= window.radius


def distance_to_window(space: Space, p: np.ndarray, window: Window) -> float:
    """inf over z in W of d(p, z); zero for p inside W.  Exact for boxes/balls."""
    p = np.asarray(p, dtype=float)
    if isinstance(window, BallWindow):
        return max(0.0, distance(space, p, origin(space)) - window.radius)
    lo = np.asarray(window.lo)
    hi = np.asarray(window.hi)
    if space.kind == TORUS:
        # per-axis circular distance to the interval; the box is a product set
        gaps = np.zeros(space.dim)
        for i in range(space.dim):
            x = p[i] % space.extent
            if lo[i] <= x <= hi[i]:
                continue
            dlo = min(abs(x - lo[i]), space.extent - abs(x - lo[i]))
            dhi = min(abs(x - hi[i]), space.extent - abs(x - hi[i]))
            gaps[i] = min(dlo, dhi)
        return float(np.linalg.norm(gaps))
    gaps = np.maximum(np.maximum(lo - p, p - hi), 0.0)
    return float(np.linalg.norm(gaps))


# ---------------------------------------------------------------------------
# uniform sampling


@lru_cache(maxsize=32)
def _radial_inverse_cdf(dim: int, radius: float) -> PchipInterpolator:
    """Tabulated inverse radial CDF for hyperbolic d >= 3.

    The radial density is proportional to sinh^{d-1}(u) on [0, radius]; the
    CDF is tabulated on 2^14 knots and inverted with monotone cubic (PCHIP)
    interpolation.  CDF error budget 1e-8.
    """
    u = np.linspace(0.0, radius, _RADIAL_KNOTS + 1)
    dens = np.sinh(u) ** (dim - 1)
    cdf = integrate.cumulative_simpson(dens, x=u, initial=0.0)
    cdf /= cdf[-1]
    # strictly increasing except at the origin knot; PCHIP needs strict x
    keep = np.concatenate(([True], np.diff(cdf) > 0))
    return PchipInterpolator(cdf[keep], u[keep])


def _sample_directions(dim: int, n: int, gen: np.random.Generator) -> np.ndarray:
    v = gen.standard_normal((n, dim))
    nrm = np.linalg.norm(v, axis=1, keepdims=True)
    return v / nrm


def sample_uniform(
    space: Space, window: Window, n: int, gen: np.random.Generator
) -> np.ndarray:
    """n i.i.d. points from the normalized measure of ``space`` on ``window``.

    The hyperbolic sampler draws a uniform sphere direction and an
    inverse-CDF radial coordinate: closed form via cosh in d=2, tabulated
    inverse CDF for d >= 3.
    """
    if n < 0:
        raise InputError("n must be non-negative")
    if window_volume(space, window) <= 0:
        raise InputError("empty region")
    if n == 0:
        return np.zeros((0, space.ambient_dim))
    if isinstance(window, BoxWindow):
        lo = np.asarray(window.lo)
        hi = np.asarray(window.hi)
        return gen.uniform(lo, hi, size=(n, space.dim))
    radius = window.radius
    if space.kind == EUCLIDEAN:
        dirs = _sample_directions(space.dim, n, gen)
        r = radius * gen.random(n) ** (1.0 / space.dim)
        return origin(space) + dirs * r[:, None]
    if space.kind != HYPERBOLIC:
        raise InputError("ball windows on the torus are not supported")
    dirs = _sample_directions(space.dim, n, gen)
    u = gen.random(n)
    if space.dim == 2:
        r = np.arccosh(1.0 + u * (math.cosh(radius) - 1.0))
    else:
        r = _radial_inverse_cdf(space.dim, radius)(u)
    out = np.empty((n, space.dim + 1))
    out[:, 0] = np.cosh(r)
    out[:, 1:] = np.sinh(r)[:, None] * dirs
    return out


def hyperbolic_radial_cdf(space: Space, radius: float, r: np.ndarray) -> np.ndarray:
    """CDF of the radial coordinate of a uniform draw from B(o, radius)."""
    if space.kind != HYPERBOLIC:
        raise InputError("radial CDF is a hyperbolic-sampler diagnostic")
    r = np.clip(np.asarray(r, dtype=float), 0.0, radius)
    total = ball_volume(space, radius)
    return np.array([ball_volume(space, float(x)) for x in r]) / total


# ---------------------------------------------------------------------------
# fixed-radius neighbor queries


class SpatialIndex:
    """Fixed-radius neighbor queries over a point list.

    Flat spaces use a sparse cell grid with cell size equal to the intended
    query radius (queries at other radii scan proportionally more cells and
    stay exact).  The hyperbolic kind keeps the coordinate matrix and answers
    queries with a vectorized arccosh scan, which is exact and fast for the
    configuration sizes used here.  Instances are immutable and shareable
    across threads.
    """

    def __init__(self, space: Space, coords: np.ndarray, cell_size: float) -> None:
        if cell_size <= 0:
            raise InputError("cell_size must be positive")
        self.space = space
        self.coords = np.asarray(coords, dtype=float).reshape(-1, space.ambient_dim)
        self.cell_size = float(cell_size)
        self._grid: dict[tuple[int, ...], np.ndarray] | None = None
        self._ncells = 0
        self._actual_cell = 0.0
        if space.kind in (EUCLIDEAN, TORUS) and len(self.coords) > 0:
            self._build_grid()

    def _build_grid(self) -> None:
        space = self.space
        if space.kind == TORUS:
            self._ncells = max(1, int(space.extent / self.cell_size))
            self._actual_cell = space.extent / self._ncells
            cells = np.floor(
                (self.coords % space.extent) / self._actual_cell
            ).astype(int)
            cells = np.minimum(cells, self._ncells - 1)
        else:
            self._actual_cell = self.cell_size
            cells = np.floor(self.coords / self._actual_cell).astype(int)
        grid: dict[tuple[int, ...], list[int]] = {}
        for i, c in enumerate(map(tuple, cells)):
            grid.setdefault(c, []).append(i)
        self._grid = {c: np.asarray(ids) for c, ids in grid.items()}

    def __len__(self) -> int:
        return len(self.coords)

    def _candidates(self, p: np.ndarray, r: float) -> np.ndarray:
        space = self.space
        rings = int(math.ceil(r / self._actual_cell))
        if space.kind == TORUS:
            base = np.floor((p % space.extent) / self._actual_cell).astype(int)
            base = np.minimum(base, self._ncells - 1)
        else:
            base = np.floor(p / self._actual_cell).astype(int)
        seen: set[tuple[int, ...]] = set()
        chunks = []
        for off in itertools.product(range(-rings, rings + 1), repeat=space.dim):
            cell = tuple(base + np.asarray(off))
            if space.kind == TORUS:
                cell = tuple(c % self._ncells for c in cell)
            if cell in seen:
                continue
            seen.add(cell)
            ids = self._grid.get(cell)
            if ids is not None:
                chunks.append(ids)
        if not chunks:
            return np.zeros(0, dtype=int)
        return np.concatenate(chunks)

    def neighbors_within(self, p: np.ndarray, r: float) -> np.ndarray:
        """Ids of indexed points strictly within distance r of p, sorted by id."""
        if r <= 0 or len(self.coords) == 0:
            return np.zeros(0, dtype=int)
        p = np.asarray(p, dtype=float)
        if self._grid is not None and np.isfinite(r):
            cand = self._candidates(p, r)
            if cand.size == 0:
                return cand
            d = distances_to(self.space, self.coords[cand], p)
            return np.sort(cand[d < r])
        d = distances_to(self.space, self.coords, p)
        if not np.isfinite(r):
            return np.arange(len(self.coords))
        return np.flatnonzero(d < r)


def brute_force_neighbors(
    space: Space, coords: np.ndarray, p: np.ndarray, r: float
) -> np.ndarray:
    """O(n) scan used as the oracle for SpatialIndex in tests."""
    if len(coords) == 0 or r <= 0:
        return np.zeros(0, dtype=int)
    d = distances_to(space, np.asarray(coords, dtype=float), np.asarray(p, float))
    return np.flatnonzero(d < r)
