"""Marked Poisson processes on space and space-time domains.

A configuration is a finite multiset of marked points: spatial location,
optional time coordinate (present exactly when the domain has a non-trivial
time measure) and a mark.  Configurations are immutable values; sampling is a
pure function of a RandomStream, so parallel replications over disjoint
substreams are reproducible bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from poissonclt import geometry
from poissonclt.errors import ConfigError, DomainError, InputError
from poissonclt.geometry import Space, Window
from poissonclt.rng import RandomStream

# ---------------------------------------------------------------------------
# time measures


@dataclass(frozen=True)
class DiracZero:
    """No time coordinate (space-only scores); total mass 1."""

    total_mass: float = 1.0


@dataclass(frozen=True)
class LebesgueInterval:
    """Lebesgue measure on [0, t_max]."""

    t_max: float

    def __post_init__(self) -> None:
        if not self.t_max > 0:
            raise InputError("t_max must be positive")

    @property
    def total_mass(self) -> float:
        return self.t_max

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return gen.uniform(0.0, self.t_max, size=n)


@dataclass(frozen=True)
class PowerWeight:
    """Density h^beta on (0, h_max]; requires beta > -1 for finite mass."""

    beta: float
    h_max: float

    def __post_init__(self) -> None:
        if self.beta <= -1:
            raise InputError("power-weight measure requires beta > -1")
        if not self.h_max > 0:
            raise InputError("h_max must be positive")

    @property
    def total_mass(self) -> float:
        return self.h_max ** (self.beta + 1.0) / (self.beta + 1.0)

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return self.h_max * gen.random(n) ** (1.0 / (self.beta + 1.0))


TimeMeasure = DiracZero | LebesgueInterval | PowerWeight


# ---------------------------------------------------------------------------
# mark laws


@dataclass(frozen=True)
class PointMass:
    value: float = 1.0

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return np.full(n, self.value)


@dataclass(frozen=True)
class ShiftedExponential:
    """rho_min + Exponential(rate): positive lower bound, exponential tail rate."""

    rho_min: float
    rate: float

    def __post_init__(self) -> None:
        if not (self.rho_min > 0 and self.rate > 0):
            raise InputError("rho_min and rate must be positive")

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return self.rho_min + gen.exponential(1.0 / self.rate, size=n)


@dataclass(frozen=True)
class TableLaw:
    """Finite user-supplied mark distribution."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.probs) or not self.values:
            raise InputError("values and probs must be non-empty and equal length")
        if abs(sum(self.probs) - 1.0) > 1e-9 or min(self.probs) < 0:
            raise InputError("probs must be a probability vector")

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        return gen.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))


MarkLaw = PointMass | ShiftedExponential | TableLaw


# ---------------------------------------------------------------------------
# domain


@dataclass(frozen=True)
class SpaceTimeDomain:
    """Carrier space X with window W (W inside X), time measure and mark law."""

    space: Space
    window: Window
    carrier: Window
    time_measure: TimeMeasure = DiracZero()
    mark_law: MarkLaw = PointMass(1.0)

    def __post_init__(self) -> None:
        wv = geometry.window_volume(self.space, self.window)
        cv = geometry.window_volume(self.space, self.carrier)
        if not math.isfinite(wv):
            raise ConfigError("window must have finite measure")
        if wv > cv * (1.0 + 1e-9):
            raise ConfigError("window must be contained in the carrier")

    @property
    def is_space_time(self) -> bool:
        return not isinstance(self.time_measure, DiracZero)

    @property
    def window_mass(self) -> float:
        return geometry.window_volume(self.space, self.window)

    @property
    def carrier_mass(self) -> float:
        return geometry.window_volume(self.space, self.carrier)

    def total_mass(self, region: Window | None = None) -> float:
        """nu (x) mu mass of region x time-support, after truncation."""
        vol = geometry.window_volume(self.space, region or self.carrier)
        mass = vol * self.time_measure.total_mass
        if not math.isfinite(mass):
            raise ConfigError("infinite intensity mass after truncation")
        return mass


def space_domain(space: Space, window: Window | None = None,
                 carrier: Window | None = None,
                 mark_law: MarkLaw = PointMass(1.0)) -> SpaceTimeDomain:
    """Space-only domain (Dirac time measure); window defaults to the carrier."""
    carrier = carrier or geometry.full_window(space)
    window = window or carrier
    return SpaceTimeDomain(space, window, carrier, DiracZero(), mark_law)


# ---------------------------------------------------------------------------
# configurations


@dataclass(frozen=True)
class MarkedPoint:
    loc: np.ndarray
    time: float | None
    mark: float
    id: int


@dataclass(frozen=True)
class Configuration:
    """Immutable finite marked point set, iteration ordered by id."""

    domain: SpaceTimeDomain
    coords: np.ndarray
    times: np.ndarray | None
    marks: np.ndarray
    ids: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        n = len(self.coords)
        if len(self.marks) != n or len(self.ids) != n:
            raise InputError("parallel arrays must have equal length")
        if (self.times is not None) != self.domain.is_space_time:
            raise DomainError("times present iff the domain is space-time")
        if self.times is not None and len(self.times) != n:
            raise InputError("parallel arrays must have equal length")
        if n > 1:
            if np.any(np.diff(self.ids) <= 0):
                raise InputError("ids must be unique and sorted ascending")
        for arr in (self.coords, self.marks, self.ids, self.times):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[MarkedPoint]:
        return (self.point(i) for i in range(len(self)))

    def point(self, i: int) -> MarkedPoint:
        t = None if self.times is None else float(self.times[i])
        return MarkedPoint(self.coords[i], t, float(self.marks[i]), int(self.ids[i]))

    def index(self, cell_size: float) -> geometry.SpatialIndex:
        """Spatial index over the configuration, cached per cell size."""
        key = round(float(cell_size), 12)
        idx = self._cache.get(key)
        if idx is None:
            idx = geometry.SpatialIndex(self.domain.space, self.coords, cell_size)
            self._cache[key] = idx
        return idx

    def window_mask(self) -> np.ndarray:
        return geometry.window_contains(
            self.domain.space, self.domain.window, self.coords
        )

    def take(self, mask: np.ndarray) -> Configuration:
        times = None if self.times is None else self.times[mask]
        return Configuration(
            self.domain, self.coords[mask], times, self.marks[mask], self.ids[mask]
        )


def empty_configuration(domain: SpaceTimeDomain) -> Configuration:
    times = np.zeros(0) if domain.is_space_time else None
    return Configuration(
        domain, np.zeros((0, domain.space.ambient_dim)), times, np.zeros(0),
        np.zeros(0, dtype=np.int64),
    )


def make_configuration(
    domain: SpaceTimeDomain,
    coords: np.ndarray,
    times: Sequence[float] | None = None,
    marks: Sequence[float] | None = None,
) -> Configuration:
    """Assemble a configuration from raw arrays, assigning ids 0..n-1."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    n = len(coords)
    if domain.is_space_time:
        if times is None:
            raise DomainError("space-time domain needs times")
        times = np.asarray(times, dtype=float).copy()
    else:
        if times is not None:
            raise DomainError("space-only domain does not carry times")
    marks = (
        np.ones(n) if marks is None else np.asarray(marks, dtype=float).copy()
    )
    return Configuration(domain, coords.copy(), times, marks, np.arange(n, dtype=np.int64))


def make_point(
    domain: SpaceTimeDomain,
    loc: np.ndarray,
    time: float | None = None,
    mark: float | None = None,
    id: int | None = None,
    gen: np.random.Generator | None = None,
) -> MarkedPoint:
    """A marked point for augmenting; missing mark is drawn from the mark law."""
    if domain.is_space_time and time is None:
        raise DomainError("space-time domain needs a time coordinate")
    if not domain.is_space_time:
        time = None
    if mark is None:
        if isinstance(domain.mark_law, PointMass):
            mark = domain.mark_law.value
        elif gen is None:
            raise InputError("a generator is required to draw a missing mark")
        else:
            mark = float(domain.mark_law.sample(1, gen)[0])
    return MarkedPoint(np.asarray(loc, dtype=float), time, float(mark),
                       -1 if id is None else int(id))


# ---------------------------------------------------------------------------
# sampling


def sample_poisson(
    domain: SpaceTimeDomain,
    rng: RandomStream | np.random.Generator,
    region: Window | None = None,
) -> Configuration:
    """Poisson sample on region x time-support with intensity nu (x) mu (x) Q."""
    gen = rng.generator() if isinstance(rng, RandomStream) else rng
    region = region or domain.carrier
    mass = domain.total_mass(region)
    n = int(gen.poisson(mass))
    coords = geometry.sample_uniform(domain.space, region, n, gen)
    times = None
    if domain.is_space_time:
        times = domain.time_measure.sample(n, gen)
    marks = domain.mark_law.sample(n, gen)
    return Configuration(domain, coords, times, marks, np.arange(n, dtype=np.int64))


# ---------------------------------------------------------------------------
# configuration algebra


def augment(config: Configuration, extra: Sequence[MarkedPoint]) -> Configuration:
    """Union (as a multiset of locations) of config and up to 7 extra points.

    Extra points with id -1 receive fresh ids above the current maximum.
    Re-using the id of an existing point is an error: ids identify points.
    """
    if len(extra) == 0:
        return config
    if len(extra) > 7:
        raise InputError("augment accepts at most 7 extra points")
    next_id = int(config.ids[-1]) + 1 if len(config) else 0
    new_ids = []
    for p in extra:
        if p.id is None or p.id < 0:
            new_ids.append(next_id)
            next_id += 1
        else:
            new_ids.append(int(p.id))
    all_ids = np.concatenate([config.ids, np.asarray(new_ids, dtype=np.int64)])
    if len(np.unique(all_ids)) != len(all_ids):
        raise InputError("augment would duplicate an existing point id")
    coords = np.vstack([config.coords] + [np.asarray(p.loc, float)[None, :] for p in extra])
    marks = np.concatenate([config.marks, [p.mark for p in extra]])
    times = None
    if config.times is not None:
        for p in extra:
            if p.time is None:
                raise DomainError("extra points on a space-time domain need times")
        times = np.concatenate([config.times, [p.time for p in extra]])
    order = np.argsort(all_ids)
    return Configuration(
        config.domain, coords[order], None if times is None else times[order],
        marks[order], all_ids[order],
    )


def restrict_space(config: Configuration, center: np.ndarray, r: float) -> Configuration:
    """Points of config strictly inside the open ball B_r(center)."""
    if r < 0:
        raise InputError("radius must be non-negative")
    if len(config) == 0 or math.isinf(r):
        return config
    d = geometry.distances_to(config.domain.space, config.coords, np.asarray(center, float))
    return config.take(d < r)


def restrict_time(config: Configuration, s: float) -> Configuration:
    """Points of config with time strictly before s."""
    if config.times is None:
        raise DomainError("restrict_time requires a space-time domain")
    if math.isinf(s) and s > 0:
        return config
    return config.take(config.times < s)


# ---------------------------------------------------------------------------
# Mecke identity harness


@dataclass(frozen=True)
class MeckeReport:
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def combined_stderr(self) -> float:
        return self.lhs_stderr + self.rhs_stderr

    def consistent(self, n_sigma: float = 4.0) -> bool:
        return self.gap <= n_sigma * self.combined_stderr


def mecke_check(
    domain: SpaceTimeDomain,
    score,
    n_outer: int,
    n_inner: int,
    rng: RandomStream,
) -> MeckeReport:
    """Monte Carlo check of the Mecke identity for a score family.

    lhs estimates E sum_{z in P cap W} xi(z, P); rhs estimates
    integral over W of E xi(z, P + z) d(nu x mu), with the location drawn from
    the normalized restriction of nu to W and reweighted by the total mass.
    The two sides agree for Poisson input whatever the (integrable) score.
    """
    lhs_gen = rng.with_stream(1).generator()
    lhs_vals = np.empty(n_outer)
    for i in range(n_outer):
        config = sample_poisson(domain, lhs_gen)
        lhs_vals[i] = score.total(config)
    rhs_gen = rng.with_stream(2).generator()
    # nu(W) x mu-mass: the reweighting for sampling (z, t) from the
    # normalized restriction of nu x mu to W x time-support
    mass = domain.window_mass * domain.time_measure.total_mass
    rhs_vals = np.empty(n_inner)
    for i in range(n_inner):
        config = sample_poisson(domain, rhs_gen)
        loc = geometry.sample_uniform(domain.space, domain.window, 1, rhs_gen)[0]
        t = None
        if domain.is_space_time:
            t = float(domain.time_measure.sample(1, rhs_gen)[0])
        p = make_point(domain, loc, time=t, gen=rhs_gen)
        rhs_vals[i] = score.evaluate(p, config) * mass
    return MeckeReport(
        lhs=float(np.mean(lhs_vals)),
        lhs_stderr=float(np.std(lhs_vals, ddof=1) / math.sqrt(n_outer)),
        rhs=float(np.mean(rhs_vals)),
        rhs_stderr=float(np.std(rhs_vals, ddof=1) / math.sqrt(n_inner)),
    )
