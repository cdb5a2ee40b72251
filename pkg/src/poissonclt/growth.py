"""Spatial birth-growth simulation with random unbounded speeds.

Seeds arrive at space-time points with an i.i.d. positive growth speed; a
seed is accepted when, at its birth time, it is not covered by the union of
the growing balls of previously accepted seeds.  The acceptance indicator is
exposed as a score family, and the module provides the time-localization
diagnostics used to pick the simulation's time-truncation horizon.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from poissonclt import geometry
from poissonclt.errors import ConfigError, InputError
from poissonclt.geometry import Space
from poissonclt.process import (
    Configuration,
    LebesgueInterval,
    MarkedPoint,
    MarkLaw,
    ShiftedExponential,
    SpaceTimeDomain,
)
from poissonclt.rng import RandomStream
from poissonclt.scores import ScoreFamily

_TIE_EPS = 1e-12
_TAIL_CHECK_DRAWS = 100_000


@dataclass(frozen=True)
class Seed:
    loc: np.ndarray
    time: float
    speed: float

    def __post_init__(self) -> None:
        if self.time < 0:
            raise InputError("birth times must be non-negative")
        if not self.speed > 0:
            raise InputError("growth speeds must be positive")


@dataclass(frozen=True)
class BirthGrowthConfig:
    """Model parameters: positive speed floor, exponential tail rate, horizon.

    The default speed law is rho_min + Exponential(tail_rate).  Construction
    draws 10^5 speeds and verifies the declared tail empirically: the
    survival function must obey P(R >= r) <= exp(tail_rate * rho_min) *
    exp(-tail_rate * r) up to Monte Carlo slack.  (A hard bound exp(-C r)
    for all r is unattainable for any law with a positive lower bound, so
    the constant absorbs the floor.)
    """

    rho_min: float = 0.1
    tail_rate: float = 1.0
    t0: float = math.inf
    speed_law: MarkLaw | None = None
    check_seed: int = 20_250_101

    def __post_init__(self) -> None:
        if not (self.rho_min > 0 and self.tail_rate > 0):
            raise ConfigError("rho_min and tail_rate must be positive")
        if not self.t0 > 0:
            raise ConfigError("time horizon must be positive")
        law = self.speed_law or ShiftedExponential(self.rho_min, self.tail_rate)
        object.__setattr__(self, "speed_law", law)
        self._check_tail()

    def _check_tail(self) -> None:
        gen = RandomStream(self.check_seed).generator()
        draws = self.speed_law.sample(_TAIL_CHECK_DRAWS, gen)
        if float(np.min(draws)) < self.rho_min - 1e-12:
            raise ConfigError("speed law violates the positive lower bound")
        c = self.tail_rate
        for j in range(1, 6):
            r = self.rho_min + j / c
            target = math.exp(-float(j))  # = exp(c rho_min) exp(-c r)
            emp = float(np.mean(draws >= r))
            slack = 5.0 * math.sqrt(target / _TAIL_CHECK_DRAWS)
            if emp > target + slack:
                raise ConfigError(
                    f"speed law violates the declared tail at r={r:.3g}: "
                    f"empirical {emp:.4g} > {target:.4g}"
                )


def bg_domain(
    dim: int,
    lam: float,
    cfg: BirthGrowthConfig,
    t_max: float,
) -> SpaceTimeDomain:
    """Birth-growth domain: box window of volume lam, Lebesgue time on [0, t_max]."""
    space = geometry.euclidean_box(dim, lam ** (1.0 / dim))
    w = geometry.full_window(space)
    return SpaceTimeDomain(space, w, w, LebesgueInterval(t_max), cfg.speed_law)


# ---------------------------------------------------------------------------
# acceptance dynamics


def _perturb_ties(times: np.ndarray) -> np.ndarray:
    order = np.argsort(times, kind="stable")
    t = times[order].copy()
    dup = np.flatnonzero(np.diff(t) == 0.0)
    if dup.size:
        warnings.warn(
            f"{dup.size} tied birth times perturbed by {_TIE_EPS}", RuntimeWarning
        )
        for i in range(1, len(t)):
            if t[i] <= t[i - 1]:
                t[i] = t[i - 1] + _TIE_EPS
    out = np.empty_like(times)
    out[order] = t
    return out


def simulate_acceptance(
    space: Space,
    locs: np.ndarray,
    times: np.ndarray,
    speeds: np.ndarray,
    t0: float = math.inf,
) -> np.ndarray:
    """Acceptance flags of the chronological sweep.

    Seed j is accepted iff t_j <= t0 and its location is outside every ball
    B(loc_i, (t_j - t_i) * speed_i) of previously accepted seeds i.  Flags
    are aligned with the input order; the sweep sorts internally, so input
    permutations do not change the outcome.  Tied birth times are perturbed
    by 1e-12 with a warning (they are a.s. distinct under the model).
    """
    locs = np.asarray(locs, dtype=float).reshape(len(times), -1)
    times = np.asarray(times, dtype=float)
    speeds = np.asarray(speeds, dtype=float)
    if np.any(times < 0):
        raise InputError("birth times must be non-negative")
    n = len(times)
    flags = np.zeros(n, dtype=bool)
    if n == 0:
        return flags
    if len(np.unique(times)) != n:
        times = _perturb_ties(times)
    order = np.argsort(times, kind="stable")
    acc_locs = np.empty_like(locs)
    acc_times = np.empty(n)
    acc_speeds = np.empty(n)
    flat = space.kind in (geometry.EUCLIDEAN, geometry.TORUS)
    m = 0
    for j in order:
        if times[j] > t0:
            continue
        if m:
            radii = (times[j] - acc_times[:m]) * acc_speeds[:m]
            if flat:
                # squared distances: radii are positive after tie perturbation
                delta = np.abs(acc_locs[:m] - locs[j])
                if space.kind == geometry.TORUS:
                    delta = np.minimum(delta, space.extent - delta)
                d2 = np.einsum("ij,ij->i", delta, delta)
                if np.any(d2 < radii * radii):
                    continue
            else:
                if np.any(geometry.distances_to(space, acc_locs[:m], locs[j]) < radii):
                    continue
        flags[j] = True
        acc_locs[m] = locs[j]
        acc_times[m] = times[j]
        acc_speeds[m] = speeds[j]
        m += 1
    return flags


def verify_acceptance(
    space: Space,
    locs: np.ndarray,
    times: np.ndarray,
    speeds: np.ndarray,
    flags: np.ndarray,
    t0: float = math.inf,
) -> bool:
    """Post-hoc consistency: accepted seeds are uncovered at birth, rejected
    in-horizon seeds are covered.  Used by tests after each run."""
    locs = np.asarray(locs, dtype=float)
    order = np.argsort(times, kind="stable")
    for j in order:
        earlier = [
            i for i in order
            if flags[i] and times[i] < times[j]
        ]
        covered = any(
            geometry.distance(space, locs[i], locs[j]) < (times[j] - times[i]) * speeds[i]
            for i in earlier
        )
        if flags[j]:
            if covered or times[j] > t0:
                return False
        else:
            if times[j] <= t0 and not covered:
                return False
    return True


# ---------------------------------------------------------------------------
# score family


class BirthGrowthScore(ScoreFamily):
    """Acceptance indicator of the evaluated seed within chi + seed.

    Space restriction is restriction-of-input to the open ball; time
    restriction clips to births before s with the 1{t < s} prefactor.
    Only seeds born strictly before the evaluated one can affect it, so the
    sweep drops later seeds up front.
    """

    moment_hint = 1.0
    interaction_radius = None  # unbounded speeds: no deterministic radius

    def __init__(self, cfg: BirthGrowthConfig):
        self.cfg = cfg

    def evaluate(self, p: MarkedPoint, chi: Configuration) -> float:
        if p.time is None:
            raise InputError("birth-growth scores need a time coordinate")
        if p.time > self.cfg.t0:
            return 0.0
        rows = np.flatnonzero((chi.ids != p.id) & (chi.times < p.time))
        locs = np.vstack([chi.coords[rows], np.asarray(p.loc, float)[None, :]])
        times = np.concatenate([chi.times[rows], [p.time]])
        speeds = np.concatenate([chi.marks[rows], [p.mark]])
        flags = simulate_acceptance(chi.domain.space, locs, times, speeds, self.cfg.t0)
        return float(flags[-1])

    def total(self, config: Configuration) -> float:
        mask = config.window_mask()
        flags = simulate_acceptance(
            config.domain.space, config.coords, config.times, config.marks, self.cfg.t0
        )
        return float(np.count_nonzero(flags & mask))


# ---------------------------------------------------------------------------
# time-localization diagnostics


@dataclass(frozen=True)
class TimeDecayFit:
    s_grid: np.ndarray
    p_hat: np.ndarray
    rate: float
    rate_stderr: float
    intercept: float

    @property
    def rate_ci(self) -> tuple[float, float]:
        return (self.rate - 1.96 * self.rate_stderr, self.rate + 1.96 * self.rate_stderr)


def acceptance_decay(
    cfg: BirthGrowthConfig,
    dim: int,
    lam: float,
    s_grid,
    n_trials: int,
    rng: RandomStream,
) -> TimeDecayFit:
    """Monte Carlo estimate of P(a seed born at time s is accepted) and the
    log-linear decay rate fitted over the grid.

    This is the worst-case-placement time-localization curve of the
    acceptance score (a seed with birth time exactly s).  One acceptance
    sweep per trial serves the whole grid: the inserted seed's flag depends
    only on the seeds accepted before s, which do not depend on s.
    """
    s_grid = np.asarray(sorted(s_grid), dtype=float)
    t_max = float(np.max(s_grid))
    domain = bg_domain(dim, lam, cfg, t_max)
    from poissonclt.process import sample_poisson

    hits = np.zeros(len(s_grid))
    for trial in range(n_trials):
        gen = rng.with_substream(trial).generator()
        chi = sample_poisson(domain, gen)
        flags = simulate_acceptance(
            domain.space, chi.coords, chi.times, chi.marks, cfg.t0
        )
        loc = geometry.sample_uniform(domain.space, domain.window, 1, gen)[0]
        acc = np.flatnonzero(flags)
        if acc.size == 0:
            hits += s_grid <= cfg.t0
            continue
        d = geometry.distances_to(domain.space, chi.coords[acc], loc)
        at, ar = chi.times[acc], chi.marks[acc]
        for k, s in enumerate(s_grid):
            if s > cfg.t0:
                continue
            covered = bool(np.any((at < s) & (d < (s - at) * ar)))
            hits[k] += not covered
    p_hat = hits / n_trials
    pos = p_hat > 0
    if np.count_nonzero(pos) < 2:
        raise ConfigError("acceptance probability vanished on the whole grid")
    slope, intercept, se = _weighted_line_fit(
        s_grid[pos], np.log(p_hat[pos]), n_trials, p_hat[pos]
    )
    return TimeDecayFit(s_grid, p_hat, -slope, se, intercept)


def _weighted_line_fit(x, y, n_trials, p):
    """Least squares with binomial delta-method weights on log frequencies."""
    w = n_trials * p / np.maximum(1.0 - p, 1e-12)  # 1/Var(log p_hat)
    wm_x = np.sum(w * x) / np.sum(w)
    wm_y = np.sum(w * y) / np.sum(w)
    sxx = np.sum(w * (x - wm_x) ** 2)
    slope = float(np.sum(w * (x - wm_x) * (y - wm_y)) / sxx)
    se = float(1.0 / math.sqrt(sxx))
    return slope, wm_y - slope * wm_x, se


def pick_time_truncation(nu_w: float, eps: float, rate: float) -> float:
    """Simulation horizon T_max = max(4, log(nu(W)/eps) / rate).

    After T_max, the expected number of further accepted seeds is of order
    eps times the decay fit's constant, by the exponential time decay.
    """
    if rate <= 0 or not math.isfinite(rate):
        raise ConfigError("need a positive fitted decay rate")
    if eps <= 0:
        raise ConfigError("bias budget must be positive")
    arg = nu_w / eps
    if arg <= 1.0:
        return 4.0
    return max(4.0, math.log(arg) / rate)
