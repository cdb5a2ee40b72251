"""Acceptance suite: one test per shipped criterion, each printing a
PASS/FAIL line.  Run with `pytest tests/test_acceptance.py -v -s`.

The heavy criteria (Mecke at 1e5 replications, the CLT rate study at
n = 2e4 per window) run in minutes; the whole suite is budgeted well under
the stated runtime caps and asserts them.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import kstest

from conftest import coupling_moment_gap
from poissonclt import geometry as G
from poissonclt import localization as L
from poissonclt import malliavin as M
from poissonclt import oracle as O
from poissonclt import process as P
from poissonclt.experiments import CountScore, ExperimentConfig, run_clt_study
from poissonclt.growth import BirthGrowthConfig, acceptance_decay, simulate_acceptance
from poissonclt.laguerre import LaguerreConfig, boundary_scan_oracle_1d, is_retained
from poissonclt.rng import RandomStream
from poissonclt.scores import (
    IsolatedScore,
    KnnScore,
    KnnScoreConfig,
    UStatKernel,
    UStatScore,
)

TORUS10 = P.space_domain(G.flat_torus(2, 10.0))


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


# -------------------------------------------------------------------- 1


@pytest.mark.parametrize(
    "name,family",
    [
        ("isolated rho=0.3", IsolatedScore(0.3)),
        ("edge delta=0.2", UStatScore(UStatKernel(2, 0.2))),
        ("knn k=1 alpha=1", KnnScore(KnnScoreConfig(1, 1.0))),
    ],
    ids=["isolated", "edge", "knn"],
)
def test_criterion_1_mecke_identity(name, family):
    start = time.perf_counter()
    n = 100_000
    rep = P.mecke_check(TORUS10, family, n, n, RandomStream(101))
    elapsed = time.perf_counter() - start
    ok = rep.gap <= 4.0 * rep.combined_stderr and elapsed <= 300.0
    _report(
        1, ok,
        f"Mecke {name}: |lhs-rhs|={rep.gap:.4f} <= 4*(se={rep.combined_stderr:.4f}),"
        f" n={n}, {elapsed:.0f}s",
    )


# -------------------------------------------------------------------- 2


def test_criterion_2_closed_form_means():
    n = 20_000
    iso = IsolatedScore(0.3)
    vals = np.array(
        [iso.total(P.sample_poisson(TORUS10, RandomStream(102, 0, i))) for i in range(n)]
    )
    mean_iso = float(np.mean(vals))
    se_iso = float(np.std(vals, ddof=1) / math.sqrt(n))
    want_iso = O.torus_isolated_mean(100.0, 0.3, 2, 10.0)

    edge = UStatScore(UStatKernel(2, 0.2))
    vals_e = np.array(
        [edge.total(P.sample_poisson(TORUS10, RandomStream(103, 0, i))) for i in range(n)]
    )
    mean_e = float(np.mean(vals_e))
    se_e = float(np.std(vals_e, ddof=1) / math.sqrt(n))
    want_e = O.torus_edge_mean(100.0, 0.2, 2, 10.0)

    ok = abs(mean_iso - want_iso) <= 3 * se_iso and abs(mean_e - want_e) <= 3 * se_e
    _report(
        2, ok,
        f"isolated mean {mean_iso:.3f} vs {want_iso:.3f} (3se={3*se_iso:.3f}); "
        f"edge mean {mean_e:.4f} vs {want_e:.4f} (3se={3*se_e:.4f})",
    )


# -------------------------------------------------------------------- 3


def test_criterion_3_hyperbolic_sampler():
    space = G.hyperbolic_ball(2, 4.0)
    gen = RandomStream(104).generator()
    pts = G.sample_uniform(space, G.BallWindow(4.0), 100_000, gen)
    r = np.arccosh(np.maximum(pts[:, 0], 1.0))
    res = kstest(r, lambda x: (np.cosh(x) - 1.0) / (math.cosh(4.0) - 1.0))
    vol = G.ball_volume(space, 1.0)
    want = 2.0 * math.pi * (math.cosh(1.0) - 1.0)
    ok = res.pvalue > 0.01 and abs(vol - want) <= 1e-9
    _report(
        3, ok,
        f"radial KS p={res.pvalue:.3f} (n=1e5); ball_volume(1)={vol:.12f} "
        f"matches 2pi(cosh1-1) to {abs(vol-want):.1e}",
    )


# -------------------------------------------------------------------- 4


def test_criterion_4_difference_operator_algebra():
    dom = P.space_domain(G.flat_torus(2, 5.0))
    F = M.ScoreSumFunctional(UStatScore(UStatKernel(2, 0.4)))
    gen = RandomStream(105).generator()
    exact = 0
    for trial in range(1000):
        chi = P.sample_poisson(dom, RandomStream(106, 0, trial))
        p = P.make_point(dom, gen.uniform(0, 5, 2), gen=gen)
        q = P.make_point(dom, gen.uniform(0, 5, 2), gen=gen)
        a, b = sorted((p, q), key=M._point_sort_key)
        nested = M.diff1(F, P.augment(chi, [a]), b) - M.diff1(F, chi, b)
        d2 = M.diff2(F, chi, p, q)
        exact += d2 == nested == M.diff2(F, chi, q, p)
    bit_ok = exact == 1000

    dom100 = P.space_domain(G.flat_torus(2, 10.0))  # nu(W) = 100
    g = M.estimate_gammas(
        M.ScoreSumFunctional(CountScore()), dom100,
        {"n_outer_x": 12, "n_outer_y": 12, "n_inner": 15, "n_var": 500},
        RandomStream(107),
    )
    zeros_ok = all(
        g.gamma[i] <= 5 * g.stderr[i] + 1e-12 for i in (1, 2, 5, 6)
    )
    g4_ok = abs(g.gamma[4] - 20.0) <= 3 * g.stderr[4] + 1e-9
    ok = bit_ok and zeros_ok and g4_ok
    _report(
        4, ok,
        f"diff2 = nested diff1 bit-exact {exact}/1000; linear-functional "
        f"gammas (1,2,5,6)=({g.gamma[1]:.3g},{g.gamma[2]:.3g},{g.gamma[5]:.3g},"
        f"{g.gamma[6]:.3g}) within 5se of 0; gamma4={g.gamma[4]:.6f} vs 20",
    )


# -------------------------------------------------------------------- 5


@pytest.mark.parametrize("model", ["count", "isolated"], ids=["count", "isolated"])
def test_criterion_5_clt_rate_law(model):
    start = time.perf_counter()
    spec = {"name": model} if model == "count" else {"name": model, "rho": 0.3}
    cfg = ExperimentConfig(
        {
            "model": spec,
            "space": {"kind": "flat_torus", "dim": 2},
            "lambda_grid": [64, 128, 256, 512, 1024, 2048, 4096],
            "n_samples": 20_000,
            "seed": 108,
        }
    )
    result = run_clt_study(cfg)
    elapsed = time.perf_counter() - start
    lo, hi = result.slope_ci
    ok = (
        -0.75 <= result.slope <= -0.30
        and hi < 0.0
        and elapsed <= 7200.0
    )
    _report(
        5, ok,
        f"{model}: slope {result.slope:.3f} in [-0.75, -0.30], bootstrap CI "
        f"({lo:.3f}, {hi:.3f}) excludes 0; d_K {result.d_k[0]:.4f} -> "
        f"{result.d_k[-1]:.4f}; {elapsed:.0f}s",
    )


# -------------------------------------------------------------------- 6


def test_criterion_6_oracle_equivalence():
    gen = RandomStream(109).generator()
    space = G.flat_torus(2, 12.0)
    bg_exact = 0
    for _ in range(1000):
        n = int(gen.integers(1, 201))
        locs = gen.uniform(0, 12, size=(n, 2))
        times = gen.uniform(0, 6.0, size=n)
        speeds = 0.1 + gen.exponential(1.0, size=n)
        fast = simulate_acceptance(space, locs, times, speeds)
        naive = O.naive_birth_growth(space, locs, times, speeds)
        bg_exact += np.array_equal(fast, naive)

    cfg = LaguerreConfig(t=0.5, beta=0.0, dim=1, h_max=6.0)
    lag_exact = 0
    for _ in range(1000):
        n = int(gen.integers(1, 101))
        xs = gen.uniform(-10, 10, size=(n, 1))
        hs = gen.uniform(0.01, 6.0, size=n)
        x, h = float(gen.uniform(-10, 10)), float(gen.uniform(0.01, 6.0))
        lp = is_retained(np.array([x]), h, xs, hs, cfg)
        scan = boundary_scan_oracle_1d(x, h, xs[:, 0], hs, cfg)
        lag_exact += lp == scan
    ok = bg_exact == 1000 and lag_exact == 1000
    _report(
        6, ok,
        f"birth-growth flags exact {bg_exact}/1000 (n<=200); laguerre "
        f"retention exact {lag_exact}/1000 (d=1, n<=100)",
    )


# -------------------------------------------------------------------- 7


def test_criterion_7_localization_profiles():
    dom = P.space_domain(G.flat_torus(2, 6.0))
    iso_curve = L.estimate_psi(
        IsolatedScore(0.3), dom, [0.15, 0.3, 0.6, 1.2], 200, RandomStream(110)
    )
    iso_ok = bool(np.all(iso_curve.raw[iso_curve.grid >= 0.3] == 0.0))

    ustat_curve = L.estimate_psi(
        UStatScore(UStatKernel(2, 0.2)), dom, [0.1, 0.2, 0.5, 1.0], 200,
        RandomStream(111),
    )
    ustat_ok = bool(np.all(ustat_curve.raw[ustat_curve.grid >= 0.2] == 0.0))

    cfg = BirthGrowthConfig(rho_min=0.01, tail_rate=40.0)
    fit = acceptance_decay(
        cfg, 2, 1000.0, np.arange(2.0, 10.5, 1.0), 400, RandomStream(112)
    )
    logs = np.log(fit.p_hat)
    bg_ok = (
        bool(np.all(fit.p_hat > 0))
        and bool(np.all(np.diff(logs) < 0))
        and fit.rate_ci[0] > 0
    )
    ok = iso_ok and ustat_ok and bg_ok
    _report(
        7, ok,
        f"isolated psi-hat = 0 for r >= rho: {iso_ok}; u-stat psi-hat = 0 for "
        f"r >= delta: {ustat_ok}; birth-growth log phi-hat strictly decreasing "
        f"with rate {fit.rate:.3f}, CI ({fit.rate_ci[0]:.3f}, {fit.rate_ci[1]:.3f})",
    )


# -------------------------------------------------------------------- 8


def test_criterion_8_mixed_moment_lemma_suite():
    gen = RandomStream(113).generator()
    violations = 0
    trials = 10_000
    for _ in range(trials):
        q = int(gen.integers(1, 5))
        l_bound = float(gen.choice([1.0, 2.0]))
        alpha = float(gen.choice([0.0, 0.05, 0.2]))
        gap = coupling_moment_gap(gen, q, l_bound, alpha)
        if gap > L.mixed_moment_gap_bound(q, 2.0 * alpha, L=l_bound) + 1e-12:
            violations += 1
    _report(
        8, violations == 0,
        f"bounded mixed-moment bound 2qL^q(2a): {violations} violations in "
        f"{trials} exact random couplings",
    )


# -------------------------------------------------------------------- 9


def test_criterion_9_bound_assembly_exact():
    lam = 1024.0
    ing = L.BoundIngredients(
        i_psi={L.THETA_K: 1.0, L.THETA_W: 1.0},
        i_phi={L.THETA_PRIME_K: 1.0, L.THETA_PRIME_W: 1.0},
        g={L.THETA_PRIME_K: lam, L.THETA_PRIME_W: lam},
        nu_w=lam,
    )
    rep = L.assemble_theorem_bound(ing, 1.0, lam, "space_time")
    unit_ok = abs(rep.d_k - lam ** -0.5) <= 1e-12 * lam ** -0.5

    m5, var_h, nu_w, i_psi = 2.7, 310.0, 125.0, 1.9
    ing_w = L.BoundIngredients(
        i_psi={L.THETA_K: i_psi, L.THETA_W: i_psi}, i_phi={}, g={}, nu_w=nu_w
    )
    rep_w = L.assemble_theorem_bound(ing_w, m5, var_h, "x_equals_w")
    want = (1.0 * i_psi ** 3) * m5 ** 0.4 * math.sqrt(nu_w) / var_h
    w_ok = abs(rep_w.d_k - want) <= 1e-12 * want
    ok = unit_ok and w_ok
    _report(
        9, ok,
        f"unit ingredients give d_K = lambda^-1/2 exactly ({rep.d_k:.6g}); "
        f"X=W corollary form reproduced to {abs(rep_w.d_k - want):.2e}",
    )


# -------------------------------------------------------------------- 10


def test_criterion_10_hyperbolic_condition_checker():
    space = G.hyperbolic_ball(2, 10.0)
    theta = 1.0 / 240.0
    quad_model = L.ExponentialProfile(1.0, 1.0, 2.0)  # tau(r) = r^2
    lin_model = L.ExponentialProfile(1.0, 1.0, 1.0)   # tau(r) = r
    quad_pass = L.hyperbolic_psi_condition(quad_model.tau, 2)
    lin_pass = L.hyperbolic_psi_condition(lin_model.tau, 2)
    quad_int = L.integral_I_psi(quad_model, space, theta, unbounded_carrier=True)
    with pytest.warns(RuntimeWarning):
        lin_int = L.integral_I_psi(lin_model, space, theta, unbounded_carrier=True)
    ok = (
        quad_pass
        and not lin_pass
        and math.isfinite(quad_int)
        and math.isinf(lin_int)
    )
    _report(
        10, ok,
        f"tau=r^2 passes (I_psi={quad_int:.4f} finite); tau=r fails "
        f"(I_psi diverges: {lin_int})",
    )
