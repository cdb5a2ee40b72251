import math

import numpy as np
import pytest

from conftest import coupling_moment_gap
from poissonclt import geometry as G
from poissonclt import localization as L
from poissonclt import malliavin as M
from poissonclt import process as P
from poissonclt.errors import InputError
from poissonclt.growth import BirthGrowthConfig, BirthGrowthScore, bg_domain
from poissonclt.rng import RandomStream
from poissonclt.scores import IsolatedScore, UStatKernel, UStatScore, canonical_restrictions


def torus_domain(side=6.0):
    return P.space_domain(G.flat_torus(2, side))


class TestEstimatePsi:
    def test_isolated_exact_zero_beyond_rho(self):
        rho = 0.5
        curve = L.estimate_psi(
            IsolatedScore(rho), torus_domain(), [0.25, 0.5, 1.0, 2.0], 120,
            RandomStream(1),
        )
        grid = curve.grid
        assert np.all(curve.raw[grid >= rho] == 0.0)
        assert np.all(curve.profile[grid >= rho] == 0.0)

    def test_profile_convention_at_zero(self):
        curve = L.estimate_psi(
            IsolatedScore(0.5), torus_domain(), [0.0, 1.0], 40, RandomStream(2)
        )
        assert curve.profile[0] == 2.0

    def test_ustat_zero_beyond_delta(self):
        delta = 0.4
        curve = L.estimate_psi(
            UStatScore(UStatKernel(2, delta)), torus_domain(),
            [0.2, 0.4, 0.8, 1.5], 120, RandomStream(3),
        )
        assert np.all(curve.raw[curve.grid >= delta] == 0.0)
        assert np.all(curve.raw[curve.grid < delta] > 0.0)

    def test_raw_near_monotone_under_crn(self):
        curve = L.estimate_psi(
            IsolatedScore(0.8), torus_domain(), [0.2, 0.4, 0.6], 200,
            RandomStream(4),
        )
        widths = curve.hi - curve.lo
        for i in range(len(curve.grid) - 1):
            assert curve.raw[i] >= curve.raw[i + 1] - 2 * (widths[i] + widths[i + 1])


class TestEstimatePhi:
    def test_birth_growth_phi_decays(self):
        cfg = BirthGrowthConfig(rho_min=0.02, tail_rate=20.0)
        dom = bg_domain(2, 36.0, cfg, 8.0)
        curve = L.estimate_phi(
            BirthGrowthScore(cfg), dom, [2.0, 5.0, 8.0], 150, RandomStream(5),
            policies=("none",),
        )
        assert np.all(np.diff(curve.raw) < 0)

    def test_space_only_rejected(self):
        with pytest.raises(InputError):
            L.estimate_phi(IsolatedScore(0.3), torus_domain(), [1.0], 10,
                           RandomStream(6))


class TestEstimateM5:
    def test_indicator_exactly_one(self):
        assert L.estimate_m5(IsolatedScore(0.3), torus_domain(), 50,
                             RandomStream(7)) == 1.0

    def test_constant_two_gives_32(self):
        fam = canonical_restrictions(lambda p, chi: 2.0)
        val = L.estimate_m5(fam, torus_domain(), 50, RandomStream(8))
        assert val == pytest.approx(32.0, rel=1e-12)


class TestIntegralIPsi:
    def test_indicator_euclid_closed_form(self):
        # psi = 2 1{r < delta} on R^2: I = max(1, 2^theta * nu(B_{2 delta}))
        delta = 0.7
        theta = 1.0 / 240.0
        model = L.IndicatorProfile(2.0, delta)
        space = G.euclidean_box(2, 100.0)
        want = max(1.0, 2.0 ** theta * 4.0 * math.pi * delta ** 2)
        got = L.integral_I_psi(model, space, theta, unbounded_carrier=True)
        assert got == pytest.approx(want, rel=1e-12)

    def test_zero_profile_floors_at_one(self):
        model = L.IndicatorProfile(2.0, 0.0)
        space = G.euclidean_box(2, 100.0)
        assert L.integral_I_psi(model, space, 0.1, unbounded_carrier=True) == 1.0

    def test_exponential_euclid_analytic(self):
        # psi(u/2) = e^{-rate u / 2}: integral = 2 pi (2/(theta rate))^2
        rate, theta = 3.0, 0.25
        model = L.ExponentialProfile(1.0, rate, 1.0)
        space = G.euclidean_box(2, 100.0)
        want = max(1.0, 8.0 * math.pi / (theta * rate) ** 2)
        got = L.integral_I_psi(model, space, theta, unbounded_carrier=True)
        assert got == pytest.approx(want, rel=1e-5)

    def test_hyperbolic_superlinear_finite(self):
        model = L.ExponentialProfile(1.0, 1.0, 2.0)  # tau(r) = r^2
        space = G.hyperbolic_ball(2, 10.0)
        val = L.integral_I_psi(model, space, 1.0 / 240.0, unbounded_carrier=True)
        assert math.isfinite(val) and val >= 1.0

    def test_hyperbolic_linear_diverges(self):
        model = L.ExponentialProfile(1.0, 1.0, 1.0)  # tau(r) = r
        space = G.hyperbolic_ball(2, 10.0)
        with pytest.warns(RuntimeWarning):
            val = L.integral_I_psi(model, space, 1.0 / 240.0, unbounded_carrier=True)
        assert math.isinf(val)


class TestIntegralIPhi:
    def test_dirac_two_power(self):
        tp = 1.0 / 120.0
        got = L.integral_I_phi(L.ExponentialProfile(2.0, 1.0), P.DiracZero(), tp)
        assert got == pytest.approx(max(1.0, 2.0 ** tp), rel=1e-12)

    def test_lebesgue_quadrature(self):
        tp = 0.5
        model = L.ExponentialProfile(1.0, 2.0, 1.0)
        # int_0^T e^{-t} dt with T = 6
        want = max(1.0, 1.0 - math.exp(-6.0))
        got = L.integral_I_phi(model, P.LebesgueInterval(6.0), tp)
        assert got == pytest.approx(want, rel=1e-6)


class TestIntegralGq:
    def test_x_equals_w(self):
        model = L.IndicatorProfile(2.0, 0.5)
        space = G.flat_torus(2, 10.0)
        q = 1.0 / 120.0
        got = L.integral_G_q(model, space, G.full_window(space), q, x_equals_w=True)
        assert got == pytest.approx(2.0 ** q * 100.0, rel=1e-12)

    def test_q_zero_unbounded_diverges(self):
        model = L.ExponentialProfile(1.0, 1.0, 1.0)
        space = G.euclidean_box(2, 10.0)
        with pytest.warns(RuntimeWarning):
            val = L.integral_G_q(model, space, G.full_window(space), 0.0)
        assert math.isinf(val)

    def test_halo_scaling_euclidean(self):
        # exponential psi: the halo term grows like the window surface,
        # O(lambda^{(d-1)/d}) in d = 2
        model = L.ExponentialProfile(1.0, 2.0, 1.0)
        q = 1.0 / 120.0
        vals = []
        for lam in (1e6, 16e6):
            side = math.sqrt(lam)
            space = G.euclidean_box(2, side)
            g = L.integral_G_q(model, space, G.full_window(space), q)
            vals.append(g - 2.0 ** q * lam)
        ratio = vals[1] / vals[0]
        assert 3.5 <= ratio <= 4.05

    def test_hyperbolic_halo_finite(self):
        model = L.ExponentialProfile(1.0, 1000.0, 2.0)
        space = G.hyperbolic_ball(2, 8.0)
        g = L.integral_G_q(model, space, G.BallWindow(4.0), 1.0 / 120.0,
                           carrier_radius=8.0)
        head = 2.0 ** (1.0 / 120.0) * G.ball_volume(space, 4.0)
        assert g >= head
        assert math.isfinite(g)


class TestHyperbolicCondition:
    def test_quadratic_passes(self):
        assert L.hyperbolic_psi_condition(lambda r: r ** 2, 2)

    def test_linear_fails(self):
        assert not L.hyperbolic_psi_condition(lambda r: r, 2)

    def test_agrees_with_integral_verdicts(self):
        space = G.hyperbolic_ball(2, 10.0)
        theta = 1.0 / 240.0
        quad = L.ExponentialProfile(1.0, 1.0, 2.0)
        lin = L.ExponentialProfile(1.0, 1.0, 1.0)
        assert L.hyperbolic_psi_condition(quad.tau, 2)
        assert math.isfinite(L.integral_I_psi(quad, space, theta, True))
        assert not L.hyperbolic_psi_condition(lin.tau, 2)
        with pytest.warns(RuntimeWarning):
            assert math.isinf(L.integral_I_psi(lin, space, theta, True))


class TestAssembleBound:
    def _ingredients(self, g_val, i_psi=1.0, i_phi=None, nu_w=1.0, c=1.0):
        thetas = {L.THETA_K: i_psi, L.THETA_W: i_psi}
        phis = {}
        if i_phi is not None:
            phis = {L.THETA_PRIME_K: i_phi, L.THETA_PRIME_W: i_phi}
        gs = {L.THETA_PRIME_K: g_val, L.THETA_PRIME_W: g_val}
        return L.BoundIngredients(thetas, phis, gs, nu_w, c)

    def test_unit_ingredients_rate(self):
        lam = 1024.0
        ing = self._ingredients(lam, i_phi=1.0, nu_w=lam)
        rep = L.assemble_theorem_bound(ing, 1.0, lam, "space_time")
        assert rep.d_k == lam ** -0.5
        assert rep.modulo_universal_constant

    def test_x_equals_w_formula(self):
        lam = 77.0
        m5 = 3.0
        ing = self._ingredients(123.0, i_psi=1.7, nu_w=lam)
        rep = L.assemble_theorem_bound(ing, m5, 2.0 * lam, "space_only")
        rep_w = L.assemble_theorem_bound(
            L.BoundIngredients(ing.i_psi, {}, {}, lam), m5, 2.0 * lam, "x_equals_w"
        )
        want = 1.7 ** 3 * m5 ** 0.4 * math.sqrt(lam) / (2.0 * lam)
        assert rep_w.d_k == pytest.approx(want, rel=1e-12)
        assert rep.c_k == rep_w.c_k

    def test_variance_monotone(self):
        ing = self._ingredients(10.0, nu_w=10.0)
        a = L.assemble_theorem_bound(ing, 1.0, 10.0, "space_only")
        b = L.assemble_theorem_bound(ing, 1.0, 20.0, "space_only")
        assert b.d_k == pytest.approx(a.d_k / 2.0, rel=1e-12)

    def test_missing_ingredient_named(self):
        ing = L.BoundIngredients({L.THETA_K: 1.0}, {}, {}, 1.0)
        with pytest.raises(InputError, match="I_psi"):
            L.assemble_theorem_bound(ing, 1.0, 1.0, "space_only")

    def test_bounded_upgrade_exponents(self):
        up = L.BOUNDED_UPGRADE
        thetas = {L.THETA_K * up: 1.0, L.THETA_W * up: 1.0}
        gs = {L.THETA_PRIME_K * up: 4.0, L.THETA_PRIME_W * up: 4.0}
        ing = L.BoundIngredients(thetas, {}, gs, 4.0)
        rep = L.assemble_theorem_bound(ing, 1.0, 4.0, "space_only",
                                       bounded_scores=True)
        assert rep.factors["theta_K"] == pytest.approx(1.0 / 48.0)
        assert rep.factors["theta_prime_K"] == pytest.approx(1.0 / 24.0)
        assert rep.d_k == pytest.approx(math.sqrt(4.0) / 4.0, rel=1e-12)


class TestMixedMomentLemma:
    def test_bounded_example(self):
        assert L.mixed_moment_gap_bound(4, 0.1, L=1.0) == pytest.approx(0.8)

    def test_zero_alpha(self):
        assert L.mixed_moment_gap_bound(3, 0.0, L=2.0) == 0.0
        assert L.mixed_moment_gap_bound(3, 0.0, M=2.0, bounded=False) == 0.0

    def test_unbounded_example(self):
        # (36 q + 16) max(1, M^{q/(q+1)}) alpha^{1/(q+1)} at q=4, M=1, a=0.1
        got = L.mixed_moment_gap_bound(4, 0.1, M=1.0, bounded=False)
        assert got == pytest.approx(100.95317511683092, rel=1e-12)

    def test_alpha_range(self):
        with pytest.raises(InputError):
            L.mixed_moment_gap_bound(2, 2.5, L=1.0)

    def test_coupling_never_violates(self, gen):
        for _ in range(1000):
            q = int(gen.integers(1, 5))
            l_bound = float(gen.choice([1.0, 2.0]))
            alpha = float(gen.choice([0.0, 0.05, 0.2]))
            gap = coupling_moment_gap(gen, q, l_bound, alpha)
            assert gap <= L.mixed_moment_gap_bound(q, 2.0 * alpha, L=l_bound) + 1e-12


class TestDecayFit:
    def test_indicator_recovery(self):
        rs = [0.5, 1.0, 1.5, 2.0]
        vals = [1.2, 0.8, 0.0, 0.0]
        fit = L.fit_decay_model(rs, vals, 2)
        assert isinstance(fit.model, L.IndicatorProfile)
        assert fit.model.cutoff == 1.5

    def test_exponential_recovery(self):
        rs = np.linspace(0.5, 4.0, 8)
        vals = 1.7 * np.exp(-2.0 * rs)
        fit = L.fit_decay_model(rs, vals, 2)
        assert fit.abscissa == "exp"
        assert isinstance(fit.model, L.ExponentialProfile)
        assert fit.model.rate == pytest.approx(2.0, rel=1e-6)
        assert fit.model.amp == pytest.approx(1.7, rel=1e-6)

    def test_stretched_selection(self):
        rs = np.linspace(0.5, 3.0, 8)
        vals = np.exp(-1.1 * rs ** 2)
        fit = L.fit_decay_model(rs, vals, 2)
        assert fit.abscissa == "power_d"
        assert fit.model.power == 2.0


class TestFourthMomentDecay:
    def test_birth_growth_decay_in_time(self):
        # E (D_{(x,t)} H)^4 must decay in the birth time t: the envelope is a
        # power of the time-localization profile
        cfg = BirthGrowthConfig(rho_min=0.02, tail_rate=20.0)
        dom = bg_domain(2, 50.0, cfg, 8.0)
        F = M.ScoreSumFunctional(BirthGrowthScore(cfg))
        rng = RandomStream(30)
        t_grid = np.array([2.0, 4.0, 6.0, 8.0])
        n = 150
        moments = np.zeros(len(t_grid))
        for i in range(n):
            gen = rng.with_substream(i).generator()
            chi = P.sample_poisson(dom, gen)
            loc = G.sample_uniform(dom.space, dom.window, 1, gen)[0]
            for k, t in enumerate(t_grid):
                p = P.make_point(dom, loc, time=float(t), gen=gen)
                moments[k] += M.diff1(F, chi, p) ** 4
        moments /= n
        pos = moments > 0
        assert np.count_nonzero(pos) >= 3
        slope, se = _line_fit_with_se(t_grid[pos], np.log(moments[pos]))
        assert slope < 0
        assert slope + 1.96 * se < 0  # CI excludes zero


def _line_fit_with_se(x, y):
    a = np.vstack([np.ones_like(x), x]).T
    coef, res, *_ = np.linalg.lstsq(a, y, rcond=None)
    n = len(x)
    rss = float(res[0]) if res.size else float(np.sum((y - a @ coef) ** 2))
    sxx = float(np.sum((x - x.mean()) ** 2))
    se = math.sqrt(rss / max(n - 2, 1) / sxx)
    return float(coef[1]), se
