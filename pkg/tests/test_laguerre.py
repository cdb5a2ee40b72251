import math

import numpy as np
import pytest

from poissonclt import geometry as G
from poissonclt import process as P
from poissonclt.errors import UnsupportedError
from poissonclt.laguerre import (
    LaguerreConfig,
    LaguerreScore,
    auto_h_max,
    auto_margin,
    boundary_scan_oracle_1d,
    count_thinned,
    is_retained,
    laguerre_domain,
)
from poissonclt.rng import RandomStream

CFG1 = LaguerreConfig(t=0.5, beta=0.0, dim=1, h_max=5.0)
CFG2 = LaguerreConfig(t=0.5, beta=0.0, dim=2, h_max=4.0)


def random_instance_1d(gen, n, span=8.0):
    xs = gen.uniform(-span, span, size=(n, 1))
    hs = gen.uniform(0.01, 5.0, size=n)
    return xs, hs


class TestRetention1D:
    def test_no_competitors(self):
        assert is_retained(np.array([0.0]), 1.0, np.zeros((0, 1)), np.zeros(0), CFG1)

    def test_same_location_higher_weight_loses(self):
        assert not is_retained(
            np.array([0.0]), 5.0, np.array([[0.0]]), np.array([1e-9]), CFG1
        )

    def test_congruent_pair_both_survive(self):
        # two congruent paraboloids at distinct centers never cover each other
        assert is_retained(np.array([0.0]), 1.0, np.array([[1.0]]), np.array([1.0]), CFG1)
        assert is_retained(np.array([1.0]), 1.0, np.array([[0.0]]), np.array([1.0]), CFG1)

    def test_matches_boundary_scan(self, gen):
        for _ in range(400):
            n = int(gen.integers(1, 50))
            xs, hs = random_instance_1d(gen, n)
            x, h = float(gen.uniform(-8, 8)), float(gen.uniform(0.01, 5.0))
            lp = is_retained(np.array([x]), h, xs, hs, CFG1)
            scan = boundary_scan_oracle_1d(x, h, xs[:, 0], hs, CFG1)
            assert lp == scan

    def test_monotone_in_competitors(self, gen):
        for _ in range(200):
            xs, hs = random_instance_1d(gen, 12)
            x, h = float(gen.uniform(-8, 8)), float(gen.uniform(0.01, 5.0))
            full = is_retained(np.array([x]), h, xs, hs, CFG1)
            part = is_retained(np.array([x]), h, xs[:6], hs[:6], CFG1)
            # adding constraints can only destroy retention
            assert part or not full

    def test_translation_equivariance(self, gen):
        for _ in range(100):
            xs, hs = random_instance_1d(gen, 10)
            x, h = float(gen.uniform(-4, 4)), float(gen.uniform(0.01, 5.0))
            v = float(gen.uniform(-20, 20))
            a = is_retained(np.array([x]), h, xs, hs, CFG1)
            b = is_retained(np.array([x + v]), h, xs + v, hs, CFG1)
            assert a == b

    def test_aperture_weight_scaling(self, gen):
        # the system depends on (t, h) only through t * h: (t, h) -> (ct, h/c)
        for _ in range(100):
            xs, hs = random_instance_1d(gen, 10)
            x, h = float(gen.uniform(-4, 4)), float(gen.uniform(0.01, 5.0))
            c = float(gen.uniform(0.2, 5.0))
            cfg_scaled = LaguerreConfig(t=CFG1.t * c, beta=0.0, dim=1, h_max=5.0)
            a = is_retained(np.array([x]), h, xs, hs, CFG1)
            b = is_retained(np.array([x]), h / c, xs, hs / c, cfg_scaled)
            assert a == b


class TestRetention2D:
    def test_no_competitors(self):
        assert is_retained(np.zeros(2), 1.0, np.zeros((0, 2)), np.zeros(0), CFG2)

    def test_same_location_nested(self):
        assert not is_retained(
            np.zeros(2), 5.0, np.zeros((1, 2)), np.array([1e-9]), CFG2
        )
        assert is_retained(np.zeros(2), 1.0, np.array([[1.0, 0.0]]), np.array([1.0]), CFG2)

    def test_dim3_unsupported(self):
        with pytest.raises(UnsupportedError):
            LaguerreConfig(t=0.5, beta=0.0, dim=3, h_max=1.0)

    def test_monotone_in_competitors(self, gen):
        for _ in range(100):
            xs = gen.uniform(-4, 4, size=(10, 2))
            hs = gen.uniform(0.01, 4.0, size=10)
            x, h = gen.uniform(-4, 4, 2), float(gen.uniform(0.01, 4.0))
            full = is_retained(x, h, xs, hs, CFG2)
            part = is_retained(x, h, xs[:5], hs[:5], CFG2)
            assert part or not full

    def test_far_competitor_irrelevant(self, gen):
        # a light far point cannot cover a heavy near boundary: sanity of the LP
        x = np.zeros(2)
        xs = np.array([[30.0, 0.0]])
        hs = np.array([0.5])
        assert is_retained(x, 1.0, xs, hs, CFG2)


class TestCounting:
    def test_single_point(self):
        dom = laguerre_domain(CFG1, 10.0)
        chi = P.make_configuration(dom, np.array([[0.0]]), times=[1.0])
        assert count_thinned(chi, CFG1) == 1

    def test_thinning_bound(self):
        dom = laguerre_domain(CFG2, 16.0)
        for i in range(20):
            chi = P.sample_poisson(dom, RandomStream(90, 0, i))
            n_w = int(np.count_nonzero(chi.window_mask()))
            assert count_thinned(chi, CFG2) <= n_w

    def test_count_matches_oracle_1d(self, gen):
        cfg = LaguerreConfig(t=0.5, beta=0.5, dim=1, h_max=4.0)
        dom = laguerre_domain(cfg, 12.0)
        for i in range(60):
            chi = P.sample_poisson(dom, RandomStream(91, 0, i))
            if len(chi) > 80:
                chi = chi.take(np.arange(len(chi)) < 80)
            mask = chi.window_mask()
            primary = count_thinned(chi, cfg)
            scan = 0
            for j in np.flatnonzero(mask):
                rows = np.flatnonzero(chi.ids != chi.ids[j])
                scan += boundary_scan_oracle_1d(
                    float(chi.coords[j, 0]), float(chi.times[j]),
                    chi.coords[rows, 0], chi.times[rows], cfg,
                )
            assert primary == scan


class TestScoreFamily:
    def test_unrestricted_equals_is_retained(self, gen):
        score = LaguerreScore(CFG1)
        dom = laguerre_domain(CFG1, 10.0)
        for i in range(100):
            chi = P.sample_poisson(dom, RandomStream(92, 0, i))
            if len(chi) == 0:
                continue
            p = chi.point(int(gen.integers(len(chi))))
            rows = np.flatnonzero(chi.ids != p.id)
            direct = is_retained(p.loc, p.time, chi.coords[rows], chi.times[rows], CFG1)
            assert score.evaluate(p, chi) == float(direct)
            assert score.evaluate_space_restricted(p, chi, math.inf) == float(direct)

    def test_psi_decay_superexponential_1d(self):
        # P(xi != xi^[r]) fitted against r^d should be log-linear, slope < 0;
        # the disagreement probability is already ~1/400 at r = 2, so the
        # grid sits where the frequency is measurable
        score = LaguerreScore(CFG1)
        dom = laguerre_domain(CFG1, 200.0 ** 1.0)
        rng = RandomStream(93)
        grid = [0.25, 0.5, 1.0, 1.5]
        n = 600
        freq = np.zeros(len(grid))
        for i in range(n):
            gen = rng.with_substream(i).generator()
            chi = P.sample_poisson(dom, gen)
            loc = G.sample_uniform(dom.space, dom.window, 1, gen)[0]
            h = float(dom.time_measure.sample(1, gen)[0])
            p = P.make_point(dom, loc, time=h)
            v = score.evaluate(p, chi)
            for k, r in enumerate(grid):
                freq[k] += v != score.evaluate_space_restricted(p, chi, r)
        p_hat = freq / n
        pos = p_hat > 0
        assert p_hat[0] > 0  # small radii do disagree
        assert np.count_nonzero(pos) >= 2
        slope = np.polyfit(np.asarray(grid)[pos], np.log(p_hat[pos]), 1)[0]
        assert slope < 0
        # beyond moderate radii the disagreement is gone at this sample size
        assert p_hat[-1] <= p_hat[0]

    def test_retention_probability_decays_in_weight(self):
        # log P(retained | h = s) should fall linearly in s^{d/2}; d=1
        score = LaguerreScore(CFG1)
        dom = laguerre_domain(CFG1, 60.0)
        rng = RandomStream(94)
        s_grid = np.array([0.5, 1.5, 2.5, 3.5])
        n = 500
        hits = np.zeros(len(s_grid))
        for i in range(n):
            gen = rng.with_substream(i).generator()
            chi = P.sample_poisson(dom, gen)
            loc = G.sample_uniform(dom.space, dom.window, 1, gen)[0]
            for k, s in enumerate(s_grid):
                p = P.make_point(dom, loc, time=float(s))
                hits[k] += score.evaluate(p, chi)
        p_hat = hits / n
        assert np.all(p_hat > 0)
        assert np.all(np.diff(np.log(p_hat)) < 0)
        slope = np.polyfit(s_grid ** 0.5, np.log(p_hat), 1)[0]
        assert slope < 0

    def test_weight_restriction(self, gen):
        score = LaguerreScore(CFG1)
        dom = laguerre_domain(CFG1, 10.0)
        chi = P.sample_poisson(dom, RandomStream(95))
        p = P.make_point(dom, np.array([0.0]), time=2.0)
        assert score.evaluate_time_restricted(p, chi, 2.0) == 0.0
        v = score.evaluate_time_restricted(p, chi, 4.5)
        direct = score.evaluate(p, P.restrict_time(chi, 4.5))
        assert v == direct


class TestAutoTruncation:
    def test_margin_monotone_in_budget(self):
        a = auto_margin(100.0, 1e-2, 1.0, 1)
        b = auto_margin(100.0, 1e-4, 1.0, 1)
        assert b > a > 0

    def test_h_max_scaling(self):
        assert auto_h_max(100.0, 1e-3, 1.0, 2) == pytest.approx(math.log(1e5))


class TestBoundaryScanOracle:
    def test_empty(self):
        assert boundary_scan_oracle_1d(0.0, 1.0, np.zeros(0), np.zeros(0), CFG1)

    def test_nested_pair(self):
        assert not boundary_scan_oracle_1d(
            0.0, 5.0, np.array([0.0]), np.array([1e-9]), CFG1
        )
