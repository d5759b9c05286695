import math

import numpy as np
import pytest

from softsurv import BaselineHazard, RngStream
from softsurv.hazard import (
    cumulative_hazard,
    eta_log_posterior,
    inverse_cumulative_hazard,
    update_baseline,
    update_eta,
    update_frailties,
)

from grid_oracle import tv_against_grid


class TestBaselineHazard:
    def test_exponential_values(self):
        bh = BaselineHazard("exponential", 2.5)
        assert bh.hazard(1.7) == 2.5
        assert cumulative_hazard(bh, 3.0) == pytest.approx(7.5)

    def test_weibull_values(self):
        bh = BaselineHazard("weibull", 2.0, 1.5)
        # lambda0(t) = rate * shape * t^(shape-1)
        assert bh.hazard(4.0) == pytest.approx(2.0 * 1.5 * 2.0)
        assert cumulative_hazard(bh, 4.0) == pytest.approx(2.0 * 8.0)

    def test_log_hazard_matches_log_of_hazard(self):
        bh = BaselineHazard("weibull", 0.7, 2.2)
        for t in (0.01, 0.5, 3.0, 40.0):
            assert bh.log_hazard(t) == pytest.approx(math.log(bh.hazard(t)))

    @pytest.mark.parametrize(
        "family,rate,shape",
        [("exponential", -1.0, 1.0), ("exponential", 2.0, 1.5), ("weibull", 1.0, 0.0), ("cox", 1.0, 1.0)],
    )
    def test_invalid_construction(self, family, rate, shape):
        with pytest.raises(ValueError):
            BaselineHazard(family, rate, shape)

    def test_cumulative_rejects_negative_time(self):
        with pytest.raises(ValueError):
            cumulative_hazard(BaselineHazard("exponential", 1.0), -0.5)

    def test_round_trip_inverse(self):
        # Lam0^-1(Lam0(t)) = t to 1e-10 relative, both families.
        t = np.geomspace(1e-6, 1e4, 300)
        for bh in (BaselineHazard("exponential", 3.2), BaselineHazard("weibull", 0.4, 1.8)):
            back = inverse_cumulative_hazard(bh, cumulative_hazard(bh, t))
            assert np.max(np.abs(back - t) / t) < 1e-10

    def test_vectorized_matches_scalar(self):
        bh = BaselineHazard("weibull", 1.3, 0.9)
        t = np.array([0.2, 1.0, 5.0])
        assert np.allclose(cumulative_hazard(bh, t), [cumulative_hazard(bh, v) for v in t])


class TestFrailtyUpdate:
    def test_conjugate_form_vs_grid(self, stream):
        # One cluster replicated: posterior prop. to w^(eta+d+m-1) e^-(eta+cum)w.
        eta, d, m, cum = 3.0, 4, 2, 5.5
        n = 100_000
        draws = update_frailties(
            eta, np.full(n, d), np.full(n, m), np.full(n, cum), stream
        )

        def logpost(w):
            return (eta + d + m - 1.0) * np.log(w) - (eta + cum) * w

        assert tv_against_grid(draws, logpost) < 0.015

    def test_empty_cluster_reduces_to_prior(self, stream):
        eta = 2.0
        draws = update_frailties(eta, np.zeros(50_000), np.zeros(50_000), np.zeros(50_000), stream)
        assert np.mean(draws) == pytest.approx(1.0, abs=0.02)
        assert np.var(draws) == pytest.approx(1.0 / eta, abs=0.02)

    def test_per_cluster_alignment(self, stream):
        # Heavier-hit clusters must get their own posterior, not a shared one.
        ev = np.array([0, 30])
        cum = np.array([1.0, 1.0])
        draws = np.array(
            [update_frailties(1.0, ev, np.zeros(2), cum, stream) for _ in range(2000)]
        )
        assert draws[:, 1].mean() > 5 * draws[:, 0].mean()


class TestBaselineUpdate:
    def test_exponential_conjugate_vs_grid(self, stream):
        a0, b0 = 2.0, 1.0
        pts = np.array([0.5, 1.2, 0.8])
        horizons = np.array([1.5, 2.0, 1.0])
        weights = np.array([1.1, 0.7, 1.4])
        bh = BaselineHazard("exponential", 1.0)
        draws = np.array(
            [
                update_baseline(bh, (a0, b0), (1.0, 1.0), pts, horizons, weights, stream).rate
                for _ in range(40_000)
            ]
        )
        sw = float(np.dot(weights, horizons))

        def logpost(r):
            return (a0 + len(pts) - 1.0) * np.log(r) - (b0 + sw) * r

        assert tv_against_grid(draws, logpost) < 0.02

    def test_weibull_update_moves_both_parameters(self, stream):
        bh = BaselineHazard("weibull", 1.0, 1.0)
        pts = RngStream(3).uniform(0.1, 2.0, size=40)
        horizons = RngStream(4).uniform(0.5, 3.0, size=40)
        weights = np.ones(40)
        rates, shapes = [], []
        for _ in range(400):
            bh = update_baseline(bh, (1.0, 1.0), (1.0, 1.0), pts, horizons, weights, stream)
            rates.append(bh.rate)
            shapes.append(bh.shape)
        assert bh.family == "weibull"
        assert len(set(rates)) > 300 and len(set(shapes)) > 300
        assert min(rates) > 0.0 and min(shapes) > 0.0

    def test_weibull_no_points_prior_dominated(self, stream):
        # With no point pattern and tiny exposure the chain hovers near the prior.
        bh = BaselineHazard("weibull", 1.0, 1.0)
        shapes = []
        for _ in range(4000):
            bh = update_baseline(
                bh, (2.0, 2.0), (3.0, 3.0), np.empty(0), np.array([1e-9]), np.array([1.0]), stream
            )
            shapes.append(bh.shape)
        assert np.mean(shapes[500:]) == pytest.approx(1.0, abs=0.15)


class TestEta:
    def test_log_posterior_hand_value(self):
        # Direct transcription: Gamma(a,b) prior + sum of Gamma(eta,eta) logpdfs.
        from scipy.special import gammaln

        eta, w, (a, b) = 1.7, np.array([0.8, 1.3]), (4.0, 2.0)
        want = (a - 1) * math.log(eta) - b * eta
        want += 2 * (eta * math.log(eta) - gammaln(eta))
        want += (eta - 1) * math.log(0.8 * 1.3) - eta * (0.8 + 1.3)
        assert eta_log_posterior(eta, w, (a, b)) == pytest.approx(want, rel=1e-12)

    def test_nonpositive_eta_excluded(self):
        assert eta_log_posterior(0.0, np.array([1.0]), (4.0, 2.0)) == -math.inf
        assert eta_log_posterior(-1.0, np.array([1.0]), (4.0, 2.0)) == -math.inf

    def test_no_clusters_is_bare_prior(self):
        assert eta_log_posterior(2.0, np.empty(0), (3.0, 1.0)) == pytest.approx(
            2.0 * math.log(2.0) - 2.0
        )

    def test_chain_matches_quadrature_moments(self, stream):
        w = np.array([0.6, 1.1, 0.9, 1.5, 0.8, 1.2])
        prior = (4.0, 2.0)
        grid = np.linspace(1e-4, 40.0, 40_001)
        logp = np.array([eta_log_posterior(e, w, prior) for e in grid])
        dens = np.exp(logp - logp.max())
        dens /= np.trapezoid(dens, grid)
        want_mean = np.trapezoid(grid * dens, grid)
        want_sd = math.sqrt(np.trapezoid((grid - want_mean) ** 2 * dens, grid))

        eta, chain = 1.0, []
        for _ in range(30_000):
            eta = update_eta(w, prior, eta, stream)
            chain.append(eta)
        chain = np.array(chain[2000:])
        assert np.mean(chain) == pytest.approx(want_mean, abs=0.08 * want_sd)
        assert np.std(chain) == pytest.approx(want_sd, rel=0.1)

    def test_bad_prior_rejected(self, stream):
        with pytest.raises(ValueError):
            update_eta(np.array([1.0]), (0.0, 1.0), 1.0, stream)
