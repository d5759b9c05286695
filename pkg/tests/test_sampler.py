import math

import numpy as np
import pytest

from softsurv import (
    FitConfig,
    ForestHyper,
    GibbsSampler,
    RngStream,
    SubjectRecord,
    fit,
    fit_no_frailty,
)
from softsurv.forest import forest_values

from conftest import make_records


class TestFitConfig:
    def test_defaults(self):
        cfg = FitConfig()
        assert cfg.family == "exponential"
        assert (cfg.n_draws, cfg.n_burn, cfg.thin) == (2500, 2500, 1)
        assert cfg.eta_prior == (4.0, 0.01)
        assert cfg.forest.n_trees == 50

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"family": "lognormal"},
            {"n_draws": 0},
            {"n_burn": -1},
            {"thin": 0},
        ],
    )
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)


class TestDefaultRatePrior:
    def test_midpoint_rule(self):
        # Unit shape; rate = mean of finite-window midpoints, so the prior
        # mean 1/rate matches the crude scale of the data.
        recs = [
            SubjectRecord(0, 2.0, 2.0, np.zeros(1)),       # midpoint 2
            SubjectRecord(0, 1.0, 3.0, np.zeros(1)),       # midpoint 2
            SubjectRecord(1, 4.0, math.inf, np.zeros(1)),  # midpoint 4 (lower only)
        ]
        s = GibbsSampler(recs, FitConfig(forest=ForestHyper(n_trees=1)), RngStream(0))
        a0, b0 = s.rate_prior
        assert a0 == 1.0
        assert b0 == pytest.approx((2.0 + 2.0 + 4.0) / 3.0)

    def test_explicit_prior_wins(self):
        recs = [SubjectRecord(0, 1.0, 1.0, np.zeros(1))]
        cfg = FitConfig(rate_prior=(3.0, 5.0), forest=ForestHyper(n_trees=1))
        s = GibbsSampler(recs, cfg, RngStream(0))
        assert s.rate_prior == (3.0, 5.0)


class TestDeterminism:
    def test_identical_runs(self, tiny_records, tiny_config):
        a = fit(tiny_records, tiny_config, seed=5)
        b = fit(tiny_records, tiny_config, seed=5)
        assert np.array_equal(a.rates, b.rates)
        assert np.array_equal(a.etas, b.etas)
        assert np.array_equal(a.frailties, b.frailties)
        x = np.array([[0.5, 0.5]])
        t = np.array([0.5, 1.5])
        for fa, fb in zip(a.forests, b.forests):
            assert np.array_equal(
                forest_values(fa, a.scaler.scale_matrix(t, np.repeat(x, 2, axis=0))),
                forest_values(fb, b.scaler.scale_matrix(t, np.repeat(x, 2, axis=0))),
            )

    def test_seed_changes_draws(self, tiny_records, tiny_config):
        a = fit(tiny_records, tiny_config, seed=5)
        b = fit(tiny_records, tiny_config, seed=6)
        assert not np.array_equal(a.rates, b.rates)

    def test_thinning_is_a_subsequence(self, tiny_records):
        # Stream addressing is keyed by sweep index, so thin=2 must coincide
        # with every second post-burn state of the thin=1 trajectory.
        base = dict(n_burn=3, forest=ForestHyper(n_trees=2))
        dense = fit(tiny_records, FitConfig(n_draws=8, thin=1, **base), seed=3)
        thinned = fit(tiny_records, FitConfig(n_draws=4, thin=2, **base), seed=3)
        assert np.array_equal(thinned.rates, dense.rates[1::2])
        assert np.array_equal(thinned.etas, dense.etas[1::2])
        assert np.array_equal(thinned.frailties, dense.frailties[1::2])


class TestSamplerState:
    def test_cluster_ids_sorted_and_frailty_lookup(self, tiny_draws):
        assert list(tiny_draws.cluster_ids) == sorted(tiny_draws.cluster_ids)
        col = tiny_draws.frailty_for_cluster(tiny_draws.cluster_ids[1])
        assert col.shape == (tiny_draws.n_draws,)
        assert np.all(col > 0.0)

    def test_unknown_cluster_raises(self, tiny_draws):
        with pytest.raises(ValueError):
            tiny_draws.frailty_for_cluster("no-such-cluster")

    def test_baseline_accessor(self, tiny_draws):
        bh = tiny_draws.baseline(0)
        assert bh.family == "exponential"
        assert bh.rate == tiny_draws.rates[0]
        assert bh.shape == 1.0

    def test_augmented_subjects_respect_windows(self, tiny_records, tiny_config):
        s = GibbsSampler(tiny_records, tiny_config, RngStream(19))
        for _ in range(5):
            s.sweep()
        for sub in s.subjects:
            rec = sub.record
            if rec.is_exact:
                assert sub.time == rec.lower and sub.has_event
            elif rec.is_right_censored:
                assert sub.time == rec.lower and not sub.has_event
            else:
                assert rec.lower < sub.time <= rec.upper and sub.has_event
            assert np.all(sub.rejected < sub.time)
            n_neg = sub.n_rejected
            if sub.has_event:
                assert len(sub.latents) == n_neg + 1 and sub.latents[-1] > 0.0
            else:
                assert len(sub.latents) == n_neg
            assert np.all(sub.latents[:n_neg] < 0.0)

    def test_ell_for_matches_forest(self, tiny_records, tiny_config):
        s = GibbsSampler(tiny_records, tiny_config, RngStream(19))
        s.sweep()
        times = np.array([0.3, 1.1])
        for j in (0, 5):
            want = forest_values(
                s.forest, s.scaler.scale_subject(times, tiny_records[j].x)
            )
            assert np.allclose(s.ell_for(j)(times), want)

    def test_init_from_prior_marginals(self):
        recs = make_records(n=4, n_clusters=2)
        cfg = FitConfig(
            forest=ForestHyper(n_trees=1), eta_prior=(4.0, 2.0), rate_prior=(3.0, 1.5)
        )
        s = GibbsSampler(recs, cfg, RngStream(0))
        rates, etas, ws = [], [], []
        for i in range(4000):
            s.init_from_prior(RngStream(100, (i,)))
            rates.append(s.baseline.rate)
            etas.append(s.eta)
            ws.append(s.w.copy())
        assert np.mean(rates) == pytest.approx(2.0, abs=0.1)   # 3/1.5
        assert np.mean(etas) == pytest.approx(2.0, abs=0.08)   # 4/2
        assert np.mean(ws) == pytest.approx(1.0, abs=0.05)     # unit-mean frailty


class TestReplaceData:
    def test_swaps_records_and_keeps_scaler(self, tiny_records, tiny_config):
        s = GibbsSampler(tiny_records, tiny_config, RngStream(2))
        scaler = s.scaler
        s.sweep()
        new = make_records(seed=99)
        s.replace_data(new)
        assert s.scaler is scaler
        assert [sub.record for sub in s.subjects] == new
        s.sweep()  # still runs

    def test_rejects_new_cluster_set(self, tiny_records, tiny_config):
        s = GibbsSampler(tiny_records, tiny_config, RngStream(2))
        with pytest.raises(ValueError):
            s.replace_data(make_records(n_clusters=5, seed=99))

    def test_rejects_new_dimension(self, tiny_records, tiny_config):
        s = GibbsSampler(tiny_records, tiny_config, RngStream(2))
        with pytest.raises(ValueError):
            s.replace_data(make_records(p=3, seed=99))


class TestNoFrailty:
    def test_unit_frailties_and_infinite_eta(self, tiny_records):
        cfg = FitConfig(n_draws=4, n_burn=2, forest=ForestHyper(n_trees=2))
        draws = fit_no_frailty(tiny_records, cfg, seed=8)
        assert np.all(np.isinf(draws.etas))
        assert np.all(draws.frailties == 1.0)

    def test_differs_from_frailty_fit(self, tiny_records):
        cfg = FitConfig(n_draws=4, n_burn=2, forest=ForestHyper(n_trees=2))
        with_w = fit(tiny_records, cfg, seed=8)
        assert not np.all(with_w.frailties == 1.0)


class TestWeibullFamily:
    def test_fit_runs_and_stores_shapes(self, tiny_records):
        cfg = FitConfig(
            family="weibull", n_draws=5, n_burn=3, forest=ForestHyper(n_trees=2)
        )
        draws = fit(tiny_records, cfg, seed=21)
        assert draws.family == "weibull"
        assert np.all(draws.shapes > 0.0)
        assert len(set(draws.shapes.tolist())) > 1
        bh = draws.baseline(2)
        assert bh.shape == draws.shapes[2]
