"""Simulation benchmark harness: data-generating process and reporting."""

import math

import mpmath as mp
import numpy as np
import pytest

from softsurv import BenchReport, RngStream, SimConfig, friedman, generate, run_benchmark
from softsurv.simbench import REFERENCE_RMSE, SETTINGS, censor_times, run_replicate

FRIEDMAN_AT_HALF = 14.571067811865475  # 10 sin(pi/4) + 10/2 + 5/2


class TestFriedman:
    def test_center_value(self):
        assert friedman(np.full(5, 0.5)) == pytest.approx(FRIEDMAN_AT_HALF, abs=1e-12)

    def test_corner_values(self):
        assert friedman(np.zeros(5)) == pytest.approx(5.0)   # only the quadratic term
        assert friedman(np.ones(5)) == pytest.approx(20.0)

    def test_vectorized(self):
        x = np.vstack([np.zeros(5), np.ones(5)])
        assert np.allclose(friedman(x), [5.0, 20.0])

    def test_wrong_dimension(self):
        with pytest.raises(ValueError):
            friedman(np.zeros(4))

    def test_outside_unit_cube(self):
        bad = np.full(5, 0.5)
        bad[2] = 1.2
        with pytest.raises(ValueError):
            friedman(bad)

    def test_range_is_positive(self):
        # Gamma shapes must stay positive everywhere on the cube.
        x = RngStream(1).random((2000, 5))
        assert np.min(friedman(x)) > 0.0


class TestCensorTimes:
    def test_window_brackets_truth(self, stream):
        t = RngStream(2).uniform(0.2, 4.0, size=5000)
        lower, upper, k = censor_times(t, stream)
        assert np.all(lower < t)
        assert np.all(upper > t)
        assert np.all(lower >= 0.0)

    def test_left_censoring_iff_no_inspections(self, stream):
        t = RngStream(3).uniform(0.2, 4.0, size=5000)
        lower, _, k = censor_times(t, stream)
        assert np.array_equal(lower == 0.0, k == 0)

    def test_upper_gap_is_unit_exponential(self, stream):
        t = RngStream(4).uniform(0.2, 4.0, size=20_000)
        _, upper, _ = censor_times(t, stream)
        gap = upper - t
        assert np.mean(gap) == pytest.approx(1.0, abs=0.03)
        assert np.mean(gap > 1.0) == pytest.approx(math.exp(-1.0), abs=0.02)

    def test_inspection_count_scales_with_time(self, stream):
        t = np.full(20_000, 2.5)
        _, _, k = censor_times(t, stream)
        assert np.mean(k) == pytest.approx(2.5, abs=0.06)


class TestGenerate:
    def test_uncensored_settings_have_exact_records(self):
        data = generate(SimConfig(setting="A", n=40), RngStream(0))
        assert len(data.train) == 40
        assert all(r.is_exact for r in data.train)
        # independent subjects: one cluster each
        assert len({r.cluster for r in data.train}) == 40

    def test_censored_setting_has_windows(self):
        data = generate(SimConfig(setting="C", n=60), RngStream(0))
        kinds = {
            "exact": sum(r.is_exact for r in data.train),
            "window": sum(r.needs_imputation for r in data.train),
        }
        assert kinds["exact"] == 0
        assert kinds["window"] > 10

    def test_clustered_setting_layout(self):
        data = generate(SimConfig(setting="B", n_clusters=5, cluster_size=8), RngStream(0))
        assert len(data.train) == 40
        clusters = [r.cluster for r in data.train]
        assert sorted(set(clusters)) == list(range(5))
        assert all(clusters.count(c) == 8 for c in range(5))

    def test_grid_is_decile_quantiles(self):
        data = generate(SimConfig(setting="A", n=30, n_test=50), RngStream(1))
        want = np.quantile(data.true_times, np.linspace(0.05, 0.95, 10))
        assert np.allclose(data.grid, want)
        assert data.true_survival.shape == (50, 10)

    def test_true_survival_matches_mpmath_gamma_tail(self):
        # Q(shape, 6 t), the regularized upper incomplete gamma.
        mp.mp.dps = 30
        data = generate(SimConfig(setting="A", n=10, n_test=6), RngStream(2))
        shapes = friedman(data.test_x)
        for i in (0, 3, 5):
            for g in (0, 4, 9):
                want = float(mp.gammainc(mp.mpf(shapes[i]), a=6.0 * data.grid[g], regularized=True))
                assert data.true_survival[i, g] == pytest.approx(want, abs=1e-10)

    def test_event_time_scale(self):
        # T | shape ~ Gamma(shape, 6), so 6 T / shape has unit mean.
        data = generate(SimConfig(setting="A", n=100, n_test=4000), RngStream(3))
        shapes = friedman(data.test_x)
        ratio = 6.0 * data.true_times / shapes
        assert np.mean(ratio) == pytest.approx(1.0, abs=0.01)

    def test_deterministic_given_stream(self):
        a = generate(SimConfig(setting="D"), RngStream(7, (3, 0)))
        b = generate(SimConfig(setting="D"), RngStream(7, (3, 0)))
        assert np.array_equal(a.grid, b.grid)
        assert all(
            ra.lower == rb.lower and ra.upper == rb.upper for ra, rb in zip(a.train, b.train)
        )

    def test_cluster_effect_shifts_shape(self):
        # Under clustering the gamma shape is friedman(x) + a U(0, 0.2) effect,
        # so times run slightly longer than the independent setting's.
        n = 60_000
        cfg_b = SimConfig(setting="B", n_clusters=100, cluster_size=600)
        x, shape, clusters = (
            __import__("softsurv.simbench", fromlist=["_shapes_and_clusters"])
            ._shapes_and_clusters("B", n, cfg_b, RngStream(11).generator)
        )
        lift = shape - friedman(x)
        assert np.min(lift) >= 0.0 and np.max(lift) <= 0.2
        assert np.mean(lift) == pytest.approx(0.1, abs=0.01)


class TestConfigValidation:
    def test_bad_setting(self):
        with pytest.raises(ValueError):
            SimConfig(setting="E")

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            SimConfig(n=0)
        with pytest.raises(ValueError):
            SimConfig(n_replicates=0)

    def test_settings_tuple(self):
        assert SETTINGS == ("A", "B", "C", "D")

    def test_reference_table_complete(self):
        assert REFERENCE_RMSE["proposed"] == {"A": 0.1038, "B": 0.1063, "C": 0.1106, "D": 0.0944}
        for vals in REFERENCE_RMSE.values():
            assert set(vals) == set(SETTINGS)


def tiny_config(setting, reps=2):
    return SimConfig(
        setting=setting,
        n=20,
        n_clusters=4,
        cluster_size=5,
        n_test=10,
        n_replicates=reps,
        n_burn=5,
        n_draws=5,
        n_trees=3,
        seed=1,
    )


class TestRunners:
    @pytest.mark.parametrize("setting", ["A", "D"])
    def test_replicate_smoke(self, setting):
        value = run_replicate(tiny_config(setting), 0)
        assert 0.0 < value < 1.0

    def test_replicates_differ(self):
        cfg = tiny_config("A")
        assert run_replicate(cfg, 0) != run_replicate(cfg, 1)

    def test_benchmark_report_and_thread_invariance(self):
        cfg = tiny_config("A", reps=3)
        serial = run_benchmark(cfg, threads=1)
        parallel = run_benchmark(cfg, threads=2)
        assert np.array_equal(serial.rmses, parallel.rmses)
        assert serial.mean == pytest.approx(np.mean(serial.rmses))


class TestBenchReport:
    def test_moments(self):
        rep = BenchReport(SimConfig(setting="B"), np.array([0.1, 0.2, 0.3]))
        assert rep.mean == pytest.approx(0.2)
        assert rep.se == pytest.approx(np.std([0.1, 0.2, 0.3], ddof=1) / math.sqrt(3))

    def test_single_replicate_se_is_nan(self):
        rep = BenchReport(SimConfig(setting="A"), np.array([0.15]))
        assert math.isnan(rep.se)

    def test_delimited_layout(self):
        rep = BenchReport(SimConfig(setting="C"), np.array([0.11, 0.13]))
        lines = rep.to_delimited().strip().splitlines()
        assert lines[0] == "setting,replicate,rmse"
        assert lines[1] == "C,0,0.110000"
        assert lines[-2] == "C,mean,0.120000"
        assert lines[-1].startswith("C,se,")

    def test_summary_mentions_reference(self):
        rep = BenchReport(SimConfig(setting="A"), np.array([0.12, 0.14]))
        text = rep.summary()
        assert "0.1038" in text and "mean RMSE 0.1300" in text
