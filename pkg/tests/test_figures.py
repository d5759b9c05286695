import numpy as np

from softsurv import BenchReport, SimConfig
from softsurv.figures import benchmark_figure, survival_figure


def test_survival_figure_writes_png(tmp_path):
    t = np.linspace(0.0, 2.0, 9)
    panels = []
    for k in range(10):  # more panels than the legend cap
        mean = np.exp(-(0.5 + 0.1 * k) * t)
        panels.append((mean, mean * 0.9, np.minimum(mean * 1.1, 1.0)))
    out = tmp_path / "curves.png"
    path = survival_figure(t, panels, out, mode="marginal")
    assert str(out) == path
    assert out.stat().st_size > 1000
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_benchmark_figure_writes_png(tmp_path):
    report = BenchReport(SimConfig(setting="C"), np.array([0.11, 0.13, 0.12]))
    out = tmp_path / "bench.png"
    benchmark_figure(report, out)
    assert out.exists() and out.stat().st_size > 1000
