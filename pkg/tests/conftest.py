import numpy as np
import pytest

from softsurv import FitConfig, ForestHyper, RngStream, SubjectRecord, fit

import acceptance_util


def make_records(n=12, n_clusters=3, p=2, seed=7, censoring=True):
    """Small clustered data set covering every censoring kind.

    Subjects cycle through exact / right / interval / left windows when
    ``censoring`` is set, otherwise all are exact.
    """
    gen = np.random.default_rng(seed)
    recs = []
    for j in range(n):
        x = gen.random(p)
        t = float(gen.gamma(2.0)) + 0.05
        cluster = j % n_clusters
        if not censoring:
            recs.append(SubjectRecord(cluster, t, t, x))
            continue
        kind = j % 4
        if kind == 0:
            recs.append(SubjectRecord(cluster, t, t, x))
        elif kind == 1:
            recs.append(SubjectRecord(cluster, t, np.inf, x))
        elif kind == 2:
            recs.append(SubjectRecord(cluster, 0.6 * t, 0.6 * t + 1.0, x))
        else:
            recs.append(SubjectRecord(cluster, 0.0, t + 0.5, x))
    return recs


@pytest.fixture(scope="session")
def tiny_records():
    return make_records()


@pytest.fixture(scope="session")
def tiny_config():
    # 2 trees and a handful of sweeps: enough to exercise every move.
    return FitConfig(n_draws=6, n_burn=4, forest=ForestHyper(n_trees=2))


@pytest.fixture(scope="session")
def tiny_draws(tiny_records, tiny_config):
    return fit(tiny_records, tiny_config, seed=11)


@pytest.fixture
def stream():
    return RngStream(2024)


def pytest_terminal_summary(terminalreporter):
    if not acceptance_util.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_util.LINES:
        terminalreporter.write_line(line)
