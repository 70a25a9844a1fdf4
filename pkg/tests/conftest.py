import numpy as np
import pytest

from gpisomap.data import Mode, SwissRollParams, gen_swiss_roll
from gpisomap.geometry import build_knn_graph, geodesic_distances


@pytest.fixture(scope="session")
def roll500():
    """500-point single-patch swiss roll with its kNN geodesics."""
    ds = gen_swiss_roll(SwissRollParams([Mode.isotropic((30.0, 12.0), 4.0)], 500, seed=3, test_fraction=0.0))
    geo = geodesic_distances(build_knn_graph(ds.cloud, 8))
    return ds, geo


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _by_name(checks):
    return {c["name"]: c for c in checks}


@pytest.fixture(scope="session")
def baseline_report():
    """Geodesic vs Euclidean kernel sweep, 5 seeds; shared by unit and acceptance tests."""
    from gpisomap.verify import baseline_harness
    return _by_name(baseline_harness())


@pytest.fixture(scope="session")
def convergence_report():
    from gpisomap.verify import convergence_harness
    return _by_name(convergence_harness())


# -- acceptance summary: one PASS/FAIL line per criterion ---------------------

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    item.config.stash[_CRITERIA][number] = (rep.passed, title, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, title, detail = results[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}"
                                    + (f" ({detail})" if detail else ""))
