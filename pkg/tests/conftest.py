import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.register_profile("thorough", deadline=None, max_examples=400)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, title = mark.args
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": []})
    if rep.failed:
        entry["ok"] = False
    if rep.when == "call":
        entry["notes"].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"[{status}] {number:2d}. {e['title']}" +
                                    (f" | {notes}" if notes else ""))


@pytest.fixture(scope="session")
def quick_duan_nets(tmp_path_factory):
    """Small Duan call/put surrogates trained on a quick data set.

    Good enough for plumbing tests (calibration round trips, Greeks grids),
    not for accuracy claims.
    """
    from deepcal import dataset, fnn

    sets = dataset.generate_training_sets("duan", ("call", "put"), 600, None, 1000, seed=11,
                                          profile="calibration")
    nets = {}
    d = tmp_path_factory.mktemp("quick_nets")
    for kind, ts in sets.items():
        res = fnn.fit(ts.inputs, ts.targets, 60, seed=1, metadata={"kind": kind})
        nets[kind] = res.network
        fnn.save_network(res.network, d / f"{kind}.net")
    nets["dir"] = d
    return nets


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)
