import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_criterion", None)
    if marker is None:
        return
    number, title = marker
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
        _ACCEPTANCE[number] = (title, report.outcome.upper(), detail)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report._criterion = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, outcome, detail = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        line = f"[{verdict}] criterion {number:2d}: {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk_data():
    """Desk-scale synthetic datasets keyed by SNR level, built lazily."""
    from vibdiag import desk
    cache = {}

    def get(snr="clean"):
        if snr not in cache:
            cache[snr] = desk.dataset(snr, seed=0)
        return cache[snr]
    return get


@pytest.fixture(scope="session")
def desk_fold(desk_data):
    """First cross-validation fold trained on desk data, cached per SNR level."""
    from vibdiag import desk
    from vibdiag.training import run_fold, stratified_kfold
    cache = {}

    def get(snr="clean"):
        if snr not in cache:
            data = desk_data(snr)
            plan = stratified_kfold(data.labels, 5, seed=0)
            cache[snr] = run_fold(data.take(plan.train_indices(0)), data.take(plan.test_indices(0)),
                                  desk.schedule(), desk.model_config(), seed=[0, 0])
        return cache[snr]
    return get
