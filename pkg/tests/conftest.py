import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record a measured value for the acceptance summary line."""
    crit = request.node.get_closest_marker("acceptance").args[0]
    entry = _ACCEPTANCE.setdefault(crit, {"name": request.node.name, "details": []})

    def note(text):
        entry["details"].append(text)

    return note


def pytest_runtest_logreport(report):
    marker = None
    for kw in report.keywords:
        if kw == "acceptance":
            marker = True
    if not marker or report.when != "call":
        return
    crit = getattr(report, "criterion", None)
    if crit is not None:
        entry = _ACCEPTANCE.setdefault(crit, {"name": report.nodeid, "details": []})
        # several tests may share a criterion; any failure fails it
        if entry.get("outcome") != "failed":
            entry["outcome"] = report.outcome


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.criterion = m.args[0]
        if rep.when == "setup" and rep.outcome != "passed":
            _ACCEPTANCE.setdefault(m.args[0], {"name": item.nodeid, "details": []})["outcome"] = rep.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[crit]
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(entry.get("outcome"), "FAIL")
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {crit}: {status}  {detail}")
