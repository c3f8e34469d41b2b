import numpy as np
import pytest

from dipolar_ladder.model import SystemParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_params(rng, L, overrides=False):
    """Parameters with couplings and fields of order one to ten."""
    ov = {}
    if overrides:
        site = int(rng.integers(1, L + 1))
        ov[site] = (float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)))
    return SystemParams(
        L=L,
        J_s=float(rng.uniform(0.5, 1.5)),
        J_d=float(rng.uniform(0, 4)),
        h_s_default=float(rng.uniform(-2, 2)),
        h_d_default=float(rng.uniform(-4, 4)),
        C=float(rng.uniform(-1, 1)),
        site_overrides=ov,
    )


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion, collected from marked tests

_ACCEPTANCE: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): test belongs to acceptance criterion n")


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.failed:
        details = [v for k, v in report.user_properties if k == "detail"]
        _ACCEPTANCE.setdefault(crit, []).append((report.nodeid.split("::")[-1], report.outcome, details))


@pytest.fixture
def criterion(request, record_property):
    """Tag the test with its criterion number and return a detail recorder."""
    marker = request.node.get_closest_marker("acceptance")
    record_property("criterion", marker.args[0])
    return lambda text: record_property("detail", text)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        runs = _ACCEPTANCE[crit]
        verdict = "PASS" if all(outcome == "passed" for _, outcome, _ in runs) else "FAIL"
        details = "; ".join(d for _, _, ds in runs for d in ds)
        terminalreporter.write_line(f"criterion {crit:2d}: {verdict}  {details}")
