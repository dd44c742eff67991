import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from ellipstress.model import EllipticalModel, Normal, StudentT  # noqa: E402


def random_spd(rng: np.random.Generator, p: int, cond_floor: float = 0.2) -> np.ndarray:
    """Random SPD matrix with unit-ish scale and a floor on the spectrum."""
    a = rng.standard_normal((p, p))
    q, _ = np.linalg.qr(a)
    w = rng.uniform(cond_floor, 2.0, size=p)
    s = rng.uniform(0.5, 2.0, size=p)
    m = (q * w) @ q.T
    m = m * np.outer(s, s)
    return 0.5 * (m + m.T)


def random_model(rng: np.random.Generator, p: int, kind=None) -> EllipticalModel:
    if kind is None:
        kind = Normal()
    return EllipticalModel(rng.normal(0.0, 0.5, size=p), random_spd(rng, p), kind)


def random_split(rng: np.random.Generator, p: int, p_x: int | None = None):
    perm = rng.permutation(p)
    if p_x is None:
        p_x = int(rng.integers(1, p))
    return [int(i) for i in perm[:p_x]], [int(i) for i in perm[p_x:]]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# ---------------------------------------------------------------------------
# acceptance summary: one PASS/FAIL line per criterion after the run

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"[{status}] {number:>2}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
