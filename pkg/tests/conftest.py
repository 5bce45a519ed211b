import os

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# (criterion, status, detail) rows collected by tests/test_acceptance.py
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in sorted(ACCEPTANCE_LINES, key=lambda r: _crit_key(r[0])):
        terminalreporter.write_line(f"[{status:4}] criterion {crit}: {detail}")


def _crit_key(crit):
    head = crit.split("-")[0]
    return (int(head) if head.isdigit() else 99, crit)


def random_problem(rng, n=None, d=None, density=0.5):
    """Small random sparse design with both classes present."""
    n = int(rng.integers(2, 51)) if n is None else n
    d = int(rng.integers(1, 51)) if d is None else d
    X = sp.random(n, d, density=density, random_state=rng, format="csr",
                  data_rvs=lambda k: rng.standard_normal(k))
    s = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    s[0], s[-1] = 1.0, -1.0
    return X, s


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
