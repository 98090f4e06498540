import numpy as np
import pytest
from hypothesis import settings

from distress_bench.synthetic import SyntheticSpec, synthesize_panel

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_spec():
    return SyntheticSpec(seed=3, n_firms=120, years=(1990, 1999), base_hazard=0.08)


@pytest.fixture(scope="session")
def small_panel(small_spec):
    return synthesize_panel(small_spec)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def logistic_data(rng, n=200, p=3, scale=0.8):
    """Non-separable logistic sample with an intercept of -1."""
    Z = rng.standard_normal((n, p))
    beta = np.linspace(1.0, -0.5, p) * scale
    y = (rng.random(n) < 1 / (1 + np.exp(-(-1.0 + Z @ beta)))).astype(float)
    return Z, y


# acceptance criteria report: tests call ``record`` and the summary prints one line each
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
