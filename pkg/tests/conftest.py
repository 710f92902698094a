import math

import numpy as np
import pytest
from hypothesis import settings, strategies as st

from dtfim import SystemParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.register_profile("stress", deadline=None, max_examples=2000)
settings.load_profile(__import__("os").environ.get("HYPOTHESIS_PROFILE", "default"))

BISTABLE = dict(omega=2.0, vint=20.0)
WEAK = dict(omega=2.0, vint=1.0)


@st.composite
def system_params(draw, natoms=100, max_delta=30.0, max_omega=10.0, max_vint=30.0):
    gamma = draw(st.floats(0.2, 3.0))
    return SystemParams(
        delta=draw(st.floats(-max_delta, max_delta)),
        omega=draw(st.floats(0.0, max_omega)),
        vint=draw(st.floats(-max_vint, max_vint)),
        gamma=gamma,
        natoms=natoms,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def bloch_closed_form(delta, omega, gamma=1.0):
    """Single two-level atom: inversion and coherence with no interaction."""
    m = -(gamma**2 + 4 * delta**2) / (gamma**2 + 4 * delta**2 + 2 * omega**2)
    v = -1j * omega * m / (2j * delta - gamma)
    return m, v


def approx_equal(a, b, tol):
    return abs(a - b) <= tol or (math.isnan(a) and math.isnan(b))


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
