import numpy as np
import pytest

from vplsim.equilibrium import compute_coefficients
from vplsim.spectral_core import GridSpec


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(d_x=1, K_max=2, N_v=8, V_max=6.0)


@pytest.fixture(scope="session")
def coeffs8(grid8):
    return compute_coefficients(grid8)


@pytest.fixture(scope="session")
def grid16():
    return GridSpec(d_x=1, K_max=2, N_v=16, V_max=6.0)


@pytest.fixture(scope="session")
def coeffs16(grid16):
    return compute_coefficients(grid16)


@pytest.fixture(scope="session")
def grid32():
    return GridSpec(d_x=1, K_max=8, N_v=32, V_max=6.0)


@pytest.fixture(scope="session")
def coeffs32(grid32):
    return compute_coefficients(grid32)


def smooth_random(grid, rng, n_terms=6, width=1.0):
    """Random real velocity field: Hermite-like polynomials times a Gaussian envelope."""
    v1, v2, v3 = grid.v
    out = np.zeros(grid.vshape)
    for _ in range(n_terms):
        p = rng.integers(0, 3, size=3)
        c = rng.normal()
        s = rng.normal(scale=0.3, size=3)
        out = out + c * (v1 - s[0]) ** p[0] * (v2 - s[1]) ** p[1] * (v3 - s[2]) ** p[2] * np.exp(
            -0.5 * width * ((v1 - s[0]) ** 2 + (v2 - s[1]) ** 2 + (v3 - s[2]) ** 2))
    return out


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
