"""Shared hypothesis strategies and small builders for the test suite."""

import numpy as np
from hypothesis import strategies as st

from nearby_orbit.gaussians import SqueezedState
from nearby_orbit.symplectic import random_symplectic

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=1, max_value=3)


def random_siegel(rng, n, spread=1.0):
    """M = i X - Y with X symmetric positive definite."""
    A = rng.normal(size=(n, n))
    X = A @ A.T + 0.3 * np.eye(n)
    Y = rng.normal(scale=spread, size=(n, n))
    Y = 0.5 * (Y + Y.T)
    return 1j * X - Y


def random_state(rng, n=1, hbar=1.0, spread=1.0):
    M = random_siegel(rng, n, spread)
    return SqueezedState(rng.uniform(-1, 1, 2 * n), M, hbar=hbar)


def random_1d_state(rng, hbar=1.0):
    return SqueezedState.from_XY(rng.uniform(0.5, 2.0), rng.uniform(-1, 1), rng.uniform(-1, 1, 2), hbar=hbar)


def admissible_symplectic(rng, n=1, scale=0.4, margin=0.1):
    """Random S = exp(J K) with |det(S - I)| above `margin`."""
    while True:
        S = random_symplectic(n, rng, scale)
        if abs(np.linalg.det(S - np.eye(2 * n))) > margin:
            return S
