"""Shared fixtures and independent oracles.

The oracles avoid the package's spectral machinery: derivatives come from
the closed-form periodic differentiation matrix and products are plain
pointwise products of samples.
"""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from tameinv import NormFamily, estimate_tame_constants, problem_linear_transport, problem_nonlinear_transport

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

N = 128


def diff_matrix(n: int = N) -> np.ndarray:
    """Periodic spectral differentiation matrix on ``n`` equispaced points (n even)."""
    h = 2 * np.pi / n
    i = np.arange(n)
    d = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        D = 0.5 * (-1.0) ** d / np.tan(d * h / 2)
    D[i, i] = 0.0
    return D


def linear_oracle(alpha: float, y: np.ndarray) -> np.ndarray:
    """Dense solve of ``(I + alpha D) x = y``."""
    n = y.size
    return np.linalg.solve(np.eye(n) + alpha * diff_matrix(n), y)


def lowpass(v: np.ndarray, n: int) -> np.ndarray:
    c = np.fft.rfft(v)
    c[n + 1:] = 0
    return np.fft.irfft(c, v.size)


def fixed_point_oracle(y: np.ndarray, iters: int = 300, band: int = 16) -> np.ndarray:
    """``x <- S_band(y - x x')`` with matrix derivatives and unpadded products.

    Each unfiltered pass loses a derivative and diverges; the low-pass filter
    keeps the iteration contractive for small ``y``.
    """
    D = diff_matrix(y.size)
    x = np.zeros_like(y)
    for _ in range(iters):
        x = lowpass(y - x * (D @ x), band)
    return x


@pytest.fixture(scope="session")
def hk():
    return NormFamily("SobolevHk", 12)


@pytest.fixture(scope="session")
def ck():
    return NormFamily("SupCk", 12)


@pytest.fixture(scope="session")
def linear():
    return problem_linear_transport(0.5)


@pytest.fixture(scope="session")
def nonlinear_constants(hk):
    return estimate_tame_constants(problem_nonlinear_transport(), hk, probe_count=32, seed=0)


@pytest.fixture(scope="session")
def nonlinear(nonlinear_constants):
    c = nonlinear_constants
    return problem_nonlinear_transport().with_constants(c.m, c.m_prime)
