"""Shared fixtures and independent oracles for the test suite.

The Mittag-Leffler oracle sums the defining series in adaptive-precision
arithmetic (switching to the optimally truncated tail expansion only where
the series would need thousands of digits); it shares no code with the
production evaluator.
"""

import math
from functools import lru_cache

import mpmath as mp
import numpy as np
import pytest

from fracheat.fracops import FracOrder, TimeGrid, wright_density
from fracheat.gramian import assemble_gramian
from fracheat.lpspace import GridFunction, theta_grid, to_basis
from fracheat.spectral import build_model


@lru_cache(maxsize=4096)
def ml_oracle(alpha: float, beta: float, z: float) -> float:
    """Arbitrary-precision Mittag-Leffler reference value."""
    if alpha == 1.0:
        with mp.workdps(50):
            return float(mp.hyp1f1(1, beta, z) / mp.gamma(beta))
    s = (-z) ** (1.0 / alpha) if z < 0 else 0.0
    if s <= 120.0:
        dps = 40 + int(0.5 * s)
        with mp.workdps(dps):
            a, b, zz = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
            total = mp.mpf(0)
            mx = mp.mpf(1)
            stop = mp.mpf(10) ** (-dps + 5)
            k = 0
            while True:
                t = zz**k / mp.gamma(a * k + b)
                total += t
                mx = max(mx, abs(t))
                if k > 4 and abs(t) < stop * mx:
                    return float(total)
                k += 1
    with mp.workdps(60):
        a, b, x = mp.mpf(alpha), mp.mpf(beta), mp.mpf(-z)
        total = mp.mpf(0)
        min_env = mp.inf
        for k in range(1, 400):
            env = x ** (-k) * mp.gamma(a * k - b + 1) / mp.pi if a * k + 1 - b > 0 else mp.inf
            if k > 10 and (env < mp.mpf(10) ** (-45) or env > 10 * min_env):
                break
            min_env = min(min_env, env)
            total += (-1) ** (k + 1) * x ** (-k) * mp.rgamma(b - a * k)
        return float(total)


@lru_cache(maxsize=16)
def density_on_gauss_grid(alpha: float, n_nodes: int = 500):
    """Wright density sampled on a Gauss-Legendre grid covering its support
    down to the ~1e-12 tail (mass beyond the cut is negligible at 1e-6)."""
    rate = (1.0 - alpha) * alpha ** (alpha / (1.0 - alpha))
    tau_cut = (28.0 / rate) ** (1.0 - alpha)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    tau = 0.5 * tau_cut * (x + 1.0)
    weights = 0.5 * tau_cut * w
    values = np.array([wright_density(alpha, t) for t in tau])
    return tau, weights, values


def bump_coefficients(n_modes: int, n_theta: int = 256) -> np.ndarray:
    theta = theta_grid(n_theta)
    return to_basis(GridFunction(theta * (math.pi - theta), 2.0), n_modes)


ORDER = FracOrder(0.75, 0.4)


@pytest.fixture(scope="session")
def model_p2():
    return build_model(8, ORDER, 1.0, None, None, 2.0, 256)


@pytest.fixture(scope="session")
def model_p4():
    return build_model(8, ORDER, 1.0, None, None, 4.0, 256)


@pytest.fixture(scope="session")
def gram_p2(model_p2):
    return assemble_gramian(model_p2, 512)


@pytest.fixture(scope="session")
def gram_p4(model_p4):
    return assemble_gramian(model_p4, 512)


@pytest.fixture(scope="session")
def grid_512():
    return TimeGrid(1.0, 512)
