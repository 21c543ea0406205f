"""Spectral model of the controlled fractional heat system on [0, pi].

The generator is diagonal in the orthonormal sine basis with eigenvalues
-n^2, so both operator families act as Mittag-Leffler multipliers on basis
coefficients.  The input and coupling operators are kernel integral operators
assembled into basis-coordinate matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fracops import FracOrder, ml_multipliers
from .lpspace import basis_matrix, conjugate_exponent, theta_grid

__all__ = [
    "KernelSpec",
    "SpectralModel",
    "InjectivityReport",
    "green_kernel",
    "min_kernel",
    "build_model",
    "propagate_state",
    "propagate_forcing",
    "apply_b",
    "apply_bstar",
    "apply_h",
    "injectivity_diagnostic",
]

_KERNEL_KINDS = ("green", "min", "custom")


def green_kernel(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """K(theta, omega) = omega (pi - theta) for omega <= theta, symmetric:
    pi times the Green's function of -d^2/dtheta^2 with Dirichlet ends."""
    lo = np.minimum(theta, omega)
    hi = np.maximum(theta, omega)
    return lo * (math.pi - hi)


def min_kernel(theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    return np.minimum(theta, omega)


@dataclass(frozen=True)
class KernelSpec:
    """Symmetric kernel on [0, pi]^2: a named kind or a midpoint-sampled table."""

    kind: str = "green"
    table: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KERNEL_KINDS:
            raise ValueError(f"kernel kind must be one of {_KERNEL_KINDS}, got {self.kind!r}")
        if self.kind == "custom":
            if self.table is None:
                raise ValueError("custom kernel requires a table")
            table = np.asarray(self.table, dtype=float)
            if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] < 8:
                raise ValueError(f"kernel table must be square with size >= 8, got {table.shape}")
            defect = float(np.max(np.abs(table - table.T)))
            if defect > 1e-8 * max(float(np.max(np.abs(table))), 1e-30):
                raise ValueError(f"asymmetric kernel table rejected (defect {defect:.3e})")
            table = table.copy()
            table.flags.writeable = False
            object.__setattr__(self, "table", table)
        elif self.table is not None:
            raise ValueError(f"kernel kind {self.kind!r} does not take a table")

    def values(self, theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
        if self.kind == "green":
            return green_kernel(theta, omega)
        if self.kind == "min":
            return min_kernel(theta, omega)
        return _bilinear_table(self.table, theta, omega)


def _bilinear_table(table: np.ndarray, theta: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of a midpoint-sampled table onto (theta, omega)."""
    m = table.shape[0]
    h = math.pi / m

    def locate(x):
        u = np.clip(np.asarray(x, dtype=float) / h - 0.5, 0.0, m - 1.0)
        i = np.minimum(u.astype(int), m - 2)
        return i, u - i

    it, ft = locate(theta)
    io, fo = locate(omega)
    return (
        table[it, io] * (1 - ft) * (1 - fo)
        + table[it + 1, io] * ft * (1 - fo)
        + table[it, io + 1] * (1 - ft) * fo
        + table[it + 1, io + 1] * ft * fo
    )


@dataclass(frozen=True)
class SpectralModel:
    """Immutable bundle of mode data and assembled operator matrices."""

    n_modes: int
    order: FracOrder
    horizon: float
    p: float
    n_theta: int
    eigenvalues: np.ndarray
    b_matrix: np.ndarray
    h_matrix: np.ndarray
    m_bound: float = 1.0
    b_norm_bound: float = 0.0
    h_norm_bound: float = 0.0

    def __post_init__(self) -> None:
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if not self.horizon > 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if not self.p >= 2.0:
            raise ValueError(f"state exponent p must be >= 2, got {self.p}")
        ev = np.asarray(self.eigenvalues, dtype=float)
        if ev.shape != (self.n_modes,):
            raise ValueError("eigenvalues must have one entry per mode")
        if np.any(np.diff(ev) >= 0.0):
            raise ValueError("eigenvalues must be strictly decreasing")
        for name in ("eigenvalues", "b_matrix", "h_matrix"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def dual_p(self) -> float:
        return conjugate_exponent(self.p)


def _assemble_kernel_matrix(kernel: KernelSpec, n_modes: int, n_theta: int) -> np.ndarray:
    """Basis-coordinate matrix M[m, n] = <K w_n, w_m>.

    Named kernels have a derivative kink along theta = omega, so the inner
    integral is split there and both directions use Gauss-Legendre; the
    result is accurate to ~1e-12 at modest node counts.  Tabulated kernels
    are integrated with the midpoint rule on their own grid.
    """
    if kernel.kind == "custom":
        m = kernel.table.shape[0]
        if n_modes > m // 2:
            raise ValueError(f"resolution guard: n_modes={n_modes} exceeds table size {m}//2")
        w = basis_matrix(n_modes, m)
        h = math.pi / m
        mat = h * h * (w.T @ kernel.table @ w)
    else:
        ng = max(64, 4 * n_modes)
        x, gw = np.polynomial.legendre.leggauss(ng)
        mode = np.arange(1, n_modes + 1)
        scale = math.sqrt(2.0 / math.pi)
        mat = np.zeros((n_modes, n_modes))
        # outer nodes on [0, pi]
        t_out = 0.5 * math.pi * (x + 1.0)
        w_out = 0.5 * math.pi * gw
        for ti, wi in zip(t_out, w_out):
            inner = np.zeros(n_modes)
            for lo, hi in ((0.0, ti), (ti, math.pi)):
                if hi - lo < 1e-14:
                    continue
                u = 0.5 * (hi - lo) * (x + 1.0) + lo
                wu = 0.5 * (hi - lo) * gw
                kv = kernel.values(np.full_like(u, ti), u)
                inner += (wu * kv) @ (scale * np.sin(np.outer(u, mode)))
            mat += wi * np.outer(scale * np.sin(mode * ti), inner)
    defect = float(np.max(np.abs(mat - mat.T)))
    scale_ref = max(float(np.max(np.abs(mat))), 1e-30)
    if defect > 1e-8 * scale_ref:
        raise ValueError(f"asymmetric kernel rejected (defect {defect:.3e})")
    return 0.5 * (mat + mat.T)


def _kernel_norm_bounds(kernel: KernelSpec, p: float, n_theta: int) -> tuple[float, float]:
    """Computable upper bounds for the operator norms of the kernel operator:
    L^2 -> L^p (Cauchy-Schwarz in the inner variable) and L^p' -> L^p
    (Hoelder in the inner variable)."""
    theta = theta_grid(n_theta)
    h = math.pi / n_theta
    tt, oo = np.meshgrid(theta, theta, indexing="ij")
    k = kernel.values(tt, oo)
    row_l2 = np.sum(k * k, axis=1) * h
    bound_l2_lp = (np.sum(row_l2 ** (p / 2.0)) * h) ** (1.0 / p)
    row_lp = np.sum(np.abs(k) ** p, axis=1) * h
    bound_lq_lp = (np.sum(row_lp) * h) ** (1.0 / p)
    return float(bound_l2_lp) * (1.0 + 1e-9), float(bound_lq_lp) * (1.0 + 1e-9)


def build_model(
    n_modes: int,
    order: FracOrder,
    horizon: float,
    kernel_b: KernelSpec | None = None,
    kernel_h: KernelSpec | None = None,
    p: float = 2.0,
    n_theta: int = 256,
) -> SpectralModel:
    """Assemble the diagonal-generator model with kernel operators B and H."""
    kernel_b = kernel_b if kernel_b is not None else KernelSpec("green")
    kernel_h = kernel_h if kernel_h is not None else KernelSpec("green")
    if n_modes > n_theta // 2:
        raise ValueError(f"resolution guard: n_modes={n_modes} exceeds n_theta/2={n_theta // 2}")
    eigenvalues = -np.arange(1, n_modes + 1, dtype=float) ** 2
    b_matrix = _assemble_kernel_matrix(kernel_b, n_modes, n_theta)
    h_matrix = _assemble_kernel_matrix(kernel_h, n_modes, n_theta)
    b_norm, _ = _kernel_norm_bounds(kernel_b, p, n_theta)
    _, h_norm = _kernel_norm_bounds(kernel_h, p, n_theta)
    return SpectralModel(
        n_modes=n_modes,
        order=order,
        horizon=horizon,
        p=p,
        n_theta=n_theta,
        eigenvalues=eigenvalues,
        b_matrix=b_matrix,
        h_matrix=h_matrix,
        m_bound=1.0,
        b_norm_bound=b_norm,
        h_norm_bound=h_norm,
    )


def _check_time(model: SpectralModel, t: float) -> float:
    if not -1e-12 <= t <= model.horizon * (1.0 + 1e-12):
        raise ValueError(f"t={t} outside [0, {model.horizon}]")
    return min(max(t, 0.0), model.horizon)


def _check_state(model: SpectralModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_modes,):
        raise ValueError(f"state must have shape ({model.n_modes},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("state coefficients must be finite")
    return x


def state_multipliers(model: SpectralModel, t: float) -> np.ndarray:
    """Diagonal multipliers E_alpha(lambda_n t^alpha) of the homogeneous family."""
    t = _check_time(model, t)
    return ml_multipliers(model.order.alpha, 1.0, model.eigenvalues * t**model.order.alpha)


def forcing_multipliers(model: SpectralModel, t: float) -> np.ndarray:
    """Diagonal multipliers E_{alpha,alpha}(lambda_n t^alpha) of the Duhamel family."""
    t = _check_time(model, t)
    a = model.order.alpha
    return ml_multipliers(a, a, model.eigenvalues * t**a)


def propagate_state(model: SpectralModel, t: float, x: np.ndarray) -> np.ndarray:
    """Homogeneous evolution: coefficient-wise E_alpha(lambda_n t^alpha) x_n."""
    return state_multipliers(model, t) * _check_state(model, x)


def propagate_forcing(model: SpectralModel, t: float, x: np.ndarray) -> np.ndarray:
    """Duhamel-kernel family: coefficient-wise E_{alpha,alpha}(lambda_n t^alpha) x_n.

    The family is diagonal with real entries, so its adjoint acts identically.
    """
    return forcing_multipliers(model, t) * _check_state(model, x)


def apply_b(model: SpectralModel, u: np.ndarray) -> np.ndarray:
    return model.b_matrix @ _check_state(model, u)


def apply_bstar(model: SpectralModel, xstar: np.ndarray) -> np.ndarray:
    return model.b_matrix.T @ _check_state(model, xstar)


def apply_h(model: SpectralModel, xstar: np.ndarray) -> np.ndarray:
    return model.h_matrix @ _check_state(model, xstar)


@dataclass(frozen=True)
class InjectivityReport:
    sigma_min_b: float
    sigma_min_gramian: float | None
    threshold: float
    controllable: bool

    @property
    def verdict(self) -> str:
        return (
            "approximately controllable (truncated)"
            if self.controllable
            else "degenerate (truncated)"
        )


def injectivity_diagnostic(
    model: SpectralModel,
    gramian_matrix: np.ndarray | None = None,
    threshold: float = 1e-9,
) -> InjectivityReport:
    """Truncated-model controllability check: smallest singular values of the
    input matrix and (when supplied) the Gramian, against a threshold."""
    sigma_b = float(np.linalg.svd(model.b_matrix, compute_uv=False)[-1])
    sigma_g = None
    ok = sigma_b > threshold
    if gramian_matrix is not None:
        sigma_g = float(np.linalg.svd(np.asarray(gramian_matrix, float), compute_uv=False)[-1])
        ok = ok and sigma_g > threshold
    return InjectivityReport(sigma_b, sigma_g, threshold, ok)
