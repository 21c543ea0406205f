"""Trajectory solvers for the mode-decoupled fractional evolution.

`mild_solution` evaluates the variation-of-constants formula with
product-integration weights that treat the weakly singular kernel exactly
against piecewise-linear data.  The forcing channel additionally anchors the
integrand at its right endpoint (where the closed Mittag-Leffler moment is
available), which removes the leading endpoint error; the control channel
keeps the plain rule so that closed-loop runs share the Gramian's quadrature
nodes exactly.  `l1_reference` integrates the same Caputo system with an
implicit L1 scheme and serves as an independent cross-check.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .fracops import TimeGrid, l1_coefficients, ml_multipliers, singular_conv_weights
from .spectral import SpectralModel

__all__ = [
    "Trajectory",
    "mild_solution",
    "l1_reference",
    "trajectory_to_csv",
    "trajectory_to_json",
]


@dataclass(frozen=True)
class Trajectory:
    """States (steps+1, n_modes) on a uniform time grid; row k is q(t_k)."""

    grid: TimeGrid
    states: np.ndarray

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        if states.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"states must have {self.grid.steps + 1} rows, got {states.shape[0]}"
            )
        states = states.copy()
        states.flags.writeable = False
        object.__setattr__(self, "states", states)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@lru_cache(maxsize=64)
def _multiplier_tables(
    alpha: float, eigenvalues: tuple, horizon: float, steps: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mittag-Leffler multiplier tables over grid lags.

    Rows k = 0..steps at t = k h: E_alpha(lam t^a), E_{a,a}(lam t^a) and
    t^a E_{a,a+1}(lam t^a) (the exact kernel moment int_0^t s^(a-1)
    E_{a,a}(lam s^a) ds).
    """
    lam = np.asarray(eigenvalues)
    t = np.linspace(0.0, horizon, steps + 1)
    args = lam[None, :] * (t[:, None] ** alpha)
    e_state = ml_multipliers(alpha, 1.0, args)
    e_force = ml_multipliers(alpha, alpha, args)
    e_moment = (t[:, None] ** alpha) * ml_multipliers(alpha, alpha + 1.0, args)
    for arr in (e_state, e_force, e_moment):
        arr.flags.writeable = False
    return e_state, e_force, e_moment


def _tables(model: SpectralModel, grid: TimeGrid):
    return _multiplier_tables(
        model.order.alpha, tuple(model.eigenvalues), grid.horizon, grid.steps
    )


def _as_node_array(data, grid: TimeGrid, n_modes: int, name: str) -> np.ndarray | None:
    if data is None:
        return None
    arr = np.asarray(data, dtype=float)
    if arr.shape != (grid.steps + 1, n_modes):
        raise ValueError(
            f"{name} must have shape ({grid.steps + 1}, {n_modes}), got {arr.shape}"
        )
    return arr


def mild_solution(
    model: SpectralModel,
    grid: TimeGrid,
    x0: np.ndarray,
    forcing: np.ndarray | None = None,
    control: np.ndarray | None = None,
) -> Trajectory:
    """Mild solution with node-sampled inputs that are already mapped into the
    state space (forcing = H g, control = B u, per node)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_modes,):
        raise ValueError(f"x0 must have shape ({model.n_modes},), got {x0.shape}")
    forcing = _as_node_array(forcing, grid, model.n_modes, "forcing")
    control = _as_node_array(control, grid, model.n_modes, "control")

    alpha = model.order.alpha
    e_state, e_force, e_moment = _tables(model, grid)
    states = np.empty((grid.steps + 1, model.n_modes))
    states[0] = x0
    weights = [singular_conv_weights(alpha, k, grid.dt) for k in range(grid.steps + 1)]
    for k in range(1, grid.steps + 1):
        q = e_state[k] * x0
        ef_rev = e_force[k::-1]
        if forcing is not None:
            # endpoint-anchored split: w_k times the exact kernel moment plus
            # product integration of the vanishing-at-t_k remainder
            q += e_moment[k] * forcing[k]
            q += np.einsum("j,jn->n", weights[k], ef_rev * (forcing[: k + 1] - forcing[k]))
        if control is not None:
            q += np.einsum("j,jn->n", weights[k], ef_rev * control[: k + 1])
        states[k] = q
    return Trajectory(grid, states)


@lru_cache(maxsize=64)
def _l1_starting_weights(alpha: float, steps: int) -> tuple[np.ndarray, np.ndarray]:
    """Starting weights making the L1 derivative exact on t^alpha and t^(2 alpha).

    The corrections sigma_k1 (q_1 - q_0) + sigma_k2 (q_2 - 2 q_1 + q_0) repair
    the O(h^alpha) startup layer of the plain scheme on solutions with the
    characteristic t^alpha, t^(2 alpha) behaviour at the origin.  The second
    correction is dropped once 2 alpha > 1.7: the t^(2 alpha) component is
    then effectively smooth (the plain scheme already resolves it at its
    design order h^(2 - alpha)) and the correction's defect sequence stops
    decaying in k, turning it into a persistent perturbation instead of a
    startup repair.  Returned arrays are h-free factors tau_m(k); the scheme
    scales them by dt^(-alpha).
    """
    b = l1_coefficients(alpha, steps)
    k = np.arange(0, steps + 1, dtype=float)
    g2m = math.gamma(2.0 - alpha)
    d = np.zeros(steps + 1)
    d[1:] = k[1:] ** alpha - k[:-1] ** alpha
    r1 = math.gamma(1.0 + alpha) - np.convolve(b, d)[: steps + 1] / g2m
    if 2.0 * alpha > 1.7:
        tau1 = r1
        tau2 = np.zeros(steps + 1)
    else:
        d2 = np.zeros(steps + 1)
        d2[1:] = k[1:] ** (2.0 * alpha) - k[:-1] ** (2.0 * alpha)
        gam2 = math.gamma(2.0 * alpha + 1.0) / math.gamma(alpha + 1.0)
        r2 = gam2 * k**alpha - np.convolve(b, d2)[: steps + 1] / g2m
        tau2 = (r2 - r1) / (2.0 ** (2.0 * alpha) - 2.0**alpha)
        tau1 = r1 - (2.0**alpha - 2.0) * tau2
    tau1.flags.writeable = False
    tau2.flags.writeable = False
    return tau1, tau2


def l1_reference(
    model: SpectralModel,
    grid: TimeGrid,
    x0: np.ndarray,
    forcing: np.ndarray | None = None,
    control: np.ndarray | None = None,
) -> Trajectory:
    """Implicit L1 time stepping of the Caputo system, mode by mode, with
    starting-weight corrections for the startup layer."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (model.n_modes,):
        raise ValueError(f"x0 must have shape ({model.n_modes},), got {x0.shape}")
    forcing = _as_node_array(forcing, grid, model.n_modes, "forcing")
    control = _as_node_array(control, grid, model.n_modes, "control")

    alpha = model.order.alpha
    lam = model.eigenvalues
    n = model.n_modes
    c = 1.0 / (grid.dt**alpha * math.gamma(2.0 - alpha))
    b = l1_coefficients(alpha, grid.steps)
    tau1, tau2 = _l1_starting_weights(alpha, grid.steps)
    s1 = tau1 / grid.dt**alpha
    s2 = tau2 / grid.dt**alpha

    def inhomogeneity(k: int) -> np.ndarray:
        w = np.zeros(n)
        if forcing is not None:
            w = w + forcing[k]
        if control is not None:
            w = w + control[k]
        return w

    states = np.empty((grid.steps + 1, n))
    states[0] = x0
    # steps 1 and 2 couple through the starting weights: 2x2 solve per mode of
    #   c (q1 - q0) + s1[1] (q1 - q0) + s2[1] (q2 - 2 q1 + q0) = lam q1 + w1
    #   c [(q2 - q1) + b1 (q1 - q0)] + s1[2] (q1 - q0)
    #       + s2[2] (q2 - 2 q1 + q0) = lam q2 + w2
    a11 = c + s1[1] - 2.0 * s2[1] - lam
    a12 = np.full(n, s2[1])
    a21 = np.full(n, c * (b[1] - 1.0) + s1[2] - 2.0 * s2[2])
    a22 = c + s2[2] - lam
    r1 = (c + s1[1] - s2[1]) * x0 + inhomogeneity(1)
    r2 = (c * b[1] + s1[2] - s2[2]) * x0 + inhomogeneity(2)
    det = a11 * a22 - a12 * a21
    states[1] = (r1 * a22 - a12 * r2) / det
    states[2] = (a11 * r2 - a21 * r1) / det

    increments = np.zeros((grid.steps, n))
    increments[0] = states[1] - states[0]
    increments[1] = states[2] - states[1]
    d1 = states[1] - states[0]
    d2 = states[2] - 2.0 * states[1] + states[0]
    for k in range(3, grid.steps + 1):
        # memory part: b_j pairs with the increment j steps back
        hist = np.einsum("j,jn->n", b[1:k], increments[k - 2 :: -1][: k - 1])
        rhs = c * (states[k - 1] - hist) - s1[k] * d1 - s2[k] * d2 + inhomogeneity(k)
        states[k] = rhs / (c - lam)
        increments[k - 1] = states[k] - states[k - 1]
    return Trajectory(grid, states)


def trajectory_to_csv(traj: Trajectory, stream, header_lines: tuple[str, ...] = ()) -> None:
    """Write rows (node, t, c1..cN); header_lines become leading comments."""
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w", newline="")
        close = True
    try:
        for line in header_lines:
            stream.write(f"# {line}\n")
        writer = csv.writer(stream)
        n_modes = traj.states.shape[1]
        writer.writerow(["node", "t"] + [f"c{n}" for n in range(1, n_modes + 1)])
        for k, t in enumerate(traj.grid.nodes):
            writer.writerow([k, repr(float(t))] + [repr(float(v)) for v in traj.states[k]])
    finally:
        if close:
            stream.close()


def trajectory_to_json(traj: Trajectory) -> str:
    payload = {
        "horizon": traj.grid.horizon,
        "steps": traj.grid.steps,
        "states": [[float(v) for v in row] for row in traj.states],
    }
    return json.dumps(payload, indent=2, sort_keys=True)
