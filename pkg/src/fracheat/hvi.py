"""Nonsmooth potentials, measurable selections and the regularized fixed point.

A potential is scalar and locally Lipschitz in the state variable with an
interval-valued generalized derivative; selections turn the interval into a
single forcing value per (node, grid point).  The composite map
g -> selection(closed-loop trajectory of g) is iterated with Krasnoselskii
averaging in forcing space, where convex combinations stay admissible.
Non-convergence is a reported outcome, not an exception: existence of the
fixed point is topological and the iteration is a heuristic.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .control import (
    ClosedLoopRun,
    ConvergenceError,
    closed_loop_trajectory,
    control_l2_norm,
    terminal_identity_residual,
)
from .evolve import Trajectory, mild_solution
from .fracops import TimeGrid
from .gramian import GramianOperator
from .lpspace import basis_matrix, from_basis, lp_norm, theta_grid
from .spectral import SpectralModel

__all__ = [
    "NonsmoothPotential",
    "zero_potential",
    "abs_potential",
    "saturating_potential",
    "tabulated_potential",
    "audit_potential",
    "clarke_directional",
    "select_forcing",
    "SELECTION_STRATEGIES",
    "FixedPointResult",
    "fixed_point_iterate",
    "SweepEntry",
    "epsilon_sweep",
    "sweep_to_csv",
    "free_terminal_miss",
    "hvi_residual",
]

SELECTION_STRATEGIES = ("minimal_norm", "midpoint", "sign_zero", "sticky")


@dataclass(frozen=True)
class NonsmoothPotential:
    """Scalar potential F(t, theta, r) with interval generalized derivative.

    `value` and `interval` broadcast over numpy arrays in (theta, r); `eta`
    is the pointwise bound sup |dF| <= eta(t) whose 1/alpha1-integrability the
    surrounding hypotheses assume (constants are integrable for any alpha1).
    """

    value: Callable
    interval: Callable
    eta: Callable[[float], float]
    label: str = "custom"


def zero_potential() -> NonsmoothPotential:
    def val(t, theta, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def ival(t, theta, r):
        z = np.zeros_like(np.asarray(r, dtype=float))
        return z, z.copy()

    return NonsmoothPotential(val, ival, lambda t: 0.0, "zero")


def abs_potential(c: float) -> NonsmoothPotential:
    """F = c |r|: derivative interval c sign(r), [-c, c] at the kink."""
    if c < 0:
        raise ValueError("coefficient must be nonnegative")

    def val(t, theta, r):
        return c * np.abs(np.asarray(r, dtype=float))

    def ival(t, theta, r):
        r = np.asarray(r, dtype=float)
        lo = np.where(r > 0.0, c, -c) * np.ones_like(r)
        hi = lo.copy()
        kink = r == 0.0
        lo = np.where(kink, -c, lo)
        hi = np.where(kink, c, hi)
        return lo, hi

    return NonsmoothPotential(val, ival, lambda t: c, f"abs:{c}")


def saturating_potential(c: float, cap: float = 1.0) -> NonsmoothPotential:
    """F = c min(|r|, cap): kinks at r = 0 and |r| = cap, derivative 0 beyond."""
    if c < 0 or cap <= 0:
        raise ValueError("need c >= 0 and cap > 0")

    def val(t, theta, r):
        return c * np.minimum(np.abs(np.asarray(r, dtype=float)), cap)

    def ival(t, theta, r):
        r = np.asarray(r, dtype=float)
        slope = np.where(np.abs(r) < cap, np.where(r > 0.0, c, -c), 0.0)
        lo = np.where(r == 0.0, -c, slope)
        hi = np.where(r == 0.0, c, slope)
        lo = np.where(r == cap, 0.0, lo)
        hi = np.where(r == cap, c, hi)
        lo = np.where(r == -cap, -c, lo)
        hi = np.where(r == -cap, 0.0, hi)
        return lo, hi

    return NonsmoothPotential(val, ival, lambda t: c, f"sat:{c}:{cap}")


def tabulated_potential(breaks: np.ndarray, values: np.ndarray) -> NonsmoothPotential:
    """Piecewise-linear potential in r given by (breaks, values); slopes are
    extended constantly beyond the table."""
    breaks = np.asarray(breaks, dtype=float)
    values = np.asarray(values, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
        raise ValueError("breaks must be strictly increasing with at least 2 entries")
    if values.shape != breaks.shape:
        raise ValueError("values must match breaks")
    slopes = np.diff(values) / np.diff(breaks)
    eta_max = float(np.max(np.abs(slopes)))

    def val(t, theta, r):
        return np.interp(np.asarray(r, dtype=float), breaks, values)

    def ival(t, theta, r):
        r = np.asarray(r, dtype=float)
        idx = np.clip(np.searchsorted(breaks, r, side="right") - 1, 0, slopes.size - 1)
        lo = slopes[idx]
        hi = lo.copy()
        # interval at interior break points spans the adjacent slopes
        at_break = np.isin(r, breaks[1:-1])
        if np.any(at_break):
            jdx = np.clip(np.searchsorted(breaks, r) - 1, 0, slopes.size - 1)
            left = slopes[np.clip(jdx, 0, slopes.size - 1)]
            right = slopes[np.clip(jdx + 1, 0, slopes.size - 1)]
            lo = np.where(at_break, np.minimum(left, right), lo)
            hi = np.where(at_break, np.maximum(left, right), hi)
        return lo, hi

    return NonsmoothPotential(val, ival, lambda t: eta_max, "table")


def audit_potential(
    pot: NonsmoothPotential,
    t_samples: np.ndarray,
    r_samples: np.ndarray,
    theta_samples: np.ndarray | None = None,
) -> None:
    """Runtime admissibility audit: lo <= hi and |lo|, |hi| <= eta(t)."""
    theta_samples = theta_samples if theta_samples is not None else np.array([math.pi / 2])
    for t in np.asarray(t_samples, dtype=float):
        bound = float(pot.eta(t))
        for theta in theta_samples:
            lo, hi = pot.interval(t, theta, r_samples)
            if np.any(lo > hi + 1e-14):
                raise ValueError(f"potential interval inverted at t={t}")
            if np.max(np.abs(lo)) > bound + 1e-12 or np.max(np.abs(hi)) > bound + 1e-12:
                raise ValueError(f"potential bound eta(t)={bound} violated at t={t}")


def clarke_directional(pot: NonsmoothPotential, t: float, theta, r, v):
    """Generalized directional derivative: support function of the interval,
    max(lo*v, hi*v)."""
    lo, hi = pot.interval(t, theta, np.asarray(r, dtype=float))
    v = np.asarray(v, dtype=float)
    return np.maximum(lo * v, hi * v)


def select_forcing(
    pot: NonsmoothPotential,
    strategy: str,
    trajectory: Trajectory,
    model: SpectralModel,
    previous: np.ndarray | None = None,
) -> np.ndarray:
    """Pointwise admissible forcing g(t_k, theta_j) in the derivative interval
    along the trajectory; shape (steps+1, n_theta)."""
    if strategy not in SELECTION_STRATEGIES:
        raise ValueError(f"strategy must be one of {SELECTION_STRATEGIES}, got {strategy!r}")
    theta = theta_grid(model.n_theta)
    nodes = trajectory.grid.nodes
    out = np.empty((nodes.size, model.n_theta))
    for k, t in enumerate(nodes):
        q_vals = from_basis(trajectory.states[k], model.n_theta, model.p).values
        lo, hi = pot.interval(float(t), theta, q_vals)
        if strategy == "minimal_norm":
            g = np.clip(0.0, lo, hi)
        elif strategy == "midpoint":
            g = 0.5 * (lo + hi)
        elif strategy == "sign_zero":
            g = np.where((lo <= 0.0) & (hi >= 0.0), 0.0, 0.5 * (lo + hi))
        else:  # sticky
            if previous is None:
                g = np.clip(0.0, lo, hi)
            else:
                g = np.clip(previous[k], lo, hi)
        bound = float(pot.eta(float(t)))
        if np.max(np.abs(g)) > bound + 1e-12:
            raise AssertionError("selection escaped the admissible bound")
        out[k] = g
    return out


def forcing_to_coordinates(model: SpectralModel, g: np.ndarray) -> np.ndarray:
    """Project grid-valued dual forcing onto the basis and apply the coupling
    operator: rows H ghat(t_k)."""
    w_scale = math.pi / model.n_theta
    w = basis_matrix(model.n_modes, model.n_theta)
    coeffs = g @ w * w_scale
    return coeffs @ model.h_matrix.T


@dataclass
class FixedPointResult:
    """Fixed point at tolerance.

    `g` is an exact pointwise selection along `run.trajectory` (so membership
    checks hold at machine precision); `g_relaxed` is the averaged iterate the
    trajectory was integrated from, and `fixed_point_residual` the sup-norm
    trajectory change under one more unrelaxed application of the composite
    map -- the dynamics-vs-membership gap inherent to stopping at tolerance.
    """

    g: np.ndarray
    g_relaxed: np.ndarray
    run: ClosedLoopRun
    residuals: list[float]
    iterations: int
    converged: bool
    fixed_point_residual: float
    strategy: str
    relaxation: float


def _trajectory_gap(model: SpectralModel, a: Trajectory, b: Trajectory) -> float:
    return max(
        lp_norm(from_basis(sa - sb, model.n_theta, model.p))
        for sa, sb in zip(a.states, b.states)
    )


def fixed_point_iterate(
    model: SpectralModel,
    gram: GramianOperator,
    grid: TimeGrid,
    epsilon: float,
    pot: NonsmoothPotential,
    z: np.ndarray,
    x0: np.ndarray,
    strategy: str = "sticky",
    relaxation: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 80,
    resolvent_tol: float = 1e-11,
    resolvent_max_iter: int = 400,
) -> FixedPointResult:
    """Damped iteration of g -> selection(closed-loop trajectory of g).

    Stops when successive trajectories differ by at most tol in the sup (over
    nodes) state norm; exhaustion of max_iter returns the best iterate flagged
    as non-converged.
    """
    if not 0.0 < relaxation <= 1.0:
        raise ValueError(f"relaxation must lie in (0, 1], got {relaxation}")

    def run_for(g: np.ndarray) -> ClosedLoopRun:
        return closed_loop_trajectory(
            model, gram, grid, epsilon, z, x0,
            forcing=forcing_to_coordinates(model, g),
            tol=resolvent_tol, max_iter=resolvent_max_iter,
        )

    g = np.zeros((grid.steps + 1, model.n_theta))
    run = run_for(g)
    residuals: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        g_sel = select_forcing(pot, strategy, run.trajectory, model, previous=g)
        g_new = (1.0 - relaxation) * g + relaxation * g_sel
        run_new = run_for(g_new)
        gap = _trajectory_gap(model, run_new.trajectory, run.trajectory)
        residuals.append(gap)
        g, run = g_new, run_new
        if gap <= tol:
            converged = True
            break
    g_select = select_forcing(pot, strategy, run.trajectory, model, previous=g)
    run_audit = run_for(g_select)
    fp_residual = _trajectory_gap(model, run_audit.trajectory, run.trajectory)
    return FixedPointResult(
        g=g_select,
        g_relaxed=g,
        run=run,
        residuals=residuals,
        iterations=iterations,
        converged=converged,
        fixed_point_residual=fp_residual,
        strategy=strategy,
        relaxation=relaxation,
    )


@dataclass
class SweepEntry:
    epsilon: float
    terminal_miss: float
    control_energy: float
    iterations: int
    converged: bool
    identity_residual: float
    predicted_miss: float


def free_terminal_miss(model: SpectralModel, grid: TimeGrid, z: np.ndarray,
                       x0: np.ndarray) -> float:
    """Miss of the uncontrolled, unforced dynamics: ||z - S(a) x0||."""
    free = mild_solution(model, grid, np.asarray(x0, dtype=float))
    return lp_norm(from_basis(np.asarray(z, float) - free.terminal, model.n_theta, model.p))


def epsilon_sweep(
    model: SpectralModel,
    gram: GramianOperator,
    grid: TimeGrid,
    pot: NonsmoothPotential,
    z: np.ndarray,
    x0: np.ndarray,
    eps_list,
    strategy: str = "sticky",
    relaxation: float = 0.5,
    tol: float = 1e-8,
    max_iter: int = 80,
    resolvent_tol: float = 1e-11,
    resolvent_max_iter: int = 400,
    workers: int = 1,
    return_results: bool = False,
):
    """Regularization study over a descending epsilon list (min 1e-5).

    Entries are independent (no warm starts), so a worker pool may solve them
    concurrently; per-epsilon failures are recorded and the sweep continues.
    """
    eps = [float(e) for e in eps_list]
    if len(eps) == 0:
        raise ValueError("epsilon list must be nonempty")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilon list must be strictly descending")
    if eps[-1] < 1e-5:
        raise ValueError("epsilon below the 1e-5 desk-scale floor")

    def solve_one(e: float) -> tuple[SweepEntry, FixedPointResult | None]:
        try:
            fp = fixed_point_iterate(
                model, gram, grid, e, pot, z, x0,
                strategy=strategy, relaxation=relaxation, tol=tol, max_iter=max_iter,
                resolvent_tol=resolvent_tol, resolvent_max_iter=resolvent_max_iter,
            )
        except ConvergenceError:
            return SweepEntry(e, math.nan, math.nan, 0, False, math.nan, math.nan), None
        run = fp.run
        miss = lp_norm(
            from_basis(run.trajectory.terminal - np.asarray(z, float), model.n_theta, model.p)
        )
        predicted = lp_norm(from_basis(e * run.solve.result, model.n_theta, model.p))
        entry = SweepEntry(
            epsilon=e,
            terminal_miss=miss,
            control_energy=control_l2_norm(run.control, grid),
            iterations=fp.iterations,
            converged=fp.converged,
            identity_residual=terminal_identity_residual(run, model, np.asarray(z, float)),
            predicted_miss=predicted,
        )
        return entry, fp

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            solved = list(pool.map(solve_one, eps))
    else:
        solved = [solve_one(e) for e in eps]
    entries = [s[0] for s in solved]
    if return_results:
        return entries, [s[1] for s in solved]
    return entries


def sweep_to_csv(entries: list[SweepEntry], stream, header_lines: tuple[str, ...] = ()) -> None:
    close = False
    if isinstance(stream, (str, bytes)):
        stream = open(stream, "w", newline="")
        close = True
    try:
        for line in header_lines:
            stream.write(f"# {line}\n")
        writer = csv.writer(stream)
        writer.writerow(["epsilon", "terminal_miss", "control_energy", "iterations", "converged"])
        for e in entries:
            writer.writerow(
                [repr(e.epsilon), repr(e.terminal_miss), repr(e.control_energy),
                 e.iterations, e.converged]
            )
    finally:
        if close:
            stream.close()


def hvi_residual(
    model: SpectralModel,
    trajectory: Trajectory,
    g: np.ndarray,
    pot: NonsmoothPotential,
    test_directions: np.ndarray,
    node_stride: int = 16,
) -> float:
    """Worst signed violation of <H g(t), v*> <= integral of the directional
    derivative along H* v*, over sampled nodes and test directions.

    Nonpositive (up to roundoff) when g is a true pointwise selection; a
    synthetic non-member forcing produces a positive violation for some
    direction.
    """
    test_directions = np.asarray(test_directions, dtype=float)
    if test_directions.ndim != 2 or test_directions.shape[1] != model.n_modes:
        raise ValueError("test_directions must be (m, n_modes) coefficient rows")
    theta = theta_grid(model.n_theta)
    h = math.pi / model.n_theta
    w = basis_matrix(model.n_modes, model.n_theta)
    worst = -math.inf
    nodes = trajectory.grid.nodes
    for k in range(0, nodes.size, max(1, node_stride)):
        t = float(nodes[k])
        ghat = (g[k] @ w) * h
        q_vals = (w @ trajectory.states[k])
        lo, hi = pot.interval(t, theta, q_vals)
        for vstar in test_directions:
            lhs = float((model.h_matrix @ ghat) @ vstar)
            direction = w @ (model.h_matrix.T @ vstar)
            rhs = float(np.sum(np.maximum(lo * direction, hi * direction)) * h)
            worst = max(worst, lhs - rhs)
    return worst
