import io
import json
import math

import numpy as np
import pytest

from fracheat.fracops import FracOrder, TimeGrid, mittag_leffler, mittag_leffler2
from fracheat.evolve import Trajectory, l1_reference, mild_solution, trajectory_to_csv, \
    trajectory_to_json
from fracheat.spectral import SpectralModel, build_model

from conftest import ORDER


@pytest.fixture(scope="module")
def model4():
    return build_model(4, ORDER, 1.0, None, None, 2.0, 256)


def smooth_forcing(grid, amplitudes):
    return np.outer(np.sin(2.0 * grid.nodes) + 1.5, amplitudes)


def synthetic_single_mode(eigenvalue: float) -> SpectralModel:
    return SpectralModel(
        n_modes=1,
        order=ORDER,
        horizon=1.0,
        p=2.0,
        n_theta=256,
        eigenvalues=np.array([eigenvalue]),
        b_matrix=np.array([[1.0]]),
        h_matrix=np.array([[1.0]]),
        b_norm_bound=1.0,
        h_norm_bound=1.0,
    )


class TestMildSolution:
    def test_homogeneous_is_exact_relaxation(self, model4):
        grid = TimeGrid(1.0, 64)
        x0 = np.array([1.0, -0.5, 0.25, 2.0])
        traj = mild_solution(model4, grid, x0)
        for k, t in enumerate(grid.nodes):
            want = np.array(
                [mittag_leffler(0.75, lam * t**0.75) for lam in model4.eigenvalues]
            ) * x0
            assert np.allclose(traj.states[k], want, atol=1e-13)

    def test_constant_forcing_single_mode_analytic(self, model4):
        grid = TimeGrid(1.0, 512)
        x0 = np.array([0.7, 0.0, 0.0, 0.0])
        c = 1.3
        forcing = np.tile(np.array([c, 0.0, 0.0, 0.0]), (grid.steps + 1, 1))
        traj = mild_solution(model4, grid, x0, forcing=forcing)
        want = mittag_leffler(0.75, -1.0) * 0.7 + c * mittag_leffler2(0.75, 1.75, -1.0)
        err = abs(traj.terminal[0] - want)
        assert err <= 1e-4  # contract tolerance at 512 steps
        assert err <= 1e-10  # endpoint-anchored rule is exact for constants

    def test_zero_eigenvalue_reduces_to_fractional_integral(self):
        model = synthetic_single_mode(0.0)
        grid = TimeGrid(1.0, 64)
        c = 2.4
        forcing = np.full((grid.steps + 1, 1), c)
        traj = mild_solution(model, grid, np.zeros(1), forcing=forcing)
        for k, t in enumerate(grid.nodes):
            want = c * t**0.75 / math.gamma(1.75)
            assert traj.states[k][0] == pytest.approx(want, abs=1e-12)

    def test_superposition(self, model4):
        rng = np.random.default_rng(8)
        grid = TimeGrid(1.0, 128)
        x0 = rng.standard_normal(4)
        f1 = rng.standard_normal((129, 4))
        f2 = rng.standard_normal((129, 4))
        u1 = rng.standard_normal((129, 4))
        a, b = 0.7, -1.9
        combined = mild_solution(model4, grid, a * x0, forcing=a * f1 + b * f2, control=a * u1)
        t1 = mild_solution(model4, grid, x0, forcing=f1, control=u1)
        t2 = mild_solution(model4, grid, np.zeros(4), forcing=f2)
        gap = np.abs(combined.states - (a * t1.states + b * t2.states)).max()
        assert gap <= 1e-10

    def test_terminal_cauchy_refinement(self, model4):
        rng = np.random.default_rng(12)
        amp = rng.standard_normal(4)
        terminals = []
        for steps in (128, 256, 512):
            grid = TimeGrid(1.0, steps)
            forcing = smooth_forcing(grid, amp)
            control = np.outer(np.cos(grid.nodes), amp[::-1])
            traj = mild_solution(model4, grid, np.zeros(4), forcing=forcing, control=control)
            terminals.append(traj.terminal)
        d1 = np.linalg.norm(terminals[1] - terminals[0])
        d2 = np.linalg.norm(terminals[2] - terminals[1])
        assert d2 < d1
        assert d1 / d2 >= 1.8  # at least first-order decay of the increments

    def test_shape_guards(self, model4):
        grid = TimeGrid(1.0, 16)
        with pytest.raises(ValueError):
            mild_solution(model4, grid, np.zeros(3))
        with pytest.raises(ValueError):
            mild_solution(model4, grid, np.zeros(4), forcing=np.zeros((5, 4)))


class TestL1Reference:
    def test_zero_data_tracks_relaxation(self, model4):
        # scheme error of the corrected L1 on the stiff relaxation: the sup is
        # taken in the startup region; away from it the agreement is much
        # tighter (terminal checked separately)
        grid = TimeGrid(1.0, 512)
        x0 = np.array([1.0, -0.5, 0.25, 2.0])
        mild = mild_solution(model4, grid, x0)
        ref = l1_reference(model4, grid, x0)
        assert np.abs(mild.states - ref.states).max() <= 2e-2
        assert np.abs(mild.terminal - ref.terminal).max() <= 5e-3

    def test_cross_solver_agreement(self, model4):
        rng = np.random.default_rng(42)
        amp = rng.standard_normal(4)
        rels = []
        for steps in (128, 256, 512):
            grid = TimeGrid(1.0, steps)
            forcing = smooth_forcing(grid, amp)
            mild = mild_solution(model4, grid, np.zeros(4), forcing=forcing)
            ref = l1_reference(model4, grid, np.zeros(4), forcing=forcing)
            gap = np.sqrt(((mild.states - ref.states) ** 2).sum(axis=1)).max()
            scale = np.sqrt((mild.states**2).sum(axis=1)).max()
            rels.append(gap / scale)
        assert rels[-1] <= 1e-3
        # observed order on the terminal-state gap over three levels
        terms = []
        for steps in (128, 256, 512):
            grid = TimeGrid(1.0, steps)
            forcing = smooth_forcing(grid, amp)
            mild = mild_solution(model4, grid, np.zeros(4), forcing=forcing)
            ref = l1_reference(model4, grid, np.zeros(4), forcing=forcing)
            terms.append(np.linalg.norm(mild.terminal - ref.terminal))
        assert math.log2(terms[0] / terms[2]) / 2.0 >= 1.0

    def test_classical_limit(self):
        order = FracOrder(0.999, 0.4)
        model = build_model(4, order, 1.0, None, None, 2.0, 256)
        grid = TimeGrid(1.0, 512)
        x0 = np.array([1.0, -0.5, 0.25, 2.0])
        ref = l1_reference(model, grid, x0)
        classic = np.array([np.exp(model.eigenvalues * t) * x0 for t in grid.nodes])
        assert np.abs(ref.states - classic).max() <= 1e-2


class TestTrajectoryIO:
    def test_invariants(self, model4):
        grid = TimeGrid(1.0, 16)
        with pytest.raises(ValueError):
            Trajectory(grid, np.zeros((5, 4)))

    def test_csv_and_json(self, model4):
        grid = TimeGrid(1.0, 8)
        traj = mild_solution(model4, grid, np.array([1.0, 0.0, 0.0, 0.0]))
        buf = io.StringIO()
        trajectory_to_csv(traj, buf, header_lines=("origin=test",))
        text = buf.getvalue()
        assert text.startswith("# origin=test")
        assert text.count("\n") == 2 + grid.steps + 1
        payload = json.loads(trajectory_to_json(traj))
        assert payload["steps"] == 8
        assert len(payload["states"]) == 9
