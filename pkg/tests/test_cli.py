import json

import numpy as np
import pytest

from fracheat.cli import main
from fracheat.config import build_experiment, default_config_text, load_config


SMALL_OVERRIDES = [
    "--set", "model.modes=4",
    "--set", "solver.steps=96",
    "--set", "solver.n_theta=64",
    "--set", "sweep.epsilons=1e-1, 1e-2",
]


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(default_config_text())
    return path


class TestConfig:
    def test_default_text_is_loadable(self, config_file):
        cfg = load_config(config_file)
        exp = build_experiment(cfg, config_file.parent)
        assert exp.model.n_modes == 8
        assert exp.grid.steps == 512
        assert exp.quad_steps == 512
        assert exp.epsilons == [0.1, 0.01, 0.001, 0.0001]

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(default_config_text() + "\n[model]\n")
        path.write_text(default_config_text().replace("modes = 8", "modes = 8\nturbo = yes"))
        with pytest.raises(ValueError, match="unknown key"):
            load_config(path)

    def test_unknown_section_rejected(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(default_config_text() + "\n[extras]\nfoo = 1\n")
        with pytest.raises(ValueError, match="unknown config section"):
            load_config(path)

    def test_schema_version_checked(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text(default_config_text().replace("schema_version = 1", "schema_version = 2"))
        with pytest.raises(ValueError, match="schema_version"):
            load_config(path)

    def test_alpha_guard_revalidated(self, config_file):
        cfg = load_config(config_file, ["model.alpha=0.4"])
        with pytest.raises(ValueError, match=r"alpha must lie in \(1/2, 1\)"):
            build_experiment(cfg, config_file.parent)

    def test_epsilon_floor(self, config_file):
        cfg = load_config(config_file, ["sweep.epsilons=1e-1, 1e-6"])
        with pytest.raises(ValueError, match="1e-5"):
            build_experiment(cfg, config_file.parent)

    def test_hash_tracks_content(self, config_file):
        a = load_config(config_file)
        b = load_config(config_file, ["model.modes=4"])
        assert a.sha256 != b.sha256

    def test_state_specs(self, config_file):
        cfg = load_config(config_file, ["problem.x0=sine:2:0.5"])
        exp = build_experiment(cfg, config_file.parent)
        assert np.allclose(exp.x0, [0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        cfg = load_config(config_file, ["problem.x0=coeffs: 1, 2"])
        exp = build_experiment(cfg, config_file.parent)
        assert np.allclose(exp.x0[:2], [1.0, 2.0])
        cfg = load_config(config_file, ["problem.x0=pyramid"])
        with pytest.raises(ValueError):
            build_experiment(cfg, config_file.parent)


class TestCommands:
    def test_validate_passes_on_default(self, config_file, capsys):
        rc = main(["validate", str(config_file)] + SMALL_OVERRIDES)
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS]" in out
        assert "[FAIL]" not in out

    def test_validate_rejects_bad_alpha(self, config_file, capsys):
        rc = main(["validate", str(config_file), "--set", "model.alpha=0.4"])
        assert rc == 1
        assert "alpha" in capsys.readouterr().err

    def test_asymmetric_custom_kernel_rejected(self, tmp_path, capsys):
        table = np.ones((16, 16))
        table[2, 9] = 7.0
        np.savetxt(tmp_path / "kernel.csv", table, delimiter=",")
        path = tmp_path / "exp.cfg"
        path.write_text(default_config_text().replace("kernel_b = green",
                                                      "kernel_b = table:kernel.csv"))
        rc = main(["validate", str(path)] + SMALL_OVERRIDES)
        assert rc == 1
        assert "asymmetric" in capsys.readouterr().err

    def test_simulate_writes_trajectory(self, config_file, capsys):
        rc = main(["simulate", str(config_file)] + SMALL_OVERRIDES
                  + ["--forcing-coeffs", "0.4,0.1"])
        assert rc == 0
        path = config_file.parent / "out" / "trajectory.csv"
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# fracheat=")
        assert lines[1].split(",")[-1] == "l1_gap"
        assert len(lines) == 2 + 97
        gaps = [float(line.split(",")[-1]) for line in lines[2:]]
        scale = 3.2  # bump initial state norm ~ 3.19
        assert max(gaps) <= 1e-2 * scale

    def test_simulate_homogeneous_matches_relaxation(self, config_file, capsys):
        rc = main(["simulate", str(config_file)] + SMALL_OVERRIDES)
        assert rc == 0
        out = capsys.readouterr().out
        rel = float(out.split("cross-solver gap:")[1].split("relative")[0])
        assert rel <= 1e-3
        # homogeneous run: trajectory equals the relaxation of x0, column-wise
        from fracheat.fracops import mittag_leffler
        from fracheat.config import build_experiment, load_config

        cfg = load_config(config_file, ["model.modes=4", "solver.steps=96",
                                        "solver.n_theta=64"])
        exp = build_experiment(cfg, config_file.parent)
        lines = (config_file.parent / "out" / "trajectory.csv").read_text().splitlines()
        for line in lines[2::24]:
            cells = [float(v) for v in line.split(",")]
            t = cells[1]
            for n in range(4):
                want = mittag_leffler(0.75, -((n + 1) ** 2) * t**0.75) * exp.x0[n]
                assert cells[2 + n] == pytest.approx(want, abs=1e-12)

    def test_gramian_export(self, config_file):
        rc = main(["gramian", str(config_file)] + SMALL_OVERRIDES)
        assert rc == 0
        assert (config_file.parent / "out" / "gramian.csv").exists()

    def test_sweep_outputs_and_exit_code(self, config_file):
        rc = main(["sweep", str(config_file)] + SMALL_OVERRIDES)
        assert rc == 0
        out = config_file.parent / "out"
        assert (out / "sweep.csv").exists()
        assert (out / "trajectory_eps_1e-1.csv").exists()
        assert (out / "control_eps_1e-2.csv").exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["free_terminal_miss"] > 0.0
        assert len(summary["entries"]) == 2
        assert all(e["converged"] for e in summary["entries"])
        assert all(e["identity_residual"] <= 1e-6 for e in summary["entries"])
        header = (out / "sweep.csv").read_text().splitlines()[1]
        assert header == "epsilon,terminal_miss,control_energy,iterations,converged"

    def test_sweep_deterministic_outputs(self, tmp_path):
        files = {}
        for tag in ("a", "b"):
            sub = tmp_path / tag
            sub.mkdir()
            cfg = sub / "exp.cfg"
            cfg.write_text(default_config_text())
            rc = main(["sweep", str(cfg)] + SMALL_OVERRIDES)
            assert rc == 0
            files[tag] = {
                p.name: p.read_bytes() for p in sorted((sub / "out").glob("*.csv"))
            }
        assert files["a"].keys() == files["b"].keys()
        for name in files["a"]:
            assert files["a"][name] == files["b"][name], name

    def test_zero_potential_sweep_matches_linear_formula(self, config_file):
        from fracheat.gramian import assemble_gramian
        from fracheat.evolve import mild_solution
        from fracheat.lpspace import from_basis, lp_norm

        rc = main(["sweep", str(config_file)] + SMALL_OVERRIDES
                  + ["--set", "problem.potential=zero"])
        assert rc == 0
        summary = json.loads((config_file.parent / "out" / "summary.json").read_text())
        cfg = load_config(config_file, [
            "model.modes=4", "solver.steps=96", "solver.n_theta=64",
            "sweep.epsilons=1e-1, 1e-2", "problem.potential=zero",
        ])
        exp = build_experiment(cfg, config_file.parent)
        gram = assemble_gramian(exp.model, exp.quad_steps)
        free = mild_solution(exp.model, exp.grid, exp.x0)
        d = exp.target - free.terminal
        for entry in summary["entries"]:
            w = np.linalg.solve(entry["epsilon"] * np.eye(4) + gram.matrix, d)
            want = lp_norm(from_basis(entry["epsilon"] * w, 64, 2.0))
            assert entry["terminal_miss"] == pytest.approx(want, rel=1e-8)

    def test_sweep_nonconvergence_exit_code(self, config_file):
        # one fixed-point pass cannot converge for a genuinely nonsmooth run
        rc = main(["sweep", str(config_file)] + SMALL_OVERRIDES
                  + ["--set", "solver.fixed_point_max_iter=1"])
        assert rc == 2
        summary = json.loads((config_file.parent / "out" / "summary.json").read_text())
        assert any(not e["converged"] for e in summary["entries"])

    def test_simulate_near_classical_limit(self, config_file):
        rc = main(["simulate", str(config_file), "--set", "model.alpha=0.999",
                   "--set", "model.modes=4", "--set", "solver.steps=256",
                   "--set", "solver.n_theta=64", "--set", "problem.x0=sine:1"])
        assert rc == 0
        lines = (config_file.parent / "out" / "trajectory.csv").read_text().splitlines()
        for line in lines[2::32]:
            cells = line.split(",")
            t, c1 = float(cells[1]), float(cells[2])
            assert c1 == pytest.approx(np.exp(-t), abs=1e-2)

    def test_example_config_prints_template(self, capsys):
        assert main(["example-config"]) == 0
        assert "[model]" in capsys.readouterr().out
