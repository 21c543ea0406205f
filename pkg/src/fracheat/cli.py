"""Command-line experiment runner.

Commands: validate (invariant suite), simulate (trajectory + cross-solver
gap), gramian (assembly + audit + CSV export), sweep (regularization study).
Exit codes: 0 success, 1 validation failure, 2 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import Experiment, build_experiment, default_config_text, load_config
from .control import ConvergenceError, regularized_resolvent
from .evolve import l1_reference, mild_solution, trajectory_to_csv
from .fracops import mittag_leffler, mittag_leffler2, wright_density
from .gramian import assemble_gramian, gramian_min_singular, gramian_to_csv, verify_gramian
from .hvi import epsilon_sweep, free_terminal_miss, sweep_to_csv
from .lpspace import duality_map, from_basis, lp_norm, pairing
from .spectral import injectivity_diagnostic, propagate_state, propagate_forcing

_EXIT_OK = 0
_EXIT_VALIDATION = 1
_EXIT_NONCONVERGED = 2


def _header_lines(exp: Experiment) -> tuple[str, ...]:
    return (
        f"fracheat={__version__} schema={exp.config['meta']['schema_version']} "
        f"config_sha256={exp.config.sha256}",
    )


def _density_checks(alpha: float) -> tuple[float, float, float]:
    """(mass - 1, first and second subordination defects at lambda = 1)."""
    b_rate = (1.0 - alpha) * alpha ** (alpha / (1.0 - alpha))
    tau_cut = (28.0 / b_rate) ** (1.0 - alpha)
    x, w = np.polynomial.legendre.leggauss(500)
    tau = 0.5 * tau_cut * (x + 1.0)
    wt = 0.5 * tau_cut * w
    density = np.array([wright_density(alpha, t) for t in tau])
    mass = float(wt @ density)
    lam = 1.0
    sub1 = float(wt @ (density * np.exp(-lam * tau))) - mittag_leffler(alpha, -lam)
    sub2 = alpha * float(wt @ (tau * density * np.exp(-lam * tau))) - mittag_leffler2(
        alpha, alpha, -lam
    )
    return mass - 1.0, sub1, sub2


def cmd_validate(exp: Experiment) -> int:
    """Run the invariant suite; one pass/fail line per check."""
    rng = np.random.default_rng(exp.seed)
    model = exp.model
    checks: list[tuple[str, bool, str]] = []

    mass_defect, sub1, sub2 = _density_checks(model.order.alpha)
    checks.append(("density mass = 1", abs(mass_defect) <= 1e-6, f"defect {mass_defect:.2e}"))
    checks.append(("state-family subordination", abs(sub1) <= 1e-6, f"defect {sub1:.2e}"))
    checks.append(("forcing-family subordination", abs(sub2) <= 1e-6, f"defect {sub2:.2e}"))

    worst_pair = 0.0
    worst_norm = 0.0
    for _ in range(20):
        f = from_basis(rng.standard_normal(model.n_modes), model.n_theta, model.p)
        jf = duality_map(f)
        nf = lp_norm(f)
        worst_pair = max(worst_pair, abs(pairing(f, jf) - nf**2) / max(nf**2, 1e-300))
        worst_norm = max(worst_norm, abs(lp_norm(jf) - nf) / max(nf, 1e-300))
    checks.append(("duality map pairing identity", worst_pair <= 1e-8, f"defect {worst_pair:.2e}"))
    checks.append(("duality map norm identity", worst_norm <= 1e-8, f"defect {worst_norm:.2e}"))

    worst_s = 0.0
    worst_t = 0.0
    bound_t = model.m_bound / math.gamma(model.order.alpha)
    for _ in range(200):
        t = rng.uniform(0.0, model.horizon)
        x = rng.standard_normal(model.n_modes)
        nx = lp_norm(from_basis(x, model.n_theta, model.p))
        worst_s = max(worst_s, lp_norm(from_basis(propagate_state(model, t, x), model.n_theta, model.p)) / nx)
        worst_t = max(worst_t, lp_norm(from_basis(propagate_forcing(model, t, x), model.n_theta, model.p)) / nx)
    checks.append(("state-family bound M", worst_s <= model.m_bound * (1 + 1e-12),
                   f"sup ratio {worst_s:.6f}"))
    checks.append(("forcing-family bound M/Gamma(alpha)", worst_t <= bound_t * (1 + 1e-12),
                   f"sup ratio {worst_t:.6f} vs {bound_t:.6f}"))

    gram = assemble_gramian(model, exp.quad_steps)
    report = verify_gramian(gram, model, n_samples=50, seed=exp.seed)
    checks.append(("gramian symmetry", report.symmetric, f"defect {report.symmetry_defect:.2e}"))
    checks.append(("gramian positivity", report.positive, f"min eig {report.min_eigenvalue:.2e}"))
    checks.append(("gramian quadratic-form identity", report.quadratic_form_ok,
                   f"gap {report.quadratic_form_gap:.2e}"))
    checks.append(("gramian norm bound", report.norm_bound_ok, f"slack {report.norm_bound_slack:.3f}"))

    inj = injectivity_diagnostic(model, gram.matrix)
    checks.append((f"injectivity: {inj.verdict}", inj.controllable,
                   f"sigma_min(B)={inj.sigma_min_b:.3e} sigma_min(G)={inj.sigma_min_gramian:.3e}"))

    worst_lemma = 0.0
    for eps in (1e-2, 1e-1, 1.0):
        for _ in range(10):
            y = rng.standard_normal(model.n_modes)
            solve = regularized_resolvent(gram, model, eps, y,
                                          tol=exp.resolvent_tol, max_iter=exp.resolvent_max_iter)
            ratio = lp_norm(from_basis(eps * solve.result, model.n_theta, model.p)) / lp_norm(
                from_basis(y, model.n_theta, model.p)
            )
            worst_lemma = max(worst_lemma, ratio)
    checks.append(("resolvent contraction bound", worst_lemma <= 1.0 + 1e-8,
                   f"sup ratio {worst_lemma:.9f}"))

    ok = True
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        ok = ok and passed
    return _EXIT_OK if ok else _EXIT_VALIDATION


def cmd_gramian(exp: Experiment) -> int:
    gram = assemble_gramian(exp.model, exp.quad_steps)
    report = verify_gramian(gram, exp.model, seed=exp.seed)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    path = exp.output_dir / "gramian.csv"
    gramian_to_csv(gram, str(path), _header_lines(exp))
    print(f"gramian written to {path}")
    print(f"symmetry defect: {report.symmetry_defect:.3e}")
    print(f"min eigenvalue : {report.min_eigenvalue:.3e}")
    print(f"min singular   : {gramian_min_singular(gram):.3e}")
    print(f"norm bound     : {report.norm_bound:.3e} (slack {report.norm_bound_slack:.3f})")
    return _EXIT_OK if report.all_ok else _EXIT_VALIDATION


def _parse_coeff_list(text: str | None, n_modes: int) -> np.ndarray | None:
    if text is None:
        return None
    vals = [float(v) for v in text.split(",") if v.strip()]
    out = np.zeros(n_modes)
    out[: len(vals)] = vals
    return out


def cmd_simulate(exp: Experiment, forcing_coeffs: str | None, control_coeffs: str | None) -> int:
    model, grid = exp.model, exp.grid
    shape = (grid.steps + 1, model.n_modes)
    forcing = control = None
    fc = _parse_coeff_list(forcing_coeffs, model.n_modes)
    if fc is not None:
        forcing = np.tile(model.h_matrix @ fc, (shape[0], 1))
    uc = _parse_coeff_list(control_coeffs, model.n_modes)
    if uc is not None:
        control = np.tile(model.b_matrix @ uc, (shape[0], 1))
    traj = mild_solution(model, grid, exp.x0, forcing=forcing, control=control)
    ref = l1_reference(model, grid, exp.x0, forcing=forcing, control=control)
    gaps = [
        lp_norm(from_basis(a - b, model.n_theta, model.p))
        for a, b in zip(traj.states, ref.states)
    ]
    scale = max(lp_norm(from_basis(s, model.n_theta, model.p)) for s in traj.states)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    path = exp.output_dir / "trajectory.csv"
    with open(path, "w", newline="") as stream:
        for line in _header_lines(exp):
            stream.write(f"# {line}\n")
        writer = csv.writer(stream)
        writer.writerow(["node", "t"] + [f"c{n}" for n in range(1, model.n_modes + 1)] + ["l1_gap"])
        for k, t in enumerate(grid.nodes):
            writer.writerow([k, repr(float(t))] + [repr(float(v)) for v in traj.states[k]]
                            + [repr(gaps[k])])
    rel = max(gaps) / max(scale, 1e-300)
    print(f"trajectory written to {path}")
    print(f"cross-solver gap: {rel:.3e} relative (sup over nodes)")
    return _EXIT_OK


def cmd_sweep(exp: Experiment) -> int:
    model, grid = exp.model, exp.grid
    gram = assemble_gramian(model, exp.quad_steps)
    started = time.perf_counter()
    entries, results = epsilon_sweep(
        model, gram, grid, exp.potential, exp.target, exp.x0, exp.epsilons,
        strategy=exp.strategy, relaxation=exp.relaxation,
        tol=exp.fixed_point_tol, max_iter=exp.fixed_point_max_iter,
        resolvent_tol=exp.resolvent_tol, resolvent_max_iter=exp.resolvent_max_iter,
        workers=exp.workers, return_results=True,
    )
    elapsed = time.perf_counter() - started
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    headers = _header_lines(exp)
    if "csv" in exp.formats:
        sweep_to_csv(entries, str(exp.output_dir / "sweep.csv"), headers)
        for entry, result in zip(entries, results):
            if result is None:
                continue
            tag = f"{entry.epsilon:.0e}".replace("-0", "-")
            trajectory_to_csv(result.run.trajectory,
                              str(exp.output_dir / f"trajectory_eps_{tag}.csv"), headers)
            with open(exp.output_dir / f"control_eps_{tag}.csv", "w", newline="") as stream:
                for line in headers:
                    stream.write(f"# {line}\n")
                writer = csv.writer(stream)
                writer.writerow(["node", "t"] + [f"u{n}" for n in range(1, model.n_modes + 1)])
                for k, t in enumerate(grid.nodes):
                    writer.writerow([k, repr(float(t))]
                                    + [repr(float(v)) for v in result.run.control[k]])
    free_miss = free_terminal_miss(model, grid, exp.target, exp.x0)
    if "json" in exp.formats:
        summary = {
            "fracheat_version": __version__,
            "config_sha256": exp.config.sha256,
            "free_terminal_miss": free_miss,
            "elapsed_seconds": elapsed,
            "entries": [
                {
                    "epsilon": e.epsilon,
                    "terminal_miss": e.terminal_miss,
                    "predicted_miss": e.predicted_miss,
                    "control_energy": e.control_energy,
                    "iterations": e.iterations,
                    "converged": e.converged,
                    "identity_residual": e.identity_residual,
                }
                for e in entries
            ],
        }
        with open(exp.output_dir / "summary.json", "w") as stream:
            json.dump(summary, stream, indent=2, sort_keys=True)
    print(f"sweep outputs written to {exp.output_dir}")
    for e in entries:
        print(f"eps={e.epsilon:.1e} miss={e.terminal_miss:.6e} converged={e.converged}")
    print(f"free-dynamics miss: {free_miss:.6e}")
    return _EXIT_OK if all(e.converged for e in entries) else _EXIT_NONCONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracheat",
        description="Fractional evolution with nonsmooth forcing: simulation and "
        "regularized control synthesis.",
    )
    parser.add_argument("--version", action="version", version=f"fracheat {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("config", help="experiment config file (INI blocks)")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override a scalar config entry")

    add_common(sub.add_parser("validate", help="run the invariant suite"))
    add_common(sub.add_parser("gramian", help="assemble, audit and export the Gramian"))
    sim = sub.add_parser("simulate", help="integrate the system and cross-check solvers")
    add_common(sim)
    sim.add_argument("--forcing-coeffs", help="constant-in-time dual forcing coefficients")
    sim.add_argument("--control-coeffs", help="constant-in-time control coefficients")
    add_common(sub.add_parser("sweep", help="run the regularization sweep"))
    sub.add_parser("example-config", help="print a template configuration")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "example-config":
        print(default_config_text())
        return _EXIT_OK
    try:
        cfg = load_config(args.config, args.set)
        exp = build_experiment(cfg, Path(args.config).resolve().parent)
    except (ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    try:
        if args.command == "validate":
            return cmd_validate(exp)
        if args.command == "gramian":
            return cmd_gramian(exp)
        if args.command == "simulate":
            return cmd_simulate(exp, args.forcing_coeffs, args.control_coeffs)
        if args.command == "sweep":
            return cmd_sweep(exp)
    except ConvergenceError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return _EXIT_NONCONVERGED
    raise AssertionError("unreachable")


def entry() -> None:
    sys.exit(main())
