"""Experiment configuration: INI-style file with nested blocks, strict keys.

Every numeric guard of the owning modules is re-validated at load, unknown
sections or keys are rejected, and the canonical key-value dump is hashed so
output files can embed the exact configuration they came from.
"""

from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fracops import FracOrder, TimeGrid
from .lpspace import GridFunction, theta_grid, to_basis
from .spectral import KernelSpec, SpectralModel, build_model
from .hvi import SELECTION_STRATEGIES, NonsmoothPotential, abs_potential, audit_potential, \
    saturating_potential, tabulated_potential, zero_potential

__all__ = ["ExperimentConfig", "Experiment", "load_config", "build_experiment",
           "default_config_text"]

SCHEMA_VERSION = 1

_SCHEMA = {
    "meta": {"schema_version": "1"},
    "model": {
        "modes": "8",
        "alpha": "0.75",
        "alpha1": "0.4",
        "horizon": "1.0",
        "p": "2.0",
        "kernel_b": "green",
        "kernel_h": "green",
    },
    "problem": {
        "x0": "bump",
        "target": "coeffs: 0.6, 0.2, -0.1",
        "potential": "abs:0.3",
    },
    "solver": {
        "steps": "512",
        "n_theta": "256",
        "quad_steps": "",
        "resolvent_tol": "1e-11",
        "resolvent_max_iter": "400",
        "fixed_point_tol": "1e-8",
        "fixed_point_max_iter": "80",
        "relaxation": "0.5",
        "strategy": "sticky",
        "seed": "0",
    },
    "sweep": {
        "epsilons": "1e-1, 1e-2, 1e-3, 1e-4",
        "workers": "1",
    },
    "output": {
        "directory": "out",
        "formats": "csv,json",
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated raw configuration plus its content hash."""

    raw: dict
    sha256: str

    def __getitem__(self, section: str) -> dict:
        return self.raw[section]


def default_config_text() -> str:
    lines = []
    for section, items in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, value in items.items():
            if value != "":
                lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def _hash(raw: dict) -> str:
    canon = ";".join(
        f"{s}.{k}={raw[s][k]}" for s in sorted(raw) for k in sorted(raw[s])
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse and validate a config file; overrides are 'section.key=value'."""
    parser = configparser.ConfigParser()
    read = parser.read(str(path))
    if not read:
        raise ValueError(f"cannot read config file {path}")
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"override must look like section.key=value, got {item!r}")
        target, value = item.split("=", 1)
        section, key = target.split(".", 1)
        if not parser.has_section(section.strip()):
            parser.add_section(section.strip())
        parser.set(section.strip(), key.strip(), value.strip())

    raw: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ValueError(f"unknown config section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            raw[section][key] = value.strip()
    # fill defaults
    for section, items in _SCHEMA.items():
        raw.setdefault(section, {})
        for key, value in items.items():
            raw[section].setdefault(key, value)
    if int(raw["meta"]["schema_version"]) != SCHEMA_VERSION:
        raise ValueError(
            f"unsupported schema_version {raw['meta']['schema_version']} (expected {SCHEMA_VERSION})"
        )
    return ExperimentConfig(raw=raw, sha256=_hash(raw))


def _parse_kernel(spec: str, base: Path) -> KernelSpec:
    spec = spec.strip()
    if spec in ("green", "min"):
        return KernelSpec(spec)
    if spec.startswith("table:"):
        table = np.loadtxt(base / spec[len("table:"):], delimiter=",")
        return KernelSpec("custom", table)
    raise ValueError(f"kernel must be green, min or table:<path>, got {spec!r}")


def _parse_state(spec: str, n_modes: int, n_theta: int) -> np.ndarray:
    spec = spec.strip()
    if spec == "zero":
        return np.zeros(n_modes)
    if spec == "bump":
        theta = theta_grid(n_theta)
        return to_basis(GridFunction(theta * (math.pi - theta), 2.0), n_modes)
    if spec.startswith("coeffs:"):
        vals = [float(v) for v in spec[len("coeffs:"):].split(",") if v.strip()]
        if len(vals) > n_modes:
            raise ValueError(f"state spec has {len(vals)} coefficients, model has {n_modes} modes")
        out = np.zeros(n_modes)
        out[: len(vals)] = vals
        return out
    if spec.startswith("sine:"):
        parts = spec[len("sine:"):].split(":")
        n = int(parts[0])
        amp = float(parts[1]) if len(parts) > 1 else 1.0
        if not 1 <= n <= n_modes:
            raise ValueError(f"sine mode {n} outside 1..{n_modes}")
        out = np.zeros(n_modes)
        out[n - 1] = amp
        return out
    raise ValueError(f"state must be zero, bump, coeffs:... or sine:n[:amp], got {spec!r}")


def _parse_potential(spec: str, base: Path, horizon: float) -> NonsmoothPotential:
    spec = spec.strip()
    if spec == "zero":
        return zero_potential()
    if spec.startswith("abs:"):
        return abs_potential(float(spec[len("abs:"):]))
    if spec.startswith("sat:"):
        parts = spec[len("sat:"):].split(":")
        cap = float(parts[1]) if len(parts) > 1 else 1.0
        return saturating_potential(float(parts[0]), cap)
    if spec.startswith("table:"):
        data = np.loadtxt(base / spec[len("table:"):], delimiter=",")
        pot = tabulated_potential(data[:, 0], data[:, 1])
        audit_potential(pot, np.linspace(0.0, horizon, 9), np.linspace(-3.0, 3.0, 201))
        return pot
    raise ValueError(f"potential must be zero, abs:c, sat:c[:cap] or table:<path>, got {spec!r}")


@dataclass
class Experiment:
    """Resolved unit of work for the command-line pipeline."""

    config: ExperimentConfig
    model: SpectralModel
    grid: TimeGrid
    quad_steps: int
    x0: np.ndarray
    target: np.ndarray
    potential: NonsmoothPotential
    resolvent_tol: float
    resolvent_max_iter: int
    fixed_point_tol: float
    fixed_point_max_iter: int
    relaxation: float
    strategy: str
    seed: int
    epsilons: list[float]
    workers: int
    output_dir: Path
    formats: tuple[str, ...]

    @property
    def eta_dual(self):
        """Dual-space bound for the selection set: pi^(1/p') * eta(t)."""
        factor = math.pi ** (1.0 / self.model.dual_p)
        eta = self.potential.eta
        return lambda t: factor * eta(t)


def build_experiment(cfg: ExperimentConfig, base: Path | None = None) -> Experiment:
    """Instantiate the model and problem data, re-validating every guard."""
    base = base if base is not None else Path.cwd()
    model_cfg = cfg["model"]
    solver = cfg["solver"]
    sweep = cfg["sweep"]

    order = FracOrder(float(model_cfg["alpha"]), float(model_cfg["alpha1"]))
    n_modes = int(model_cfg["modes"])
    horizon = float(model_cfg["horizon"])
    n_theta = int(solver["n_theta"])
    steps = int(solver["steps"])
    model = build_model(
        n_modes,
        order,
        horizon,
        _parse_kernel(model_cfg["kernel_b"], base),
        _parse_kernel(model_cfg["kernel_h"], base),
        float(model_cfg["p"]),
        n_theta,
    )
    grid = TimeGrid(horizon, steps)
    quad_raw = solver["quad_steps"]
    quad_steps = int(quad_raw) if quad_raw else steps
    if quad_steps < 16:
        raise ValueError(f"quad_steps must be >= 16, got {quad_steps}")
    strategy = solver["strategy"]
    if strategy not in SELECTION_STRATEGIES:
        raise ValueError(f"strategy must be one of {SELECTION_STRATEGIES}, got {strategy!r}")
    relaxation = float(solver["relaxation"])
    if not 0.0 < relaxation <= 1.0:
        raise ValueError(f"relaxation must lie in (0, 1], got {relaxation}")
    epsilons = [float(v) for v in sweep["epsilons"].split(",") if v.strip()]
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])) or not epsilons:
        raise ValueError("sweep epsilons must be a nonempty strictly descending list")
    if epsilons[-1] < 1e-5:
        raise ValueError("sweep epsilon below the 1e-5 desk-scale floor")
    workers = int(sweep["workers"])
    if workers < 1:
        raise ValueError("workers must be >= 1")
    formats = tuple(f.strip() for f in cfg["output"]["formats"].split(",") if f.strip())
    for fmt in formats:
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown output format {fmt!r}")

    return Experiment(
        config=cfg,
        model=model,
        grid=grid,
        quad_steps=quad_steps,
        x0=_parse_state(cfg["problem"]["x0"], n_modes, n_theta),
        target=_parse_state(cfg["problem"]["target"], n_modes, n_theta),
        potential=_parse_potential(cfg["problem"]["potential"], base, horizon),
        resolvent_tol=float(solver["resolvent_tol"]),
        resolvent_max_iter=int(solver["resolvent_max_iter"]),
        fixed_point_tol=float(solver["fixed_point_tol"]),
        fixed_point_max_iter=int(solver["fixed_point_max_iter"]),
        relaxation=relaxation,
        strategy=strategy,
        seed=int(solver["seed"]),
        epsilons=epsilons,
        workers=workers,
        output_dir=base / cfg["output"]["directory"],
        formats=formats,
    )
