"""Command-line driver.

Parameters resolve as: built-in defaults < ``--config`` TOML file < flags.
Config keys are the flag names without the leading dashes (``t-max = 3000``).

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .diagnostics import (check_nondegeneracy, fourier_coeffs, nonpersistence_conditions,
                          resonance_min, wronskian_det)
from .functional import GridSpec, compute_m_rho, convergence_study
from .integrate import EscapeEvent, IntegrationConfig, integrate_flow
from .outputs import (atomic_write_text, ftle_csv_text, json_text, poincare_csv_text,
                      sweep_csv_text, trajectory_csv_text)
from .poincare import QuadratureError, error_ratios, scaling_study, sine_model
from .systems import BenchmarkParams, benchmark_system, check_weighted_divergence, sample_box

log = logging.getLogger("weighted_integrability")

SUBCOMMANDS = ("compute", "sweep", "converge", "trajectory", "poincare", "diagnose",
               "verify-divergence")
DIVERGENCE_H = 1e-5
DIVERGENCE_BOUND = 1e-8


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    subcommand: str = "compute"
    epsilon: float = 0.5
    delta: float = 0.3
    alpha: float = 0.1
    grid_nx: int = 5
    box_lo: float = -0.9
    box_hi: float = 0.9
    x2: float = 0.7
    y2: float = 0.0
    dt: float = 0.01
    t_max: float = 1500.0
    tol: float = 1e-2
    fd_h: float = 1e-6
    escape_radius: float = 10.0
    method: str = "euler"
    renorm_every: int = 1
    directions: int = 1
    quad_nodes: int = 1024
    alphas: Optional[tuple] = None
    epsilons: tuple = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    u0: tuple = (0.5, 0.5, 0.7, 0.0)
    stride: int = 10
    samples: int = 100
    max_order: int = 10
    workers: int = 1
    seed: int = 0
    out: Optional[str] = None
    ftle_csv: Optional[str] = None
    traj_csv: Optional[str] = None
    config: Optional[str] = None

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.subcommand in SUBCOMMANDS, f"unknown subcommand {self.subcommand!r}")
        for name in ("epsilon", "delta", "alpha", "dt", "t_max", "tol", "fd_h",
                     "escape_radius", "box_lo", "box_hi", "x2", "y2"):
            need(math.isfinite(getattr(self, name)), f"--{_flag(name)} must be finite")
        need(self.epsilon >= 0, "--epsilon must be >= 0 (density must stay positive)")
        need(self.alpha >= 0, "--alpha must be >= 0")
        need(self.dt > 0, f"--dt must be > 0, got {self.dt}")
        need(self.t_max > 0, f"--t-max must be > 0, got {self.t_max}")
        need(self.t_max >= self.dt, "--t-max must be at least one step (>= --dt)")
        need(self.tol > 0, "--tol must be > 0")
        need(self.fd_h > 0, "--fd-h must be > 0")
        need(self.escape_radius > 0, "--escape-radius must be > 0")
        need(self.method in ("euler", "rk4"), "--method must be 'euler' or 'rk4'")
        need(self.grid_nx >= 1, "--grid-nx must be >= 1")
        need(self.box_lo < self.box_hi, "--box-lo must be below --box-hi")
        need(self.renorm_every >= 1, "--renorm-every must be >= 1")
        need(self.directions >= 1, "--directions must be >= 1")
        need(self.quad_nodes >= 64 and self.quad_nodes % 2 == 0,
             "--quad-nodes must be an even integer >= 64")
        need(self.workers >= 1, "--workers must be >= 1")
        need(self.stride >= 1, "--stride must be >= 1")
        need(self.samples >= 1, "--samples must be >= 1")
        need(self.max_order >= 1, "--max-order must be >= 1")
        need(len(self.u0) == 4, "--u0 needs four comma-separated values")
        need(all(e > 0 for e in self.epsilons), "--epsilons must be positive")
        if self.alphas is not None:
            need(len(self.alphas) > 0, "--alphas must be non-empty")
            need(all(a >= 0 for a in self.alphas), "--alphas must be >= 0")
        return self

    def echo(self) -> dict:
        """Numerical parameters embedded in output files (no paths, no worker count)."""
        skip = {"subcommand", "workers", "out", "ftle_csv", "traj_csv", "config"}
        d = {k: v for k, v in asdict(self).items() if k not in skip}
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["tool_version"] = __version__
        return d

    def benchmark(self, alpha: Optional[float] = None) -> BenchmarkParams:
        return BenchmarkParams(self.epsilon, self.delta, self.alpha if alpha is None else alpha)

    def integration(self, stride: int = 1) -> IntegrationConfig:
        return IntegrationConfig(dt=self.dt, t_max=self.t_max, method=self.method,
                                 escape_radius=self.escape_radius,
                                 renorm_every=self.renorm_every, fd_h=self.fd_h,
                                 output_stride=stride)

    def grid(self) -> GridSpec:
        return GridSpec(nx=self.grid_nx, box_lo=self.box_lo, box_hi=self.box_hi,
                        fixed=(self.x2, self.y2))


def _flag(name: str) -> str:
    return name.replace("_", "-")


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
VALID_KEYS = sorted(_flag(f.name) for f in fields(RunConfig)
                    if f.name not in ("subcommand", "config"))


def _float_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    try:
        if name in ("alphas", "epsilons", "u0"):
            return _float_list(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "str":
            return str(value)
        return None if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {value!r} for {_flag(name)}") from None


def read_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    out = {}
    for key, value in raw.items():
        if key not in VALID_KEYS:
            raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(VALID_KEYS)}")
        if isinstance(value, dict):
            raise ConfigError(f"config key {key!r} must be a flat value")
        name = key.replace("-", "_")
        out[name] = _coerce(name, value)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    add = common.add_argument
    add("--config", help="TOML file with flat keys named like the flags")
    add("--epsilon", type=float, help="density curvature (default 0.5)")
    add("--delta", type=float, help="linear coupling (default 0.3)")
    add("--alpha", type=float, help="cubic nonlinearity (default 0.1)")
    add("--grid-nx", type=int, help="grid points per sampled axis (default 5)")
    add("--box-lo", type=float, help="lower edge of the (x1, y1) box (default -0.9)")
    add("--box-hi", type=float, help="upper edge of the (x1, y1) box (default 0.9)")
    add("--x2", type=float, help="fixed x2 of grid points (default 0.7)")
    add("--y2", type=float, help="fixed y2 of grid points (default 0)")
    add("--dt", type=float, help="time step (default 0.01)")
    add("--t-max", type=float, help="final time T (default 1500)")
    add("--tol", type=float, help="regularity threshold on |lambda| (default 1e-2)")
    add("--fd-h", type=float, help="forward-difference Jacobian step (default 1e-6)")
    add("--escape-radius", type=float, help="escape radius (default 10)")
    add("--method", choices=("euler", "rk4"), help="integrator (default euler)")
    add("--renorm-every", type=int, help="tangent renormalisation cadence in steps (default 1)")
    add("--directions", type=int, help="random initial tangents averaged per point (default 1)")
    add("--quad-nodes", type=int, help="Simpson subintervals for the period map (default 1024)")
    add("--alphas", help="comma-separated alpha values for sweep/trajectory")
    add("--epsilons", help="comma-separated perturbation sizes for poincare")
    add("--u0", help="initial condition x1,y1,x2,y2 for trajectory (default 0.5,0.5,0.7,0)")
    add("--stride", type=int, help="store every n-th trajectory step (default 10)")
    add("--samples", type=int, help="random points for verify-divergence (default 100)")
    add("--max-order", type=int, help="lattice cutoff for the resonance search (default 10)")
    add("--workers", type=int, help="worker threads (default 1)")
    add("--seed", type=int, help="random seed (default 0)")
    add("--out", help="primary output file")
    add("--ftle-csv", help="per-orbit FTLE table (compute)")
    add("--traj-csv", help="trajectory CSV path; one file per alpha (trajectory)")

    parser = argparse.ArgumentParser(
        prog="mrho", description="Weighted partial integrability toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "compute": "m_rho on the benchmark grid; writes report JSON and FTLE CSV",
        "sweep": "m_rho for several alpha values; writes sweep CSV",
        "converge": "sensitivity of m_rho to T, dt and grid resolution",
        "trajectory": "trajectories for several alpha values as CSV",
        "poincare": "first-order period map vs RK4 oracle on the sine model",
        "diagnose": "Wronskian, resonance, Fourier and non-persistence checks",
        "verify-divergence": "max |div(rho V)| over random points",
    }
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name],
                       argument_default=argparse.SUPPRESS)
    return parser


def load_config(argv: Optional[Sequence[str]] = None) -> RunConfig:
    args = vars(build_parser().parse_args(argv))
    args.pop("verbose", None)
    values = {}
    if "config" in args:
        values.update(read_config_file(args["config"]))
    for key, value in args.items():
        values[key] = _coerce(key, value) if key not in ("subcommand",) else value
    return RunConfig(**values).validate()


# ----------------------------------------------------------------------------
# subcommands


class NumericalFailure(RuntimeError):
    pass


def _default(path, fallback):
    return path if path is not None else fallback


def _cmd_compute(cfg: RunConfig) -> None:
    system = benchmark_system(cfg.benchmark())
    report = compute_m_rho(system, cfg.grid(), cfg.integration(), cfg.tol, cfg.workers,
                           cfg.seed, cfg.directions)
    report.params = cfg.echo()
    atomic_write_text(_default(cfg.ftle_csv, "ftle.csv"),
                      ftle_csv_text(report.records, system.coordinate_labels(), report.params))
    atomic_write_text(_default(cfg.out, "report.json"), json_text(report.to_dict()))
    print(f"m_rho = {report.m_rho:.6f}  (regular {report.n_regular}/{report.n_total}, "
          f"escaped {report.n_escaped}, alpha={cfg.alpha:g})")
    if report.n_escaped == report.n_total:
        raise NumericalFailure("every sampled orbit escaped")


def _cmd_sweep(cfg: RunConfig) -> None:
    alphas = cfg.alphas if cfg.alphas is not None else (0.0, 0.1, 0.3)
    reports = []
    for a in alphas:
        system = benchmark_system(cfg.benchmark(a))
        rep = compute_m_rho(system, cfg.grid(), cfg.integration(), cfg.tol, cfg.workers,
                            cfg.seed, cfg.directions)
        reports.append(rep)
        print(f"alpha = {a:g}  m_rho = {rep.m_rho:.6f}  escaped {rep.n_escaped}/{rep.n_total}")
    atomic_write_text(_default(cfg.out, "sweep.csv"), sweep_csv_text(alphas, reports, cfg.echo()))


def _cmd_converge(cfg: RunConfig) -> None:
    system = benchmark_system(cfg.benchmark())
    rows = convergence_study(system, cfg.grid(), cfg.integration(), cfg.tol, cfg.workers)
    for r in rows:
        print(f"{r.name:6s} m {r.m_base:.4f} -> {r.m_new:.4f}  rel {r.rel_delta_m:.3%}  "
              f"mean|dlambda| {r.mean_abs_delta_lambda:.3g}")
    atomic_write_text(_default(cfg.out, "convergence.json"),
                      json_text({"params": cfg.echo(), "rows": [r.to_dict() for r in rows],
                                 "tool_version": __version__}))


def _traj_path(base: str, alpha: float) -> str:
    stem, ext = os.path.splitext(base)
    return f"{stem}_alpha{alpha:g}{ext or '.csv'}"


def _cmd_trajectory(cfg: RunConfig) -> None:
    alphas = cfg.alphas if cfg.alphas is not None else (0.0, 0.1, 0.5)
    base = _default(cfg.traj_csv, _default(cfg.out, "trajectory.csv"))
    for a in alphas:
        system = benchmark_system(cfg.benchmark(a))
        res = integrate_flow(system, cfg.u0, cfg.integration(stride=cfg.stride))
        traj = res.trajectory if isinstance(res, EscapeEvent) else res
        params = dict(cfg.echo(), alpha=a)
        path = _traj_path(base, a)
        atomic_write_text(path, trajectory_csv_text(traj, system.coordinate_labels(), params))
        note = f"escaped at t={res.time:g}" if isinstance(res, EscapeEvent) else "bounded"
        print(f"alpha = {a:g}: {len(traj)} rows -> {path} ({note})")


def _cmd_poincare(cfg: RunConfig) -> None:
    model, pert = sine_model()
    rows = scaling_study(model, pert, 0.5, [0.0], cfg.epsilons, cfg.quad_nodes)
    ratios = error_ratios(rows)
    for r in rows:
        print(f"eps = {r.epsilon:.4g}  error = {r.error:.6g}")
    print("error ratios: " + ", ".join(f"{q:.4f}" for q in ratios))
    atomic_write_text(_default(cfg.out, "poincare_scaling.csv"),
                      poincare_csv_text(rows, cfg.echo()))


def _cmd_diagnose(cfg: RunConfig) -> None:
    # twist frequencies (1, I) with analytic derivatives
    twist = [[lambda I: 1.0, lambda I: 0.0], [lambda I: I, lambda I: 1.0]]
    nd = check_nondegeneracy(twist, (-1.0, 1.0), 201, tau=1e-3)
    # normal-mode frequencies of the alpha = 0 benchmark on the orbit through u0
    rho0 = 1.0 + cfg.epsilon * float(np.dot(cfg.u0, cfg.u0))
    omega = ((1.0 + cfg.delta) / rho0, (1.0 - cfg.delta) / rho0)
    res_min, res_p = resonance_min(omega, cfg.max_order)
    table = fourier_coeffs(np.cos, 4, 64)
    samples = [(0.0, v) for v in np.linspace(-1.0, 1.0, 11)]
    npc = nonpersistence_conditions(
        F0=lambda I: I[0], grad_F0=lambda I: np.array([1.0, 0.0]),
        g=[lambda I, th: np.cos(th), lambda I, th: 0.0 * th], f=lambda I: I[0],
        manifold_samples=samples, max_j=1, nodes=64)
    report = {
        "params": cfg.echo(),
        "wronskian": {"min": nd.min_abs_det, "argmin": nd.argmin, "pass": nd.passed,
                      "tau": nd.tau, "model": "f = (1, I) on [-1, 1]",
                      "value_at_0": wronskian_det(twist, 0.0)},
        "resonance": {"min": res_min, "p": list(res_p), "omega": list(omega),
                      "max_order": cfg.max_order},
        "fourier": {"function": "cos(theta)", "coefficients": table.to_dict()},
        "nonpersistence": npc.to_dict(),
        "tool_version": __version__,
    }
    atomic_write_text(_default(cfg.out, "diagnostics.json"), json_text(report))
    print(f"wronskian min {nd.min_abs_det:.6g} pass={nd.passed}; resonance min {res_min:.6g} "
          f"at p={res_p}; nonpersistence verdict {npc.verdict}")


def _cmd_verify_divergence(cfg: RunConfig) -> None:
    system = benchmark_system(cfg.benchmark())
    pts = sample_box(cfg.samples, 4, -2.0, 2.0, cfg.seed)
    worst = check_weighted_divergence(system, pts, DIVERGENCE_H)
    print(f"max |div(rho V)| = {worst:.3e} over {cfg.samples} points in [-2,2]^4 "
          f"(bound {DIVERGENCE_BOUND:g})")
    if cfg.out:
        atomic_write_text(cfg.out, json_text({"params": cfg.echo(), "max_abs_divergence": worst,
                                              "h": DIVERGENCE_H, "tool_version": __version__}))
    if not worst <= DIVERGENCE_BOUND:
        raise NumericalFailure(f"divergence residual {worst:.3e} above {DIVERGENCE_BOUND:g}")


COMMANDS = {
    "compute": _cmd_compute,
    "sweep": _cmd_sweep,
    "converge": _cmd_converge,
    "trajectory": _cmd_trajectory,
    "poincare": _cmd_poincare,
    "diagnose": _cmd_diagnose,
    "verify-divergence": _cmd_verify_divergence,
}


def run(cfg: RunConfig) -> int:
    try:
        cfg.validate()
        log.info("%s with %s", cfg.subcommand, cfg.echo())
        COMMANDS[cfg.subcommand](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NumericalFailure, QuadratureError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # parameter combinations rejected by the numerical layer (e.g. tol below Euler bias)
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    verbose = argv is not None and ("-v" in argv or "--verbose" in argv)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
    try:
        cfg = load_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
