"""Weighted partial integrability functional ``m_rho(V)``.

Each sampled initial condition gets a finite-time maximal Lyapunov exponent;
orbits with ``|lambda| < tol`` that stay bounded count as regular, and

    m_rho = sum(rho(u0_i) * R_i) / sum(rho(u0_i))

Escaped orbits are irregular with their full weight.  Per-point work is
independent; the reduction is an exactly rounded ``math.fsum`` in grid
order, so the result does not depend on worker count or enumeration order.
"""
from __future__ import annotations

import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from . import __version__
from .integrate import EscapeEvent, IntegrationConfig, euler_ftle_bias, ftle_max, ftle_mean
from .systems import SystemDef

DEFAULT_TOL = 1e-2


@dataclass(frozen=True)
class GridSpec:
    """Uniform ``nx x nx`` grid on two sampled axes, other coordinates fixed.

    Endpoints are included (linspace semantics).  Points are enumerated with
    the first sampled axis outermost.
    """

    nx: int = 5
    box_lo: float = -0.9
    box_hi: float = 0.9
    axes: tuple = (0, 1)
    fixed: tuple = (0.7, 0.0)

    def __post_init__(self):
        if self.nx < 1:
            raise ValueError("nx must be positive")
        if not self.box_lo <= self.box_hi:
            raise ValueError("box_lo must not exceed box_hi")
        if len(self.axes) != 2 or self.axes[0] == self.axes[1]:
            raise ValueError("axes must name two distinct coordinates")

    @property
    def dimension(self) -> int:
        return 2 + len(self.fixed)

    def points(self) -> np.ndarray:
        dim = self.dimension
        if max(self.axes) >= dim:
            raise ValueError("sampled axis outside state dimension")
        rest = [i for i in range(dim) if i not in self.axes]
        xs = np.linspace(self.box_lo, self.box_hi, self.nx)
        pts = np.empty((self.nx * self.nx, dim))
        k = 0
        for a in xs:
            for b in xs:
                pts[k, self.axes[0]] = a
                pts[k, self.axes[1]] = b
                pts[k, rest] = self.fixed
                k += 1
        return pts


@dataclass
class FtleRecord:
    index: int
    u0: np.ndarray
    rho0: float
    lambda_max: float
    escaped: bool
    regular: int


@dataclass
class IntegrabilityReport:
    params: dict
    m_rho: float
    n_total: int
    n_regular: int
    n_escaped: int
    weighted_total: float
    weighted_regular: float
    lambda_stats: dict
    records: list = field(default_factory=list, repr=False)
    tool_version: str = __version__

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "m_rho": self.m_rho,
            "n_total": self.n_total,
            "n_regular": self.n_regular,
            "n_escaped": self.n_escaped,
            "weighted_total": self.weighted_total,
            "weighted_regular": self.weighted_regular,
            "lambda_stats": self.lambda_stats,
            "tool_version": self.tool_version,
        }


def classify(lam: Union[float, EscapeEvent], tol: float = DEFAULT_TOL) -> int:
    """Regular-orbit indicator: 1 iff bounded and ``|lambda| < tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if isinstance(lam, EscapeEvent):
        return 0
    if not math.isfinite(lam):
        return 0
    return 1 if abs(lam) < tol else 0


def weighted_ratio(weights: Sequence[float], regular: Sequence[int]) -> tuple[float, float, float]:
    """Return ``(m, weighted_regular, weighted_total)`` with exactly rounded sums."""
    if len(weights) == 0:
        raise ValueError("no sample points")
    if len(weights) != len(regular):
        raise ValueError("weights and indicators differ in length")
    num = math.fsum(w * r for w, r in zip(weights, regular))
    den = math.fsum(weights)
    if not den > 0:
        raise ValueError("total weight must be positive")
    return num / den, num, den


def unweighted_fraction(regular: Sequence[int]) -> float:
    return sum(regular) / len(regular)


def check_tolerance(system: SystemDef, cfg: IntegrationConfig, tol: float) -> None:
    """Reject thresholds the Euler FTLE bias alone could exceed."""
    if cfg.method != "euler" or system.frequency is None:
        return
    bias = euler_ftle_bias(system.frequency, cfg.dt)
    if tol <= bias:
        raise ValueError(
            f"tol={tol:g} does not exceed the explicit-Euler FTLE bias {bias:.3g} at "
            f"frequency {system.frequency:g}, dt={cfg.dt:g}; raise tol, lower dt or use rk4"
        )


def _ftle_point(system, u0, cfg, n_directions, seed):
    if n_directions == 1:
        return ftle_max(system, u0, cfg)
    return ftle_mean(system, u0, cfg, n_directions, seed)


def ftle_records(system: SystemDef, points: np.ndarray, cfg: IntegrationConfig,
                 tol: float = DEFAULT_TOL, workers: int = 1, n_directions: int = 1,
                 seed: int = 0) -> list[FtleRecord]:
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("grid is empty")

    def work(u0):
        return _ftle_point(system, u0, cfg, n_directions, seed)

    if workers > 1:
        # compiled loops run without the GIL; results are collected in grid order
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, points))
    else:
        results = [work(u0) for u0 in points]

    records = []
    for i, (u0, r) in enumerate(zip(points, results)):
        escaped = isinstance(r, EscapeEvent)
        lam = r.lyapunov if escaped else r
        records.append(FtleRecord(i, u0.copy(), float(system.density(u0)), float(lam),
                                  escaped, classify(r, tol)))
    return records


def _params_dict(system, grid, cfg, tol, seed, n_directions):
    p = {}
    if system.params is not None and hasattr(system.params, "__dataclass_fields__"):
        p.update(asdict(system.params))
    p.update(
        system=system.name,
        grid_nx=grid.nx,
        box_lo=grid.box_lo,
        box_hi=grid.box_hi,
        fixed_coords=list(grid.fixed),
        dt=cfg.dt,
        t_max=cfg.t_max,
        method=cfg.method,
        escape_radius=cfg.escape_radius,
        fd_h=cfg.fd_h,
        fd_scheme=cfg.fd_scheme,
        renorm_every=cfg.renorm_every,
        tol=tol,
        seed=seed,
        n_directions=n_directions,
    )
    return p


def report_from_records(records: list[FtleRecord], params: dict) -> IntegrabilityReport:
    m, num, den = weighted_ratio([r.rho0 for r in records], [r.regular for r in records])
    lams = [r.lambda_max for r in records]
    return IntegrabilityReport(
        params=params,
        m_rho=m,
        n_total=len(records),
        n_regular=sum(r.regular for r in records),
        n_escaped=sum(r.escaped for r in records),
        weighted_total=den,
        weighted_regular=num,
        lambda_stats={"min": min(lams), "median": statistics.median(lams), "max": max(lams)},
        records=records,
    )


def compute_m_rho(system: SystemDef, grid: GridSpec = GridSpec(),
                  cfg: IntegrationConfig = IntegrationConfig(), tol: float = DEFAULT_TOL,
                  workers: int = 1, seed: int = 0, n_directions: int = 1,
                  check_bias: bool = True) -> IntegrabilityReport:
    if grid.dimension != system.dimension:
        raise ValueError(f"grid dimension {grid.dimension} != system dimension {system.dimension}")
    if check_bias:
        check_tolerance(system, cfg, tol)
    records = ftle_records(system, grid.points(), cfg, tol, workers, n_directions, seed)
    return report_from_records(records, _params_dict(system, grid, cfg, tol, seed, n_directions))


def sweep_alpha(make_system: Callable[[float], SystemDef], alphas: Iterable[float],
                grid: GridSpec = GridSpec(), cfg: IntegrationConfig = IntegrationConfig(),
                tol: float = DEFAULT_TOL, workers: int = 1, seed: int = 0) -> list[IntegrabilityReport]:
    alphas = list(alphas)
    if not alphas:
        raise ValueError("alphas must be non-empty")
    return [compute_m_rho(make_system(a), grid, cfg, tol, workers, seed) for a in alphas]


@dataclass
class SensitivityRow:
    name: str
    m_base: float
    m_new: float
    delta_m: float
    rel_delta_m: float
    mean_abs_delta_lambda: float

    def to_dict(self) -> dict:
        return asdict(self)


def _mean_abs_delta(a: list[FtleRecord], b: list[FtleRecord]) -> float:
    return math.fsum(abs(x.lambda_max - y.lambda_max) for x, y in zip(a, b)) / len(a)


def _mean_lambda(records):
    return math.fsum(r.lambda_max for r in records) / len(records)


def convergence_study(system: SystemDef, grid: GridSpec = GridSpec(),
                      cfg: IntegrationConfig = IntegrationConfig(), tol: float = DEFAULT_TOL,
                      workers: int = 1, refined_nx: Optional[int] = None,
                      baseline: Optional[IntegrabilityReport] = None) -> list[SensitivityRow]:
    """Sensitivity of ``m_rho`` to doubling T, halving dt and refining the grid.

    For T and dt the same initial conditions are rerun, so ``mean_abs_delta_lambda``
    is the mean per-point change.  The refined grid samples different points;
    there the entry is the change in the mean exponent.
    """
    base = baseline or compute_m_rho(system, grid, cfg, tol, workers)
    refined_nx = refined_nx or grid.nx + 2

    def rel(m_new):
        d = m_new - base.m_rho
        return d, (abs(d) / base.m_rho if base.m_rho else (0.0 if d == 0 else math.inf))

    rows = []
    for name, g, c in (
        ("t_max", grid, replace(cfg, t_max=2 * cfg.t_max)),
        ("dt", grid, replace(cfg, dt=cfg.dt / 2)),
    ):
        rep = compute_m_rho(system, g, c, tol, workers)
        d, r = rel(rep.m_rho)
        rows.append(SensitivityRow(name, base.m_rho, rep.m_rho, d, r,
                                   _mean_abs_delta(base.records, rep.records)))
    rep = compute_m_rho(system, replace(grid, nx=refined_nx), cfg, tol, workers)
    d, r = rel(rep.m_rho)
    rows.append(SensitivityRow("grid", base.m_rho, rep.m_rho, d, r,
                               abs(_mean_lambda(rep.records) - _mean_lambda(base.records))))
    return rows
