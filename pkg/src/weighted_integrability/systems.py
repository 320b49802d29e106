"""Dynamical systems with a Jacobi multiplier.

A system is a plain bundle of evaluators: the vector field ``V(u)``, the density
``rho(u)`` with ``div(rho V) = 0``, and optionally an analytic Jacobian and a
numba-compiled copy of the field used by the fast integration loops.

The built-in benchmark is the weighted cubic field on R^4::

    rho(u) = 1 + eps * |u|^2
    V(u)   = (L u + alpha * N(u)) / rho(u)

with ``L`` the skew coupling matrix and ``N`` the cubic term acting on each
``(x, y)`` plane as ``(x^3 - 3 x y^2, y^3 - 3 y x^2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Any, Callable, Optional, Sequence

import numba
import numpy as np

BENCHMARK_DIM = 4
BENCHMARK_LABELS = ("x1", "y1", "x2", "y2")


class NonFiniteStateError(ValueError):
    """A state or field value contains NaN or Inf."""


def as_state(u, dimension: Optional[int] = None) -> np.ndarray:
    """Copy ``u`` into a finite float64 vector, checking its length."""
    arr = np.array(u, dtype=np.float64).reshape(-1)
    if dimension is not None and arr.shape[0] != dimension:
        raise ValueError(f"state has length {arr.shape[0]}, expected {dimension}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteStateError(f"non-finite state {arr!r}")
    return arr


@dataclass(frozen=True)
class BenchmarkParams:
    epsilon: float = 0.5
    delta: float = 0.3
    alpha: float = 0.1

    def __post_init__(self):
        for name in ("epsilon", "delta", "alpha"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0 so that rho >= 1")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.epsilon, self.delta, self.alpha], dtype=np.float64)


@dataclass(frozen=True)
class SystemDef:
    """Evaluator-based description of ``u' = V(u)`` with Jacobi multiplier ``rho``.

    ``kernel`` is an optional ``numba.njit`` function ``kernel(u, p, out)`` that
    writes ``V(u)`` into ``out`` given the float64 parameter array ``kernel_args``.
    When present the integrators run their compiled loops; otherwise they fall
    back to pure Python over ``field``. ``frequency`` is the characteristic
    angular frequency used to bound the Euler FTLE bias.  ``batch_flux``
    optionally maps a ``(k, n)`` array of states to the rows ``rho(u) V(u)``.
    """

    dimension: int
    field: Callable[[np.ndarray], np.ndarray]
    density: Callable[[np.ndarray], float]
    name: str = "system"
    params: Any = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kernel: Any = None
    kernel_args: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    frequency: Optional[float] = None
    labels: Optional[Sequence[str]] = None
    batch_flux: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")

    def coordinate_labels(self) -> list[str]:
        if self.labels is not None:
            return list(self.labels)
        return [f"u{i}" for i in range(self.dimension)]


def coupling_matrix(delta: float) -> np.ndarray:
    L = np.array(
        [
            [0.0, 1.0, 0.0, delta],
            [-1.0, 0.0, -delta, 0.0],
            [0.0, delta, 0.0, 1.0],
            [-delta, 0.0, -1.0, 0.0],
        ]
    )
    if np.max(np.abs(L + L.T)) != 0.0:
        raise AssertionError("coupling matrix is not skew-symmetric")
    if np.trace(L) != 0.0:
        raise AssertionError("coupling matrix has nonzero trace")
    return L


def cubic_term(u) -> np.ndarray:
    x1, y1, x2, y2 = u
    return np.array(
        [
            x1**3 - 3.0 * x1 * y1**2,
            y1**3 - 3.0 * y1 * x1**2,
            x2**3 - 3.0 * x2 * y2**2,
            y2**3 - 3.0 * y2 * x2**2,
        ]
    )


def eval_density(params: BenchmarkParams, u) -> float:
    u = as_state(u, BENCHMARK_DIM)
    x1, y1, x2, y2 = u
    return 1.0 + params.epsilon * (x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2)


def eval_benchmark_field(params: BenchmarkParams, u) -> np.ndarray:
    u = as_state(u, BENCHMARK_DIM)
    out = np.empty(BENCHMARK_DIM)
    _benchmark_kernel(u, params.as_array(), out)
    return out


def benchmark_jacobian(params: BenchmarkParams, u) -> np.ndarray:
    """Analytic ``DV(u)`` for the benchmark (quotient rule on ``(Lu + aN)/rho``)."""
    u = as_state(u, BENCHMARK_DIM)
    x1, y1, x2, y2 = u
    a = params.alpha
    rho = eval_density(params, u)
    g = coupling_matrix(params.delta) @ u + a * cubic_term(u)
    dN = np.zeros((4, 4))
    dN[0, 0] = 3 * x1**2 - 3 * y1**2
    dN[0, 1] = -6 * x1 * y1
    dN[1, 0] = -6 * x1 * y1
    dN[1, 1] = 3 * y1**2 - 3 * x1**2
    dN[2, 2] = 3 * x2**2 - 3 * y2**2
    dN[2, 3] = -6 * x2 * y2
    dN[3, 2] = -6 * x2 * y2
    dN[3, 3] = 3 * y2**2 - 3 * x2**2
    dg = coupling_matrix(params.delta) + a * dN
    drho = 2.0 * params.epsilon * u
    return dg / rho - np.outer(g, drho) / rho**2


@numba.njit(cache=True)
def _benchmark_kernel(u, p, out):
    eps, d, a = p[0], p[1], p[2]
    x1, y1, x2, y2 = u[0], u[1], u[2], u[3]
    rho = 1.0 + eps * (x1 * x1 + y1 * y1 + x2 * x2 + y2 * y2)
    out[0] = ((y1 + d * y2) + a * (x1 * x1 * x1 - 3.0 * x1 * y1 * y1)) / rho
    out[1] = (-(x1 + d * x2) + a * (y1 * y1 * y1 - 3.0 * y1 * x1 * x1)) / rho
    out[2] = ((y2 + d * y1) + a * (x2 * x2 * x2 - 3.0 * x2 * y2 * y2)) / rho
    out[3] = (-(x2 + d * x1) + a * (y2 * y2 * y2 - 3.0 * y2 * x2 * x2)) / rho


def benchmark_flux_batch(params: BenchmarkParams, U) -> np.ndarray:
    """Rows ``rho(u) * V(u)`` for a stack of states, evaluated as the product."""
    U = np.asarray(U, dtype=np.float64)
    x1, y1, x2, y2 = U.T
    a = params.alpha
    rho = 1.0 + params.epsilon * np.sum(U * U, axis=1)
    g = U @ coupling_matrix(params.delta).T
    g[:, 0] += a * (x1**3 - 3.0 * x1 * y1**2)
    g[:, 1] += a * (y1**3 - 3.0 * y1 * x1**2)
    g[:, 2] += a * (x2**3 - 3.0 * x2 * y2**2)
    g[:, 3] += a * (y2**3 - 3.0 * y2 * x2**2)
    return rho[:, None] * (g / rho[:, None])


def benchmark_system(params: Optional[BenchmarkParams] = None) -> SystemDef:
    params = params or BenchmarkParams()
    # raises if L were ever edited into a non-skew matrix
    coupling_matrix(params.delta)
    return SystemDef(
        dimension=BENCHMARK_DIM,
        field=lambda u: eval_benchmark_field(params, u),
        density=lambda u: eval_density(params, u),
        name="weighted-benchmark",
        params=params,
        kernel=_benchmark_kernel,
        kernel_args=params.as_array(),
        frequency=1.0 + abs(params.delta),
        labels=BENCHMARK_LABELS,
        batch_flux=lambda U: benchmark_flux_batch(params, U),
    )


@numba.njit(cache=True)
def _linear_kernel(u, p, out):
    n = u.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += p[i * n + j] * u[j]
        out[i] = acc


def linear_system(A, name: str = "linear", frequency: Optional[float] = None) -> SystemDef:
    """``u' = A u`` with unit density; trace(A) = 0 is not enforced."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    return SystemDef(
        dimension=n,
        field=lambda u: A @ np.asarray(u, dtype=np.float64),
        density=lambda u: 1.0,
        name=name,
        params=A,
        jacobian=lambda u: A.copy(),
        kernel=_linear_kernel,
        kernel_args=A.reshape(-1).copy(),
        frequency=frequency,
    )


def _eval_field(system: SystemDef, u: np.ndarray) -> np.ndarray:
    v = np.asarray(system.field(u), dtype=np.float64)
    if v.shape != (system.dimension,):
        raise ValueError(f"field returned shape {v.shape}, expected ({system.dimension},)")
    if not np.all(np.isfinite(v)):
        raise NonFiniteStateError(f"non-finite field value at {u!r}")
    return v


def jacobian_fd(system: SystemDef, u, h: float = 1e-6, scheme: str = "forward") -> np.ndarray:
    """Finite-difference Jacobian, one column per coordinate perturbation."""
    if not h > 0:
        raise ValueError("h must be positive")
    u = as_state(u, system.dimension)
    n = system.dimension
    J = np.empty((n, n))
    if scheme == "forward":
        f0 = _eval_field(system, u)
        for j in range(n):
            up = u.copy()
            up[j] += h
            J[:, j] = (_eval_field(system, up) - f0) / h
    elif scheme == "central":
        for j in range(n):
            up = u.copy()
            um = u.copy()
            up[j] += h
            um[j] -= h
            J[:, j] = (_eval_field(system, up) - _eval_field(system, um)) / (2.0 * h)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return J


def jacobian(system: SystemDef, u, h: float = 1e-6, scheme: str = "forward") -> np.ndarray:
    """Analytic Jacobian when the system supplies one, else finite differences."""
    if system.jacobian is not None:
        return np.asarray(system.jacobian(as_state(u, system.dimension)), dtype=np.float64)
    return jacobian_fd(system, u, h, scheme)


def check_weighted_divergence(system: SystemDef, sample_points, h: float = 1e-5) -> float:
    """Max over samples of ``|div(rho V)|`` by central differences of ``rho * V``."""
    if not h > 0:
        raise ValueError("h must be positive")
    n = system.dimension
    if system.batch_flux is not None:
        U = np.array(sample_points, dtype=np.float64).reshape(-1, n)
        if not np.all(np.isfinite(U)):
            raise NonFiniteStateError("non-finite sample point")
        div = np.zeros(len(U))
        for i in range(n):
            up = U.copy()
            um = U.copy()
            up[:, i] += h
            um[:, i] -= h
            div += (system.batch_flux(up)[:, i] - system.batch_flux(um)[:, i]) / (2.0 * h)
        return float(np.max(np.abs(div))) if len(U) else 0.0

    def flux(x):
        return system.density(x) * _eval_field(system, x)

    worst = 0.0
    for u in sample_points:
        u = as_state(u, n)
        div = 0.0
        for i in range(n):
            up = u.copy()
            um = u.copy()
            up[i] += h
            um[i] -= h
            div += (flux(up)[i] - flux(um)[i]) / (2.0 * h)
        worst = max(worst, abs(div))
    return worst


def sample_box(count: int, dimension: int = BENCHMARK_DIM, lo: float = -2.0, hi: float = 2.0,
               seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(count, dimension))
