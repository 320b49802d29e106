"""First-order period map for time-periodic perturbations of action-angle flows.

Unperturbed flow: ``I' = 0``, ``theta_i' = f_i(I)``.  Perturbed flow::

    I'       = eps * F_0(I, theta, t)
    theta_i' = f_i(I) + eps * F_i(I, theta, t)

with every ``F_i`` 2pi-periodic in each angle and ``T = 2pi/omega`` periodic
in ``t``.  Over one period the map is, to first order in ``eps``::

    I       -> I + eps * Ft_0(I, theta)
    theta_i -> theta_i + 2pi f_i(I)/omega + eps * Ft_i(I, theta)

where ``Ft_0`` integrates ``F_0`` along the unperturbed orbit and ``Ft_i``
adds ``f_i'(I)`` times the double integral of ``F_0`` to the integral of
``F_i``.  :func:`direct_flow_map` integrates the full system with RK4 and is
the reference the first-order map is measured against.

Perturbation callables are evaluated vectorised: ``F(I, theta, t)`` receives a
scalar ``I``, ``theta`` of shape ``(m, k)`` and ``t`` of shape ``(k,)`` (or
``theta`` of shape ``(m,)`` and scalar ``t`` inside the RK4 oracle) and must
broadcast accordingly.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from .diagnostics import derivative

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    """Simpson values at N and 2N subintervals disagree beyond tolerance."""


@dataclass(frozen=True)
class ActionAngleModel:
    f: Sequence[Callable[[float], float]]
    omega: float = 1.0
    Q: tuple = (-1.0, 1.0)
    df: Optional[Sequence[Callable[[float], float]]] = None

    def __post_init__(self):
        if len(self.f) < 1:
            raise ValueError("need at least one frequency function")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.df is not None and len(self.df) != len(self.f):
            raise ValueError("df must match f in length")
        lo, hi = self.Q
        if not lo < hi:
            raise ValueError("Q must be a non-empty interval")
        grid = np.linspace(lo, hi, 103)[1:-1]
        smallest = min(sum(fi(x) ** 2 for fi in self.f) for x in grid)
        if smallest == 0.0:
            warnings.warn("frequency vector vanishes somewhere on Q", stacklevel=2)

    @property
    def m(self) -> int:
        return len(self.f)

    @property
    def period(self) -> float:
        return TWO_PI / self.omega

    def frequencies(self, I: float) -> np.ndarray:
        return np.array([fi(I) for fi in self.f], dtype=np.float64)

    def frequency_slopes(self, I: float) -> np.ndarray:
        if self.df is not None:
            return np.array([d(I) for d in self.df], dtype=np.float64)
        return np.array([derivative(fi, I, 1) for fi in self.f])

    def contains(self, I: float) -> bool:
        return bool(self.Q[0] < I < self.Q[1])


@dataclass(frozen=True)
class PerturbationDef:
    """``F[0]`` drives the action, ``F[i]`` the i-th angle.

    When ``period`` is given the periodicity in every angle and in ``t`` is
    spot-checked at construction.
    """

    F: Sequence[Callable]
    epsilon: float = 0.0
    period: Optional[float] = None

    def __post_init__(self):
        if len(self.F) < 2:
            raise ValueError("need F_0 and at least one angle perturbation")
        if self.period is not None:
            check_periodicity(self, self.period)

    @property
    def m(self) -> int:
        return len(self.F) - 1


def zero_perturbation(m: int) -> PerturbationDef:
    return PerturbationDef([lambda I, th, t: 0.0 * t] * (m + 1))


def check_periodicity(pert: PerturbationDef, period: float, samples: int = 8,
                      seed: int = 0, tol: float = 1e-12) -> None:
    rng = np.random.default_rng(seed)
    m = pert.m
    for _ in range(samples):
        I = rng.uniform(-1.0, 1.0)
        th = rng.uniform(0.0, TWO_PI, size=m)
        t = rng.uniform(0.0, period)
        for i, Fi in enumerate(pert.F):
            v = float(Fi(I, th, t))
            shifted = [float(Fi(I, th, t + period))]
            for j in range(m):
                th2 = th.copy()
                th2[j] += TWO_PI
                shifted.append(float(Fi(I, th2, t)))
            for w in shifted:
                if abs(w - v) > tol * (1.0 + abs(v)):
                    raise ValueError(f"F_{i} is not periodic (|{w} - {v}| > {tol})")


class MapPoint(NamedTuple):
    action: float
    angles: np.ndarray
    inside: bool


def wrap_angles(theta) -> np.ndarray:
    return np.mod(np.asarray(theta, dtype=np.float64), TWO_PI)


@dataclass(frozen=True)
class FirstOrderMap:
    model: ActionAngleModel
    pert: PerturbationDef
    quad_nodes: int = 1024
    quad_tol: float = 1e-8

    def _integrals(self, I: float, theta: np.ndarray, nodes: int) -> np.ndarray:
        m = self.model.m
        t = np.linspace(0.0, self.model.period, nodes + 1)
        phases = theta[:, None] + self.model.frequencies(I)[:, None] * t[None, :]
        vals = [np.broadcast_to(np.asarray(Fi(I, phases, t), dtype=np.float64), t.shape)
                for Fi in self.pert.F]
        out = np.empty(m + 1)
        out[0] = simpson(vals[0], x=t)
        inner = cumulative_simpson(vals[0], x=t, initial=0.0)
        double = simpson(inner, x=t)
        slopes = self.model.frequency_slopes(I)
        for i in range(1, m + 1):
            out[i] = slopes[i - 1] * double + simpson(vals[i], x=t)
        return out

    def tilde_F(self, I: float, theta) -> np.ndarray:
        """``(Ft_0, Ft_1, ..., Ft_m)`` at ``(I, theta)``, checked against half the nodes."""
        theta = wrap_angles(theta).reshape(-1)
        if theta.shape[0] != self.model.m:
            raise ValueError(f"expected {self.model.m} angles")
        coarse = self._integrals(I, theta, self.quad_nodes)
        fine = self._integrals(I, theta, 2 * self.quad_nodes)
        gap = np.max(np.abs(fine - coarse))
        if gap > self.quad_tol * max(1.0, float(np.max(np.abs(fine)))):
            raise QuadratureError(
                f"quadrature did not converge at I={I}: |S(2N) - S(N)| = {gap:.3g}, "
                f"N={self.quad_nodes}")
        return fine

    def base(self, I: float, theta) -> np.ndarray:
        theta = wrap_angles(theta).reshape(-1)
        return wrap_angles(theta + TWO_PI * self.model.frequencies(I) / self.model.omega)


def build_first_order_map(model: ActionAngleModel, pert: PerturbationDef,
                          quad_nodes: int = 1024, quad_tol: float = 1e-8) -> FirstOrderMap:
    if quad_nodes < 64 or quad_nodes % 2:
        raise ValueError("quad_nodes must be an even integer >= 64")
    if pert.m != model.m:
        raise ValueError(f"perturbation has {pert.m} angle terms, model has {model.m} angles")
    check_periodicity(pert, model.period)
    return FirstOrderMap(model, pert, quad_nodes, quad_tol)


def apply_map(pmap: FirstOrderMap, I: float, theta, epsilon: float) -> MapPoint:
    theta = wrap_angles(theta).reshape(-1)
    if epsilon == 0.0:
        return MapPoint(float(I), pmap.base(I, theta), pmap.model.contains(I))
    Ft = pmap.tilde_F(I, theta)
    I_new = I + epsilon * Ft[0]
    angles = wrap_angles(theta + TWO_PI * pmap.model.frequencies(I) / pmap.model.omega
                         + epsilon * Ft[1:])
    return MapPoint(float(I_new), angles, pmap.model.contains(I_new))


def direct_flow_map(model: ActionAngleModel, pert: PerturbationDef, I0: float, theta0,
                    epsilon: float, steps: int = 100_000) -> MapPoint:
    """RK4 over one forcing period of the full perturbed system."""
    T = model.period
    if steps < 10_000:
        raise ValueError("steps must be >= 1e4 (dt_fine <= T/1e4)")
    m = model.m
    if pert.m != m:
        raise ValueError("perturbation and model disagree on the number of angles")
    h = T / steps
    F = pert.F
    f = model.f
    n = m + 1

    # plain floats: numpy per-stage overhead dominates at these sizes
    def rhs(t, y):
        th = np.array(y[1:])
        out = [epsilon * float(F[0](y[0], th, t))]
        for i in range(m):
            out.append(f[i](y[0]) + epsilon * float(F[i + 1](y[0], th, t)))
        return out

    y = [float(I0)] + [float(a) for a in wrap_angles(theta0).reshape(-1)]
    half = 0.5 * h
    sixth = h / 6.0
    for k in range(steps):
        t = k * h
        k1 = rhs(t, y)
        k2 = rhs(t + half, [y[i] + half * k1[i] for i in range(n)])
        k3 = rhs(t + half, [y[i] + half * k2[i] for i in range(n)])
        k4 = rhs(t + h, [y[i] + h * k3[i] for i in range(n)])
        y = [y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(n)]
    y = np.array(y)
    return MapPoint(float(y[0]), wrap_angles(y[1:]), model.contains(float(y[0])))


def map_distance(a: MapPoint, b: MapPoint) -> float:
    """Max-norm gap, angle differences taken on the circle."""
    dth = np.mod(a.angles - b.angles + math.pi, TWO_PI) - math.pi
    return max(abs(a.action - b.action), float(np.max(np.abs(dth))))


def sine_model() -> tuple[ActionAngleModel, PerturbationDef]:
    """One angle, ``f(I) = I``, ``omega = 1``, ``F_0 = sin(theta)``, ``F_1 = 0``."""
    model = ActionAngleModel(f=[lambda I: I], omega=1.0, Q=(0.0, 1.0), df=[lambda I: 1.0])
    pert = PerturbationDef([lambda I, th, t: np.sin(th[0]), lambda I, th, t: 0.0 * t])
    return model, pert


@dataclass
class ScalingRow:
    epsilon: float
    map_point: MapPoint
    oracle_point: MapPoint
    error: float


def scaling_study(model: ActionAngleModel, pert: PerturbationDef, I0: float, theta0,
                  epsilons: Sequence[float], quad_nodes: int = 1024,
                  steps: int = 100_000) -> list[ScalingRow]:
    pmap = build_first_order_map(model, pert, quad_nodes)
    rows = []
    for eps in epsilons:
        a = apply_map(pmap, I0, theta0, eps)
        b = direct_flow_map(model, pert, I0, theta0, eps, steps)
        rows.append(ScalingRow(float(eps), a, b, map_distance(a, b)))
    return rows


def error_ratios(rows: Sequence[ScalingRow]) -> list[float]:
    """``error(eps_k) / error(eps_{k+1})`` for consecutive rows."""
    return [rows[k].error / rows[k + 1].error for k in range(len(rows) - 1)]
