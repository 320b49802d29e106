"""Nondegeneracy, resonance and non-persistence checks for action-angle models.

Frequencies are passed either as plain callables or as sequences
``[g, g', g'', ...]`` of analytic derivatives; missing derivatives fall back to
Richardson-extrapolated central differences.
"""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Optional, Sequence

import numpy as np

FD_BASE_STEP = 1e-4
DEFAULT_THRESHOLD = 1e-8


def _central(func, x, order, h):
    # order-th central difference, O(h^2)
    s = 0.0
    for i in range(order + 1):
        s += (-1) ** i * comb(order, i) * func(x + (order / 2.0 - i) * h)
    return s / h**order


def derivative(func, x: float, order: int, h: Optional[float] = None) -> float:
    """``order``-th derivative of ``func`` at ``x``.

    ``func`` may be a sequence of analytic derivatives, used when long enough.
    Otherwise one Richardson step on central differences gives O(h^4); the step
    grows tenfold per order to keep round-off below the truncation error.
    """
    if isinstance(func, (list, tuple)):
        if order < len(func):
            return float(func[order](x))
        func = func[0]
    if order == 0:
        return float(func(x))
    h = FD_BASE_STEP * 10.0 ** (order - 1) if h is None else h
    coarse = _central(func, x, order, h)
    fine = _central(func, x, order, h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def wronskian_det(f: Sequence, I: float, first_derivative_rows: bool = False) -> float:
    """Determinant of ``[f_j^(k)(I)]`` with rows k = 0..m-1 (or 1..m for the shifted variant)."""
    m = len(f)
    start = 1 if first_derivative_rows else 0
    W = np.empty((m, m))
    for r in range(m):
        for j in range(m):
            W[r, j] = derivative(f[j], I, start + r)
    return float(np.linalg.det(W))


@dataclass
class NondegeneracyResult:
    passed: bool
    min_abs_det: float
    argmin: float
    tau: float


def check_nondegeneracy(f: Sequence, Q: tuple, grid_count: int = 201, tau: float = 1e-3,
                        first_derivative_rows: bool = False) -> NondegeneracyResult:
    if grid_count < 100:
        raise ValueError("grid_count must be >= 100")
    xs = np.linspace(Q[0], Q[1], grid_count)
    dets = np.array([abs(wronskian_det(f, x, first_derivative_rows)) for x in xs])
    k = int(np.argmin(dets))
    return NondegeneracyResult(bool(dets[k] >= tau), float(dets[k]), float(xs[k]), tau)


def resonance_min(omega: Sequence[float], P: int) -> tuple[float, tuple]:
    """Smallest ``|<p, omega>|`` over integer ``p`` with ``0 < max|p_i| <= P``.

    Ties keep the lexicographically first ``p``.
    """
    if P < 1:
        raise ValueError("P must be >= 1")
    omega = [float(w) for w in omega]
    best = math.inf
    best_p = None
    for p in itertools.product(range(-P, P + 1), repeat=len(omega)):
        if not any(p):
            continue
        v = abs(math.fsum(pi * wi for pi, wi in zip(p, omega)))
        if v < best:
            best, best_p = v, p
    return best, best_p


@dataclass
class FourierTable:
    coefficients: dict

    def __getitem__(self, j):
        return self.coefficients[j]

    def max_harmonic(self) -> int:
        return max(self.coefficients)

    def to_dict(self) -> dict:
        return {str(j): [c.real, c.imag] for j, c in sorted(self.coefficients.items())}


class FourierTruncationWarning(UserWarning):
    pass


def fourier_coeffs(g: Callable, max_j: int, nodes: int = 256, warn: bool = True) -> FourierTable:
    """``(1/2pi) int g(theta) e^{-ij theta} dtheta`` for ``|j| <= max_j`` by the
    trapezoid rule on ``nodes`` equispaced points (an FFT)."""
    if nodes < 4 * max_j or nodes & (nodes - 1):
        raise ValueError("nodes must be a power of two and >= 4*max_j")
    theta = 2.0 * math.pi * np.arange(nodes) / nodes
    vals = np.broadcast_to(np.asarray(g(theta), dtype=np.complex128), theta.shape)
    spec = np.fft.fft(vals) / nodes
    coeffs = {j: complex(spec[j % nodes]) for j in range(-max_j, max_j + 1)}
    if warn and max_j > 0:
        peak = max(abs(c) for c in coeffs.values())
        edge = max(abs(coeffs[max_j]), abs(coeffs[-max_j]))
        if peak > 0 and edge > 1e-6 * peak:
            warnings.warn(f"harmonic {max_j} still carries {edge:.3g} of peak {peak:.3g}; "
                          "increase max_j", FourierTruncationWarning, stacklevel=2)
    return FourierTable(coeffs)


def graph_manifold_samples(h: Callable, ranges: Sequence[tuple], count: int = 11) -> np.ndarray:
    """Points ``(h(I_2..), I_2, ..)`` on ``I_1 = h(I_2, ..)`` over a tensor grid."""
    axes = [np.linspace(lo, hi, count) for lo, hi in ranges]
    pts = []
    for rest in itertools.product(*axes):
        pts.append((h(*rest),) + tuple(rest))
    return np.array(pts, dtype=np.float64)


@dataclass
class NonpersistenceResult:
    condition1: dict
    condition2: dict
    verdict: str
    truncation: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"condition1": self.condition1, "condition2": self.condition2,
                "verdict": self.verdict, "truncation": self.truncation}


def nonpersistence_conditions(F0: Callable, grad_F0: Callable, g: Sequence[Callable],
                              f: Callable, manifold_samples, max_j: int = 1, nodes: int = 64,
                              threshold: float = DEFAULT_THRESHOLD, tol_f: float = 1e-8,
                              sample_tol: float = 1e-8) -> NonpersistenceResult:
    """Evaluate both sufficient conditions for destruction of ``{F0 = 0}``.

    ``g[i](I, theta)`` are the action perturbations at zero coupling and
    ``f(I)`` the unperturbed angular frequency.  The quantifier "for every j
    there is k = N j" is truncated to ``1 <= j <= max_j`` and
    ``1 <= N <= nodes // (4 * max_j)``; negative harmonics are conjugates for
    real data and give the same moduli.
    """
    samples = np.atleast_2d(np.asarray(manifold_samples, dtype=np.float64))
    if samples.size == 0:
        raise ValueError("manifold_samples is empty")
    for I in samples:
        if abs(F0(I)) > sample_tol:
            raise ValueError(f"sample {I!r} is not on the manifold (|F0| = {abs(F0(I)):.3g})")
    n_mult = max(1, nodes // (4 * max(max_j, 1)))
    k_max = n_mult * max_j

    # dots[s, k] = (g_1^k, .., g_l^k) . grad F0 at sample s, for k = 0..k_max
    dots = np.empty((len(samples), k_max + 1), dtype=np.complex128)
    for s, I in enumerate(samples):
        grad = np.asarray(grad_F0(I), dtype=np.float64)
        tables = [fourier_coeffs(lambda th, gi=gi: gi(I, th), k_max, nodes, warn=False)
                  for gi in g]
        for k in range(k_max + 1):
            dots[s, k] = sum(tables[i][k] * grad[i] for i in range(len(g)))

    c1_min = float(np.min(np.abs(dots[:, 0])))
    condition1 = {"min_abs_dot": c1_min, "holds": c1_min > threshold}
    condition2 = {"evaluated": False}
    if condition1["holds"]:
        verdict = "condition1"
    else:
        fvals = np.array([abs(f(I)) for I in samples])
        resonant = bool(np.min(fvals) <= tol_f)
        per_j = {}
        for j in range(1, max_j + 1):
            best, best_k = 0.0, None
            for N in range(1, n_mult + 1):
                k = N * j
                v = float(np.min(np.abs(dots[:, k])))
                if v > best:
                    best, best_k = v, k
            per_j[j] = {"best_min_abs_dot": best, "k": best_k, "holds": best > threshold}
        harmonics_ok = all(v["holds"] for v in per_j.values())
        condition2 = {
            "evaluated": True,
            "zero_dot_on_manifold": c1_min <= threshold,
            "resonant_point": resonant,
            "min_abs_f": float(np.min(fvals)),
            "per_j": per_j,
            "holds": c1_min <= threshold and resonant and harmonics_ok,
        }
        verdict = "condition2" if condition2["holds"] else "inconclusive"
    truncation = {"max_j": max_j, "max_multiple": n_mult, "nodes": nodes, "threshold": threshold}
    return NonpersistenceResult(condition1, condition2, verdict, truncation)
