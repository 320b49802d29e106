"""Fixed-step integration of the flow and its variational equations.

Two interchangeable back ends share one set of step rules:

* a pure-Python loop over ``SystemDef.field`` (any user system), and
* numba loops over ``SystemDef.kernel`` (used automatically when present).

The maximal finite-time Lyapunov exponent is the time average of
``log |du_k| / |du_{k-1}|`` for the tangent vector ``du`` carried by
``du' = DV(u) du``.  The tangent vector is renormalised every
``renorm_every`` steps so the log-sum telescopes to the same value without
overflow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numba
import numpy as np

from .systems import SystemDef, as_state, jacobian

METHODS = ("euler", "rk4")
FD_SCHEMES = ("forward", "central")


@dataclass(frozen=True)
class IntegrationConfig:
    dt: float = 0.01
    t_max: float = 1500.0
    method: str = "euler"
    escape_radius: float = 10.0
    renorm_every: int = 1
    fd_h: float = 1e-6
    fd_scheme: str = "forward"
    output_stride: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be a positive finite number")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError("t_max must be a positive finite number")
        if self.t_max / self.dt < 1:
            raise ValueError("t_max must be at least one step (t_max >= dt)")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.fd_scheme not in FD_SCHEMES:
            raise ValueError(f"fd_scheme must be one of {FD_SCHEMES}, got {self.fd_scheme!r}")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")
        if not self.fd_h > 0:
            raise ValueError("fd_h must be positive")
        if int(self.renorm_every) != self.renorm_every or self.renorm_every < 1:
            raise ValueError("renorm_every must be a positive integer")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ValueError("output_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        # guards 1500/0.01 style ratios that land a hair below the integer
        return int(math.floor(self.t_max / self.dt * (1.0 + 1e-12)))


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass
class EscapeEvent:
    """Orbit left the ball of radius ``escape_radius`` or became non-finite.

    ``lyapunov`` is the finite-time exponent accumulated up to the escape
    (only set by :func:`ftle_max`); ``trajectory`` is the stored prefix
    (only set by :func:`integrate_flow`).
    """

    time: float
    step: int
    state: np.ndarray
    lyapunov: Optional[float] = None
    trajectory: Optional[Trajectory] = None


def euler_ftle_bias(omega: float, dt: float) -> float:
    """Spurious FTLE of explicit Euler on a rotation of angular frequency ``omega``.

    Each step multiplies lengths by ``sqrt(1 + (omega dt)^2)``; to leading order
    this is ``omega^2 dt / 2``.
    """
    return math.log1p((omega * dt) ** 2) / (2.0 * dt)


def _norm(v) -> float:
    s = 0.0
    for x in v:
        s += x * x
    return math.sqrt(s)


def _has_kernel(system: SystemDef) -> bool:
    return system.kernel is not None


def _check_u0(system: SystemDef, u0) -> np.ndarray:
    return as_state(u0, system.dimension)


def _unit_delta(system: SystemDef, delta0) -> np.ndarray:
    if delta0 is None:
        d = np.zeros(system.dimension)
        d[0] = 1.0
        return d
    d = as_state(delta0, system.dimension)
    nrm = _norm(d)
    if abs(nrm - 1.0) > 1e-12:
        raise ValueError(f"delta0 must be a unit vector, |delta0| = {nrm!r}")
    return d


# ----------------------------------------------------------------------------
# compiled loops


@numba.njit(nogil=True)
def _k_fd_jacobian(kernel, p, u, f0, h, central, J, up, fp, fm):
    n = u.shape[0]
    kernel(u, p, f0)
    for j in range(n):
        for i in range(n):
            up[i] = u[i]
        up[j] += h
        kernel(up, p, fp)
        if central:
            up[j] = u[j] - h
            kernel(up, p, fm)
            for i in range(n):
                J[i, j] = (fp[i] - fm[i]) / (2.0 * h)
        else:
            for i in range(n):
                J[i, j] = (fp[i] - f0[i]) / h


@numba.njit(nogil=True)
def _k_norm(v):
    s = 0.0
    for i in range(v.shape[0]):
        s += v[i] * v[i]
    return math.sqrt(s)


@numba.njit(nogil=True)
def _k_tangent_rhs(kernel, p, u, d, h, central, fu, fd, J, up, fp, fm):
    n = u.shape[0]
    _k_fd_jacobian(kernel, p, u, fu, h, central, J, up, fp, fm)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += J[i, j] * d[j]
        fd[i] = acc


@numba.njit(nogil=True)
def _k_ftle(kernel, p, u0, d0, dt, nsteps, h, central, esc, renorm_every, rk4):
    n = u0.shape[0]
    u = u0.copy()
    d = d0.copy()
    J = np.empty((n, n))
    up = np.empty(n)
    fp = np.empty(n)
    fm = np.empty(n)
    k1u = np.empty(n)
    k1d = np.empty(n)
    k2u = np.empty(n)
    k2d = np.empty(n)
    k3u = np.empty(n)
    k3d = np.empty(n)
    k4u = np.empty(n)
    k4d = np.empty(n)
    us = np.empty(n)
    ds = np.empty(n)
    logsum = 0.0
    since = 0
    for k in range(nsteps):
        if rk4:
            _k_tangent_rhs(kernel, p, u, d, h, central, k1u, k1d, J, up, fp, fm)
            for i in range(n):
                us[i] = u[i] + 0.5 * dt * k1u[i]
                ds[i] = d[i] + 0.5 * dt * k1d[i]
            _k_tangent_rhs(kernel, p, us, ds, h, central, k2u, k2d, J, up, fp, fm)
            for i in range(n):
                us[i] = u[i] + 0.5 * dt * k2u[i]
                ds[i] = d[i] + 0.5 * dt * k2d[i]
            _k_tangent_rhs(kernel, p, us, ds, h, central, k3u, k3d, J, up, fp, fm)
            for i in range(n):
                us[i] = u[i] + dt * k3u[i]
                ds[i] = d[i] + dt * k3d[i]
            _k_tangent_rhs(kernel, p, us, ds, h, central, k4u, k4d, J, up, fp, fm)
            for i in range(n):
                u[i] = u[i] + dt / 6.0 * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i])
                d[i] = d[i] + dt / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i])
        else:
            _k_tangent_rhs(kernel, p, u, d, h, central, k1u, k1d, J, up, fp, fm)
            for i in range(n):
                u[i] = u[i] + dt * k1u[i]
                d[i] = d[i] + dt * k1d[i]
        since += 1
        if since == renorm_every:
            nrm = _k_norm(d)
            logsum += math.log(nrm)
            for i in range(n):
                d[i] = d[i] / nrm
            since = 0
        r = _k_norm(u)
        if not r < esc:
            tail = math.log(_k_norm(d)) if since > 0 else 0.0
            return (logsum + tail) / ((k + 1) * dt), True, k + 1, u
    if since > 0:
        logsum += math.log(_k_norm(d))
    return logsum / (nsteps * dt), False, nsteps, u


@numba.njit(nogil=True)
def _k_flow(kernel, p, u0, dt, nsteps, esc, stride, rk4):
    n = u0.shape[0]
    out = np.empty((nsteps // stride + 1, n))
    idx = np.empty(nsteps // stride + 1, dtype=np.int64)
    u = u0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    us = np.empty(n)
    out[0] = u
    idx[0] = 0
    stored = 1
    for k in range(nsteps):
        kernel(u, p, k1)
        if rk4:
            for i in range(n):
                us[i] = u[i] + 0.5 * dt * k1[i]
            kernel(us, p, k2)
            for i in range(n):
                us[i] = u[i] + 0.5 * dt * k2[i]
            kernel(us, p, k3)
            for i in range(n):
                us[i] = u[i] + dt * k3[i]
            kernel(us, p, k4)
            for i in range(n):
                u[i] = u[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        else:
            for i in range(n):
                u[i] = u[i] + dt * k1[i]
        escaped = not _k_norm(u) < esc
        if (k + 1) % stride == 0 or escaped:
            out[stored] = u
            idx[stored] = k + 1
            stored += 1
        if escaped:
            return out[:stored], idx[:stored], True
    return out[:stored], idx[:stored], False


# ----------------------------------------------------------------------------
# pure-Python loops


def _py_field(system: SystemDef, u: np.ndarray) -> np.ndarray:
    return np.asarray(system.field(u), dtype=np.float64)


def _py_tangent_rhs(system, u, d, cfg):
    J = jacobian(system, u, cfg.fd_h, cfg.fd_scheme)
    return _py_field(system, u), J @ d


def _py_ftle(system, u0, d0, cfg):
    u = u0.copy()
    d = d0.copy()
    dt = cfg.dt
    logsum = 0.0
    since = 0
    nsteps = cfg.n_steps
    for k in range(nsteps):
        if cfg.method == "rk4":
            k1u, k1d = _py_tangent_rhs(system, u, d, cfg)
            k2u, k2d = _py_tangent_rhs(system, u + 0.5 * dt * k1u, d + 0.5 * dt * k1d, cfg)
            k3u, k3d = _py_tangent_rhs(system, u + 0.5 * dt * k2u, d + 0.5 * dt * k2d, cfg)
            k4u, k4d = _py_tangent_rhs(system, u + dt * k3u, d + dt * k3d, cfg)
            u = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
            d = d + dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
        else:
            fu, fd = _py_tangent_rhs(system, u, d, cfg)
            u = u + dt * fu
            d = d + dt * fd
        since += 1
        if since == cfg.renorm_every:
            nrm = _norm(d)
            logsum += math.log(nrm)
            d = d / nrm
            since = 0
        if not _norm(u) < cfg.escape_radius:
            tail = math.log(_norm(d)) if since > 0 else 0.0
            return (logsum + tail) / ((k + 1) * dt), True, k + 1, u
    if since > 0:
        logsum += math.log(_norm(d))
    return logsum / (nsteps * dt), False, nsteps, u


def _py_flow(system, u0, cfg):
    u = u0.copy()
    dt = cfg.dt
    stride = cfg.output_stride
    states = [u.copy()]
    idx = [0]
    for k in range(cfg.n_steps):
        if cfg.method == "rk4":
            k1 = _py_field(system, u)
            k2 = _py_field(system, u + 0.5 * dt * k1)
            k3 = _py_field(system, u + 0.5 * dt * k2)
            k4 = _py_field(system, u + dt * k3)
            u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        else:
            u = u + dt * _py_field(system, u)
        escaped = not _norm(u) < cfg.escape_radius
        if (k + 1) % stride == 0 or escaped:
            states.append(u.copy())
            idx.append(k + 1)
        if escaped:
            return np.array(states), np.array(idx), True
    return np.array(states), np.array(idx), False


# ----------------------------------------------------------------------------
# public API


def integrate_flow(system: SystemDef, u0, cfg: IntegrationConfig = IntegrationConfig(),
                   compiled: Optional[bool] = None) -> Union[Trajectory, EscapeEvent]:
    """Integrate ``u' = V(u)`` for ``cfg.n_steps`` steps, storing every ``output_stride``-th state.

    Returns an :class:`EscapeEvent` carrying the stored prefix if the orbit
    leaves the escape ball; the escape state is always the last stored row.
    """
    u0 = _check_u0(system, u0)
    use_kernel = _has_kernel(system) if compiled is None else compiled
    if _norm(u0) >= cfg.escape_radius:
        traj = Trajectory(np.zeros(1), u0[None, :].copy())
        return EscapeEvent(0.0, 0, u0.copy(), trajectory=traj)
    if use_kernel:
        states, idx, escaped = _k_flow(system.kernel, system.kernel_args, u0, cfg.dt,
                                       cfg.n_steps, cfg.escape_radius, cfg.output_stride,
                                       cfg.method == "rk4")
    else:
        states, idx, escaped = _py_flow(system, u0, cfg)
    traj = Trajectory(idx * cfg.dt, states)
    if escaped:
        return EscapeEvent(float(idx[-1] * cfg.dt), int(idx[-1]), states[-1].copy(),
                           trajectory=traj)
    return traj


def ftle_max(system: SystemDef, u0, cfg: IntegrationConfig = IntegrationConfig(), delta0=None,
             compiled: Optional[bool] = None) -> Union[float, EscapeEvent]:
    """Finite-time maximal Lyapunov exponent of the orbit through ``u0``.

    ``delta0`` defaults to the first unit vector.  An escaping orbit yields an
    :class:`EscapeEvent` whose ``lyapunov`` holds the exponent accumulated up to
    the escape step.  Compiled runs use finite differences for ``DV`` even when
    an analytic Jacobian is attached; pass ``compiled=False`` to use it.
    """
    u0 = _check_u0(system, u0)
    d0 = _unit_delta(system, delta0)
    use_kernel = _has_kernel(system) if compiled is None else compiled
    if _norm(u0) >= cfg.escape_radius:
        return EscapeEvent(0.0, 0, u0.copy(), lyapunov=0.0)
    if use_kernel:
        lam, escaped, steps, u = _k_ftle(system.kernel, system.kernel_args, u0, d0, cfg.dt,
                                         cfg.n_steps, cfg.fd_h, cfg.fd_scheme == "central",
                                         cfg.escape_radius, int(cfg.renorm_every),
                                         cfg.method == "rk4")
    else:
        lam, escaped, steps, u = _py_ftle(system, u0, d0, cfg)
    if escaped:
        return EscapeEvent(steps * cfg.dt, int(steps), np.array(u), lyapunov=float(lam))
    return float(lam)


def random_unit_vectors(count: int, dimension: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((count, dimension))
    return v / np.sqrt(np.sum(v * v, axis=1))[:, None]


def ftle_mean(system: SystemDef, u0, cfg: IntegrationConfig = IntegrationConfig(),
              n_directions: int = 1, seed: int = 0,
              compiled: Optional[bool] = None) -> Union[float, EscapeEvent]:
    """Average :func:`ftle_max` over ``n_directions`` seeded random initial tangents.

    If any run escapes the result is the first escape, with ``lyapunov`` set
    to the mean of the (partial) exponents.
    """
    if n_directions < 1:
        raise ValueError("n_directions must be >= 1")
    dirs = random_unit_vectors(n_directions, system.dimension, seed)
    vals = []
    first_escape = None
    for d in dirs:
        # re-normalise in Python so the unit check is exact for this vector
        d = d / _norm(d)
        r = ftle_max(system, u0, cfg, d, compiled=compiled)
        if isinstance(r, EscapeEvent):
            first_escape = first_escape or r
            vals.append(r.lyapunov)
        else:
            vals.append(r)
    mean = math.fsum(vals) / len(vals)
    if first_escape is not None:
        first_escape.lyapunov = mean
        return first_escape
    return mean
