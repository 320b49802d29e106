"""Weighted partial integrability of flows with a Jacobi multiplier."""

__version__ = "0.1.0"

from .systems import (  # noqa: E402
    BenchmarkParams,
    SystemDef,
    benchmark_system,
    check_weighted_divergence,
    eval_benchmark_field,
    eval_density,
    jacobian_fd,
)
from .integrate import EscapeEvent, IntegrationConfig, Trajectory, ftle_max, integrate_flow  # noqa: E402
from .functional import GridSpec, IntegrabilityReport, classify, compute_m_rho  # noqa: E402

__all__ = [
    "BenchmarkParams", "SystemDef", "benchmark_system", "check_weighted_divergence",
    "eval_benchmark_field", "eval_density", "jacobian_fd", "EscapeEvent", "IntegrationConfig",
    "Trajectory", "ftle_max", "integrate_flow", "GridSpec", "IntegrabilityReport", "classify",
    "compute_m_rho",
]
