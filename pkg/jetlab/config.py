"""
Configuration management for jetlab.
"""

import os
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, Optional

try:
    from dotenv import load_dotenv
except ImportError:
    load_dotenv = None


@dataclass(frozen=True)
class Tolerances:
    """Numerical tolerances shared by membership, verifier and viscosity checks."""
    # Interior shell is interior_rel * (1 + |J|)
    interior_rel: float = 1e-9
    # Set equalities are asserted only off a shell of this width
    shell: float = 1e-8
    # |F(x, J)| <= compat counts as the operator's zero level
    compat: float = 1e-6
    probe_step: float = 1e-6
    bisection_steps: int = 60
    # Radius of the jet window used for sampling and fiber comparisons
    jet_radius: float = 10.0
    # c in the viscosity tolerance tau(h) = c * h
    contact_c: float = 4.0
    eigen_tol: float = 1e-12

    def interior_eps(self, jet_norm):
        """Width of the boundary shell around a jet of the given norm."""
        return self.interior_rel * (1.0 + jet_norm)

    def tau(self, h: float) -> float:
        """Viscosity verdict tolerance tau(h) = c * h."""
        return self.contact_c * h

    def contact_slack(self, h: float, n: int) -> float:
        """
        Touching slack sigma(h) = c h^3 / (4n) for contact quadratics.

        A quadratic admitted with this slack differs in Hessian from an exact
        contact jet by at most c h / (2n) per direction, so the induced change
        in trace or determinant stays below tau(h) / 2.
        """
        # c h^2 here would let admitted Hessians drift by O(c), past tau(h)
        return self.contact_c * h ** 3 / (4.0 * n)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules for the Dirichlet solvers."""
    laplace_tol: float = 1e-10
    envelope_tol: float = 1e-9
    # Monge-Ampere residual bound is ma_tol * h^2
    ma_tol: float = 1e-6
    max_iterations: int = 1_000_000
    stencil_radius: int = 3
    divergence_window: int = 1000
    # Multiplier on the h^2/4 damping bound of the Monge-Ampere iteration
    damping: float = 1.0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class AppConfig:
    """Application configuration."""
    seed: int = 1
    samples: int = 10_000
    threads: int = 1
    # Samples drawn per independent RNG stream
    stream_size: int = 2048
    tolerances: Tolerances = field(default_factory=Tolerances)
    solver: SolverConfig = field(default_factory=SolverConfig)
    log_level: str = "INFO"

    def __post_init__(self):
        """Clamp worker count and validate sample sizes."""
        if self.threads < 1:
            self.threads = 1
        if self.samples < 1:
            raise ValueError(f"samples must be positive, got {self.samples}")
        if self.stream_size < 1:
            raise ValueError(f"stream_size must be positive, got {self.stream_size}")


def load_config_from_env(env_file: Optional[str] = None) -> AppConfig:
    """Load configuration from environment variables (and an optional .env file)."""
    if load_dotenv is not None:
        load_dotenv(env_file)

    tolerances = Tolerances(
        contact_c=float(os.getenv('JETLAB_CONTACT_C', '4.0')),
    )

    return AppConfig(
        seed=int(os.getenv('JETLAB_SEED', '1')),
        samples=int(os.getenv('JETLAB_SAMPLES', '10000')),
        threads=int(os.getenv('JETLAB_THREADS', '1')),
        tolerances=tolerances,
        log_level=os.getenv('JETLAB_LOG_LEVEL', 'INFO').upper(),
    )
