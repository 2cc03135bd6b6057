"""
Monotone finite-difference Dirichlet solvers and the comparison / ZMP harnesses.

All three schemes are written as update maps that are nondecreasing in every
neighbor value, iterated with the boundary nodes held at the data.
"""

import logging
from dataclasses import replace
from itertools import product
from math import gcd
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cones import MonotonicityCone, strict_approximator
from .config import SolverConfig, Tolerances
from .errors import (
    InvalidCoefficient, InvalidInput, IterationLimitExceeded, NotAdmissibleData, PreconditionError,
    Unsupported,
)
from .expressions import Coefficient, MatrixCoefficient
from .models import BoundaryData, CheckReport, CheckStatus, Domain, GridFunction, SolveResult
from .subequations import Subequation, dual_cone_subequation
from .viscosity import DEFAULT_RADIUS, is_subharmonic, is_superharmonic

logger = logging.getLogger(__name__)

# orthogonal direction pairs of the wide Monge-Ampere stencil
MA_PAIRS = (
    ((1, 0), (0, 1)),
    ((1, 1), (1, -1)),
    ((1, 2), (-2, 1)),
    ((2, 1), (-1, 2)),
)


def _core(ndim: int) -> Tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in range(ndim))


def neighbor_sum(u: np.ndarray) -> np.ndarray:
    """Sum of the 2n axis neighbors at interior nodes (zero on the boundary)."""
    total = np.zeros_like(u)
    core = _core(u.ndim)
    for axis in range(u.ndim):
        up = list(core)
        down = list(core)
        up[axis] = slice(2, None)
        down[axis] = slice(0, -2)
        total[core] += u[tuple(up)] + u[tuple(down)]
    return total


def laplace_map(u: np.ndarray, h: float, rhs: Optional[np.ndarray] = None) -> np.ndarray:
    """The Jacobi update (sum of neighbors - h^2 rhs) / 2n on interior nodes."""
    n = u.ndim
    out = u.copy()
    core = _core(n)
    value = neighbor_sum(u)
    if rhs is not None:
        value = value - h * h * rhs
    out[core] = value[core] / (2.0 * n)
    return out


def _check_boundary(domain: Domain, g: BoundaryData) -> None:
    if g.domain != domain:
        raise InvalidInput("boundary data lives on a different domain")
    if min(domain.shape) < 3:
        raise InvalidInput(f"grid {domain.shape} has no interior nodes")


def solve_laplace(domain: Domain, g: BoundaryData, config: Optional[SolverConfig] = None,
                  rhs: Optional[Any] = None) -> SolveResult:
    """
    Red-black Gauss-Seidel for the (2n+1)-point Laplacian, Delta u = rhs.

    Stops when max |update - u| <= laplace_tol on the interior.
    """
    config = config or SolverConfig()
    _check_boundary(domain, g)
    h = domain.h
    u = g.initial_grid(fill=float(np.mean(g.values[domain.boundary_mask()])))
    source = None
    if rhs is not None:
        source = np.broadcast_to(np.asarray(rhs, dtype=float), domain.shape)
    index_sum = sum(np.indices(domain.shape))
    interior = domain.interior_mask(1)
    colors = [interior & (index_sum % 2 == c) for c in (0, 1)]

    residual = np.inf
    for iteration in range(1, config.max_iterations + 1):
        for color in colors:
            update = laplace_map(u, h, source)
            u[color] = update[color]
        residual = float(np.max(np.abs(laplace_map(u, h, source) - u)[interior]))
        if residual <= config.laplace_tol:
            break
    else:
        raise IterationLimitExceeded(f"Laplace solve stopped at residual {residual:.3e}")

    logger.info(f"solve_laplace: {iteration} iterations, residual {residual:.3e}")
    return SolveResult(GridFunction(domain, u), iteration, residual, "laplace-red-black-gs")


def lattice_directions(n: int, radius: int) -> List[Tuple[int, ...]]:
    """Primitive integer directions with entries in [-radius, radius], one per +-pair."""
    out = []
    for e in product(range(-radius, radius + 1), repeat=n):
        if not any(e):
            continue
        first = next(v for v in e if v != 0)
        if first < 0:
            continue
        divisor = 0
        for v in e:
            divisor = gcd(divisor, abs(v))
        if divisor == 1:
            out.append(tuple(e))
    return out


def _shifted(padded: np.ndarray, offset: Sequence[int], pad: int, shape: Tuple[int, ...]) -> np.ndarray:
    return padded[tuple(slice(pad + o, pad + o + m) for o, m in zip(offset, shape))]


def envelope_map(u: np.ndarray, directions: Sequence[Tuple[int, ...]]) -> np.ndarray:
    """u <- min(u, min_e (u(x + e) + u(x - e)) / 2) on interior nodes."""
    pad = max(max(abs(v) for v in e) for e in directions)
    padded = np.pad(u, pad, mode="constant", constant_values=np.inf)
    best = u.copy()
    for e in directions:
        minus = tuple(-v for v in e)
        average = 0.5 * (_shifted(padded, e, pad, u.shape) + _shifted(padded, minus, pad, u.shape))
        best = np.minimum(best, average)
    out = u.copy()
    core = _core(u.ndim)
    out[core] = best[core]
    return out


def solve_convex_envelope(domain: Domain, g: BoundaryData,
                          config: Optional[SolverConfig] = None) -> SolveResult:
    """
    Discrete convex envelope of the boundary data: the largest grid function
    below every lattice-direction midpoint average, iterated down from max(g).
    """
    config = config or SolverConfig()
    _check_boundary(domain, g)
    directions = lattice_directions(domain.n, config.stencil_radius)
    interior = domain.interior_mask(1)
    u = g.initial_grid(fill=float(np.max(g.values[domain.boundary_mask()])))

    residual = np.inf
    for iteration in range(1, config.max_iterations + 1):
        update = envelope_map(u, directions)
        residual = float(np.max((u - update)[interior]))
        u = update
        if residual <= config.envelope_tol:
            break
    else:
        raise IterationLimitExceeded(f"convex envelope stopped at residual {residual:.3e}")

    logger.info(f"solve_convex_envelope: {iteration} iterations, residual {residual:.3e}, "
                f"{len(directions)} directions")
    return SolveResult(GridFunction(domain, u), iteration, residual, "convex-envelope-wide-stencil",
                       {"directions": [list(e) for e in directions]})


class MongeAmpereScheme:
    """
    Wide-stencil operator min over pairs (e, e') of
    max(D_e u + <M e, e>/|e|^2, 0) * max(D_e' u + <M e', e'>/|e'|^2, 0) - f
    with D_e the normalized second difference along e.
    """

    def __init__(self, domain: Domain, f: np.ndarray, shift: np.ndarray, radius: int = 3):
        if domain.n != 2:
            raise InvalidInput("the Monge-Ampere scheme is two-dimensional")
        self.domain = domain
        self.h = domain.h
        self.f = f
        self.pairs = [pair for pair in MA_PAIRS if max(abs(v) for e in pair for v in e) <= radius]
        self.pad = max(abs(v) for pair in self.pairs for e in pair for v in e)
        self.offsets = {}
        for pair in self.pairs:
            for e in pair:
                v = np.asarray(e, dtype=float)
                self.offsets[e] = np.einsum("...ij,i,j->...", shift, v, v) / (v @ v)

    def curvatures(self, u: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        padded = np.pad(u, self.pad, mode="constant", constant_values=np.nan)
        out = []
        for pair in self.pairs:
            terms = []
            for e in pair:
                plus = _shifted(padded, e, self.pad, u.shape)
                minus = _shifted(padded, tuple(-v for v in e), self.pad, u.shape)
                length2 = float(e[0] ** 2 + e[1] ** 2)
                terms.append(np.maximum((plus - 2.0 * u + minus) / (length2 * self.h ** 2)
                                        + self.offsets[e], 0.0))
            out.append((terms[0], terms[1]))
        return out

    def operator(self, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(operator value, d1 + d2 of the minimizing pair); +inf where no pair fits."""
        best = np.full(u.shape, np.inf)
        spread = np.zeros(u.shape)
        with np.errstate(invalid="ignore"):
            for d1, d2 in self.curvatures(u):
                value = d1 * d2 - self.f
                better = np.isfinite(value) & (value < best)
                best = np.where(better, value, best)
                spread = np.where(better, d1 + d2, spread)
        return best, spread

    def step(self, u: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
        value, _ = self.operator(u)
        out = u.copy()
        core = _core(2)
        out[core] = u[core] + dt * value[core]
        return out, value


def solve_monge_ampere(domain: Domain, f: Any, g: BoundaryData, M: Any = None,
                       config: Optional[SolverConfig] = None,
                       initial: Optional[GridFunction] = None) -> SolveResult:
    """
    Damped fixed point u <- u + dt * (MA_h(u) - f), dt = damping * h^2 / (4 max(1, L)),
    with L the largest d1 + d2 of the active pairs. Initialized from the Poisson
    problem Delta u = 2 sqrt(f) - tr M unless an initial grid is given.

    Stops at residual <= ma_tol * h^2, with the Poisson start solved to the
    matching tolerance, so the iteration error falls with the grid spacing.
    """
    config = config or SolverConfig()
    _check_boundary(domain, g)
    if domain.n != 2:
        raise InvalidInput("solve_monge_ampere needs a two-dimensional box")
    points = domain.points()
    f_values = np.broadcast_to(np.asarray(Coefficient.parse(f, 2)(points), dtype=float), domain.shape).copy()
    if np.any(f_values < 0.0):
        raise InvalidCoefficient("Monge-Ampere right-hand side must be nonnegative")
    shift = MatrixCoefficient.parse(M, 2)(points)
    scheme = MongeAmpereScheme(domain, f_values, shift, config.stencil_radius)
    interior = domain.interior_mask(1)
    h = domain.h
    tol = config.ma_tol * h * h

    if initial is not None:
        u = initial.values.copy()
        boundary = domain.boundary_mask()
        u[boundary] = g.values[boundary]
    else:
        rhs = 2.0 * np.sqrt(f_values) - np.trace(shift, axis1=-2, axis2=-1)
        start = replace(config, laplace_tol=min(config.laplace_tol, 0.25 * tol * h * h))
        u = solve_laplace(domain, g, start, rhs=rhs).grid.values.copy()

    residual = np.inf
    checkpoint = np.inf
    for iteration in range(1, config.max_iterations + 1):
        value, spread = scheme.operator(u)
        residual = float(np.max(np.abs(value[interior])))
        if not np.isfinite(residual):
            raise NotAdmissibleData("Monge-Ampere iteration produced non-finite values")
        if residual <= tol:
            break
        if iteration % config.divergence_window == 0:
            if residual > 2.0 * checkpoint:
                raise NotAdmissibleData(
                    f"Monge-Ampere residual grew from {checkpoint:.3e} to {residual:.3e}")
            checkpoint = residual
        L = float(np.max(spread[interior]))
        dt = config.damping * h * h / (4.0 * max(1.0, L))
        core = _core(2)
        u[core] = u[core] + dt * value[core]
    else:
        raise IterationLimitExceeded(f"Monge-Ampere solve stopped at residual {residual:.3e}")

    logger.info(f"solve_monge_ampere: {iteration} iterations, residual {residual:.3e}")
    return SolveResult(GridFunction(domain, u), iteration, residual, "monge-ampere-wide-stencil",
                       {"pairs": [[list(e) for e in pair] for pair in scheme.pairs]})


def check_comparison(F: Subequation, u: GridFunction, w: GridFunction,
                     k: int = DEFAULT_RADIUS, seed: int = 0) -> CheckReport:
    """u F-subharmonic, w F-superharmonic and u <= w + tau on the boundary imply u <= w + tau inside."""
    if u.domain != w.domain:
        raise InvalidInput("u and w live on different grids")
    tol = F.tolerances
    tau = tol.tau(u.domain.h)
    if not is_subharmonic(F, u, k).holds:
        raise PreconditionError(f"u is not {F.name}-subharmonic")
    if not is_superharmonic(F, w, k).holds:
        raise PreconditionError(f"w is not {F.name}-superharmonic")
    boundary = u.domain.boundary_mask()
    gap = u.values - w.values
    if np.any(gap[boundary] > tau):
        raise PreconditionError(f"u exceeds w + tau on the boundary by {float(np.max(gap[boundary])):.3e}")

    inside = ~boundary
    worst = float(np.max(gap[inside])) if np.any(inside) else -np.inf
    verdict = CheckStatus.FAIL if worst > tau else CheckStatus.PASS
    counterexamples = []
    if verdict is CheckStatus.FAIL:
        masked = np.where(inside, gap, -np.inf)
        node = np.unravel_index(np.argmax(masked), gap.shape)
        counterexamples.append({"node": list(map(int, node)),
                                "x": u.domain.points()[node].tolist(),
                                "u": float(u.values[node]), "w": float(w.values[node])})
    logger.info(f"check_comparison {F.name}: {verdict.value} (max interior u - w = {worst:.3e})")
    return CheckReport("check_comparison", int(np.sum(inside)), seed, verdict, counterexamples,
                       tol.to_dict(), {"subject": F.name, "tau": tau, "max_gap": worst})


def check_zmp(M: MonotonicityCone, z: GridFunction, k: int = DEFAULT_RADIUS,
              tolerances: Optional[Tolerances] = None, seed: int = 0) -> CheckReport:
    """Dual-cone subharmonics nonpositive on the boundary stay <= tau inside."""
    psi = strict_approximator(M, z.domain)
    if psi is None:
        raise Unsupported(f"no strict approximator for {M.name}; the zero maximum principle is not established")
    S = dual_cone_subequation(M)
    if tolerances is not None:
        S = replace(S, tolerances=tolerances)
    tol = S.tolerances
    tau = tol.tau(z.domain.h)
    if not is_subharmonic(S, z, k).holds:
        raise PreconditionError(f"z is not {S.name}-subharmonic")
    boundary = z.domain.boundary_mask()
    if np.any(z.values[boundary] > tau):
        raise PreconditionError("z exceeds tau on the boundary")
    inside = ~boundary
    worst = float(np.max(z.values[inside])) if np.any(inside) else -np.inf
    verdict = CheckStatus.FAIL if worst > tau else CheckStatus.PASS
    counterexamples = []
    if verdict is CheckStatus.FAIL:
        node = np.unravel_index(np.argmax(np.where(inside, z.values, -np.inf)), z.values.shape)
        counterexamples.append({"node": list(map(int, node)), "x": z.domain.points()[node].tolist(),
                                "z": float(z.values[node])})
    logger.info(f"check_zmp {M.name}: {verdict.value} (max interior z = {worst:.3e})")
    details: Dict[str, Any] = {"cone": M.name, "tau": tau, "max_interior": worst,
                               "approximator": psi.to_dict()}
    return CheckReport("check_zmp", int(np.sum(inside)), seed, verdict, counterexamples, tol.to_dict(),
                       details)
