"""
Constant-coefficient monotonicity cones, their Dirichlet duals and strict approximators.

Margins follow one convention throughout the package: a margin >= 0 means
membership, a margin > 0 means the defining inequalities hold strictly, and
the magnitude is a defining value rather than a Euclidean distance.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInput
from .jets import Jet, JetSampler, lambda_max, lambda_min
from .models import Domain

logger = logging.getLogger(__name__)


class DirectionalCone:
    """A closed convex cone D = {p : <a_i, p> >= 0 for all i}, or all of R^n."""

    def __init__(self, n: int, normals: Optional[Sequence[Sequence[float]]] = None):
        self.n = n
        if normals is None or len(normals) == 0:
            self.normals = np.zeros((0, n))
        else:
            a = np.array(normals, dtype=float).reshape(-1, n)
            lengths = np.linalg.norm(a, axis=1)
            if np.any(lengths == 0.0) or not np.all(np.isfinite(a)):
                raise InvalidInput("cone normals must be finite and nonzero")
            self.normals = a / lengths[:, None]
        self.interior_direction = self._find_interior_direction()

    @classmethod
    def full_space(cls, n: int) -> "DirectionalCone":
        return cls(n)

    @classmethod
    def half_space(cls, n: int, axis: int = 0) -> "DirectionalCone":
        """D = {p : p_axis >= 0}."""
        return cls(n, [np.eye(n)[axis]])

    @property
    def full(self) -> bool:
        return self.normals.shape[0] == 0

    def _find_interior_direction(self) -> np.ndarray:
        if self.full:
            return np.zeros(self.n)
        q = self.normals.sum(axis=0)
        if np.linalg.norm(q) == 0.0 or np.min(self.normals @ q) <= 0.0:
            raise InvalidInput("directional cone has empty interior")
        return q / np.linalg.norm(q)

    def margin(self, p: Any) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if self.full:
            return np.full(p.shape[:-1], np.inf)
        return np.min(p @ self.normals.T, axis=-1)

    def dual_margin(self, p: Any) -> np.ndarray:
        """-margin(-p), the defining value of -(Int D)^c."""
        p = np.asarray(p, dtype=float)
        if self.full:
            return np.full(p.shape[:-1], -np.inf)
        return np.max(p @ self.normals.T, axis=-1)

    def contains(self, p: Any) -> np.ndarray:
        return self.margin(p) >= 0.0

    def project_in(self, p: np.ndarray) -> np.ndarray:
        """Push p along the interior direction until every constraint holds."""
        if self.full:
            return p
        q = self.interior_direction
        slack = -(p @ self.normals.T) / (self.normals @ q)
        t = np.maximum(np.max(slack, axis=-1), 0.0)
        return p + t[..., None] * q

    def to_dict(self):
        return {"normals": self.normals.tolist(), "full": self.full}


class ConeKind(Enum):
    M0 = "M0"
    M_NP = "M(N,P)"
    M_P = "M(P)"
    M_DP = "M(D,P)"
    M_NDP = "M(N,D,P)"
    GENERIC = "generic"


_D_KINDS = (ConeKind.M_DP, ConeKind.M_NDP)
_N_KINDS = (ConeKind.M0, ConeKind.M_NP, ConeKind.M_NDP)


@dataclass(frozen=True)
class MonotonicityCone:
    """One of the product cones built from N = {r <= 0}, D and P = {A >= 0}."""
    kind: ConeKind
    n: int
    directions: Optional[DirectionalCone] = None
    predicate: Optional[Callable[[Jet], np.ndarray]] = None

    @classmethod
    def minimal(cls, n: int) -> "MonotonicityCone":
        return cls(ConeKind.M0, n)

    @classmethod
    def negative_positive(cls, n: int) -> "MonotonicityCone":
        return cls(ConeKind.M_NP, n)

    @classmethod
    def positive(cls, n: int) -> "MonotonicityCone":
        return cls(ConeKind.M_P, n)

    @classmethod
    def directional(cls, D: DirectionalCone, negative: bool = False) -> "MonotonicityCone":
        return cls(ConeKind.M_NDP if negative else ConeKind.M_DP, D.n, directions=D)

    @classmethod
    def generic(cls, n: int, predicate: Callable[[Jet], np.ndarray]) -> "MonotonicityCone":
        return cls(ConeKind.GENERIC, n, predicate=predicate)

    @classmethod
    def from_name(cls, name: str, n: int, D: Optional[DirectionalCone] = None) -> "MonotonicityCone":
        lookup = {kind.value: kind for kind in ConeKind}
        lookup.update({"MNP": ConeKind.M_NP, "MP": ConeKind.M_P, "MDP": ConeKind.M_DP,
                       "MNDP": ConeKind.M_NDP})
        if not isinstance(name, str):
            raise InvalidInput(f"cone name must be a string, got {name!r}")
        key = name.replace(" ", "")
        if key not in lookup or lookup[key] is ConeKind.GENERIC:
            raise InvalidInput(f"unknown monotonicity cone: {name}")
        kind = lookup[key]
        if kind in _D_KINDS:
            return cls(kind, n, directions=D or DirectionalCone.half_space(n))
        return cls(kind, n)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def has_interior(self) -> bool:
        return self.kind is not ConeKind.M0

    @property
    def uses_r(self) -> bool:
        return self.kind in _N_KINDS

    def probe_jet(self) -> Jet:
        """(-1, q, I) with q interior to D (q = 0 without directions)."""
        q = self.directions.interior_direction if self.directions is not None else np.zeros(self.n)
        return Jet(-1.0, q, np.eye(self.n))

    def to_dict(self):
        data = {"kind": self.kind.value, "n": self.n}
        if self.directions is not None:
            data["directions"] = self.directions.to_dict()
        return data


def _check_dim(M: MonotonicityCone, J: Jet) -> None:
    if J.n != M.n:
        raise InvalidInput(f"jet dimension {J.n} does not match cone dimension {M.n}")


def cone_member(M: MonotonicityCone, J: Jet) -> np.ndarray:
    """Signed margin of J against M: the min over the variant's active constraints."""
    _check_dim(M, J)
    if M.kind is ConeKind.GENERIC:
        if M.predicate is None:
            raise InvalidInput("generic cone needs a membership predicate")
        return np.where(np.asarray(M.predicate(J), dtype=bool), 1.0, -1.0)

    margin = lambda_min(J.A)
    if M.kind in _N_KINDS:
        margin = np.minimum(margin, -J.r)
    if M.kind is ConeKind.M0:
        margin = np.minimum(margin, -np.linalg.norm(J.p, axis=-1))
    if M.kind in _D_KINDS:
        margin = np.minimum(margin, M.directions.margin(J.p))
    return margin


def cone_interior_member(M: MonotonicityCone, J: Jet, step: float = 1e-6) -> np.ndarray:
    """Margin > 0 iff J is interior to M; M0 has empty interior."""
    if M.kind is ConeKind.M0:
        return np.minimum(cone_member(M, J), 0.0)
    if M.kind is ConeKind.GENERIC:
        pushed = J - Jet(-1.0, np.zeros(M.n), np.eye(M.n)) * step
        return cone_member(M, pushed)
    return cone_member(M, J)


class DualCone:
    """Membership oracle for the Dirichlet dual -(Int M)^c of a monotonicity cone."""

    def __init__(self, cone: MonotonicityCone):
        self.cone = cone

    @property
    def n(self) -> int:
        return self.cone.n

    def margin(self, J: Jet) -> np.ndarray:
        M = self.cone
        _check_dim(M, J)
        if M.kind is ConeKind.M0:
            return np.full(J.batch_shape, np.inf)
        if M.kind is ConeKind.GENERIC:
            return np.where(cone_interior_member(M, -J) > 0.0, -1.0, 1.0)

        margin = lambda_max(J.A)
        if M.kind in _N_KINDS:
            margin = np.maximum(margin, -J.r)
        if M.kind in _D_KINDS:
            margin = np.maximum(margin, M.directions.dual_margin(J.p))
        return margin

    def member(self, J: Jet) -> np.ndarray:
        return self.margin(J) >= 0.0


def cone_dual(M: MonotonicityCone) -> DualCone:
    return DualCone(M)


def sample_cone_member(M: MonotonicityCone, sampler: JetSampler, size: int,
                       scale: float = 1.0) -> Jet:
    """Draw jets of M (not of generic cones)."""
    if M.kind is ConeKind.GENERIC:
        raise InvalidInput("cannot sample a generic cone")
    n = M.n
    r = sampler.normal(size, scale)
    if M.uses_r:
        r = -np.abs(r)
    if M.kind is ConeKind.M0:
        p = np.zeros((size, n))
    else:
        p = sampler.normal((size, n), scale)
        if M.directions is not None:
            p = M.directions.project_in(p)
    A = sampler.psd(n, size, scale)
    return Jet(r, p, A)


@dataclass(frozen=True)
class Quadratic:
    """psi(x) = c + <b, x> + 1/2 <Q (x - x0), x - x0>."""
    c: float
    b: np.ndarray
    Q: np.ndarray
    x0: np.ndarray

    def value(self, x: Any) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.x0
        return (self.c + np.asarray(x, dtype=float) @ self.b
                + 0.5 * np.einsum("...i,ij,...j->...", d, self.Q, d))

    def jet(self, x: Any) -> Jet:
        x = np.asarray(x, dtype=float)
        d = x - self.x0
        p = self.b + d @ self.Q
        A = np.broadcast_to(self.Q, x.shape[:-1] + self.Q.shape)
        return Jet(self.value(x), p, A)

    def to_dict(self):
        return {"c": self.c, "b": self.b.tolist(), "Q": self.Q.tolist(), "x0": self.x0.tolist()}


_MAX_DOUBLINGS = 40


def strict_approximator(M: MonotonicityCone, domain: Domain) -> Optional[Quadratic]:
    """
    Search psi = <b, x> + 1/2 |x - x0|^2 - C, x0 the box center, for a
    function with J^2 psi interior to M at every node of the domain.

    Returns:
        the first member of the family that passes, or None
    """
    if domain.n != M.n:
        raise InvalidInput(f"domain dimension {domain.n} does not match cone dimension {M.n}")
    if not M.has_interior:
        logger.warning(f"{M.name} has empty interior; no strict approximator")
        return None

    nodes = domain.points().reshape(-1, domain.n)
    x0 = 0.5 * (np.asarray(domain.lo) + np.asarray(domain.hi))
    radius = 0.5 * domain.diameter
    Q = np.eye(M.n)

    if M.directions is not None:
        q = M.directions.interior_direction
        slopes = [np.zeros(M.n)] + [2.0 ** k * q for k in range(_MAX_DOUBLINGS)]
    else:
        slopes = [np.zeros(M.n)]

    for b in slopes:
        shifts = [0.0]
        if M.uses_r or M.kind is ConeKind.GENERIC:
            shifts.append(0.5 * radius ** 2 + float(np.max(np.abs(nodes @ b))) + 1.0)
        for C in shifts:
            psi = Quadratic(-C, b, Q, x0)
            if np.all(cone_interior_member(M, psi.jet(nodes)) > 0.0):
                logger.debug(f"strict approximator for {M.name}: C={C}, |b|={np.linalg.norm(b)}")
                return psi

    logger.warning(f"no strict approximator found for {M.name} in the quadratic family")
    return None
