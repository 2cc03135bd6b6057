"""
Constraint sets in 2-jet space, proper elliptic pairs and the builtin examples.

A Subequation is represented by a margin function m(x, J): J is in the fiber
F_x iff m >= 0 and interior iff m exceeds the shell width
eps = interior_rel * (1 + |J|). Sets known only through a membership oracle
report their status code (1 interior, 0 boundary shell, -1 exterior) as the
margin, obtained by probing J -/+ t J0. With either representation the
Dirichlet dual has margin -m(x, -J); oracle_dual rebuilds the same dual from
membership queries alone. Induced sets also keep their constraint margin and
operator value apart (parts_fn) for the viscosity tolerances.
"""

import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from .cones import DirectionalCone, MonotonicityCone, cone_dual, cone_member
from .config import Tolerances
from .errors import FiberDegenerate, InvalidCoefficient, InvalidInput, OutOfDomain, PreconditionError
from .expressions import Coefficient, MatrixCoefficient
from .jets import Jet, identity_jet, lambda_min, sym_det
from .models import Domain

logger = logging.getLogger(__name__)

MarginFn = Callable[[np.ndarray, Jet], np.ndarray]
OracleFn = Callable[[np.ndarray, Jet], np.ndarray]
# (constraint margin, operator value) of an induced set
PartsFn = Callable[[np.ndarray, Jet], Tuple[np.ndarray, np.ndarray]]


class Membership(Enum):
    INTERIOR = 1
    BOUNDARY = 0
    EXTERIOR = -1


@dataclass(frozen=True)
class MemberResult:
    status: Membership
    margin: float


def broadcast_points(x: Any, J: Jet) -> np.ndarray:
    """Broadcast base points against the jet batch: result shape batch + (n,)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != J.n:
        raise InvalidInput(f"point dimension {x.shape[-1]} does not match jet dimension {J.n}")
    batch = np.broadcast_shapes(x.shape[:-1], J.batch_shape)
    return np.broadcast_to(x, batch + (J.n,))


def _broadcast_jet(J: Jet, batch) -> Jet:
    if J.batch_shape == tuple(batch):
        return J
    return Jet(np.broadcast_to(J.r, batch), np.broadcast_to(J.p, batch + (J.n,)),
               np.broadcast_to(J.A, batch + (J.n, J.n)))


@dataclass(frozen=True)
class Subequation:
    """A constraint set F in X x J^2 with margin access to its fibers."""
    name: str
    n: int
    margin_fn: Optional[MarginFn] = None
    oracle: Optional[OracleFn] = None
    cone: Optional[MonotonicityCone] = None
    probe: Optional[Jet] = None
    constant_coefficients: bool = True
    X: Optional[Domain] = None
    tolerances: Tolerances = field(default_factory=Tolerances)
    parts_fn: Optional[PartsFn] = None
    # True when this is the dual of the set parts_fn describes
    dualized: bool = False

    def __post_init__(self):
        if self.margin_fn is None and self.oracle is None:
            raise InvalidInput(f"subequation {self.name} needs a margin function or an oracle")
        if self.probe is None:
            probe = self.cone.probe_jet() if self.cone is not None else identity_jet(self.n)
            object.__setattr__(self, "probe", probe)
        if self.probe.n != self.n:
            raise InvalidInput("probe jet dimension mismatch")

    @property
    def sample_box(self) -> Domain:
        return self.X if self.X is not None else Domain.unit(self.n)

    def _check_points(self, x: np.ndarray) -> None:
        if self.X is not None and not np.all(self.X.contains(x)):
            raise OutOfDomain(f"point outside the domain of {self.name}")

    def _oracle_margin(self, x: np.ndarray, J: Jet) -> np.ndarray:
        t = self.tolerances.probe_step
        inside = np.asarray(self.oracle(x, J), dtype=bool)
        inner = np.asarray(self.oracle(x, J - self.probe * t), dtype=bool)
        outer = np.asarray(self.oracle(x, J + self.probe * t), dtype=bool)
        code = np.where(inside, np.where(inner, 1.0, 0.0), np.where(outer, 0.0, -1.0))
        return code

    def margin(self, x: Any, J: Jet) -> np.ndarray:
        """Signed defining value of J against F_x, vectorized over the jet batch."""
        if J.n != self.n:
            raise InvalidInput(f"jet dimension {J.n} does not match {self.name} (n={self.n})")
        x = broadcast_points(x, J)
        self._check_points(x)
        J = _broadcast_jet(J, x.shape[:-1])
        if self.margin_fn is not None:
            return np.asarray(self.margin_fn(x, J), dtype=float)
        return self._oracle_margin(x, J)

    @property
    def induced(self) -> bool:
        return self.parts_fn is not None

    def parts(self, x: Any, J: Jet) -> Tuple[np.ndarray, np.ndarray]:
        """(G margin, F value) of the underlying induced set at J, ignoring dualization."""
        if self.parts_fn is None:
            raise InvalidInput(f"{self.name} is not an induced set")
        x = broadcast_points(x, J)
        self._check_points(x)
        g, value = self.parts_fn(x, _broadcast_jet(J, x.shape[:-1]))
        return np.asarray(g, dtype=float), np.asarray(value, dtype=float)

    def shell(self, J: Jet) -> np.ndarray:
        return self.tolerances.interior_eps(J.norm())

    def classify(self, x: Any, J: Jet) -> np.ndarray:
        """Status codes: 1 interior, 0 boundary shell, -1 exterior."""
        m = self.margin(x, J)
        eps = self.shell(J)
        return np.where(m > eps, 1, np.where(m >= -eps, 0, -1))

    def contains(self, x: Any, J: Jet, slack: float = 0.0) -> np.ndarray:
        return self.margin(x, J) >= -slack

    def interior(self, x: Any, J: Jet) -> np.ndarray:
        return self.margin(x, J) > self.shell(J)

    def member(self, x: Any, J: Jet) -> MemberResult:
        if J.batch_shape:
            raise InvalidInput("member expects a single jet; use classify for batches")
        m = float(self.margin(x, J))
        return MemberResult(Membership(int(self.classify(x, J))), m)

    def dual(self) -> "Subequation":
        base = self

        def dual_margin(x, J):
            return -base.margin(x, -J)

        name = self.name[5:-1] if self.name.startswith("dual(") else f"dual({self.name})"
        return replace(self, name=name, margin_fn=dual_margin, oracle=None, dualized=not self.dualized)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "cone": self.cone.to_dict() if self.cone is not None else None,
            "probe_jet": self.probe.to_dict(),
            "constant_coefficients": self.constant_coefficients,
            "representation": "margin" if self.margin_fn is not None else "oracle",
        }


def member(F: Subequation, x: Any, J: Jet) -> MemberResult:
    return F.member(x, J)


def dual(F: Subequation) -> Subequation:
    return F.dual()


def cone_subequation(M: MonotonicityCone) -> Subequation:
    return Subequation(M.name, M.n, margin_fn=lambda x, J: cone_member(M, J), cone=M)


def dual_cone_subequation(M: MonotonicityCone) -> Subequation:
    """The dual cone M~ as a constant-coefficient subequation; M-monotone by biduality."""
    oracle = cone_dual(M)
    return Subequation(f"dual({M.name})", M.n, margin_fn=lambda x, J: oracle.margin(J), cone=M)


def oracle_subequation(name: str, n: int, oracle: OracleFn, cone: Optional[MonotonicityCone] = None,
                       probe: Optional[Jet] = None, **kwargs) -> Subequation:
    return Subequation(name, n, oracle=oracle, cone=cone, probe=probe, **kwargs)


def oracle_dual(F: Subequation) -> Subequation:
    """
    The Dirichlet dual built from membership queries only: K lies in the
    fiber iff -K is not interior to F_x. Interior status comes from
    F.interior, so for oracle sets it is found by probing.
    """
    def oracle(x, K):
        return ~F.interior(x, -K)

    return oracle_subequation(f"dual({F.name})", F.n, oracle, cone=F.cone, probe=F.probe,
                              constant_coefficients=F.constant_coefficients, X=F.X,
                              tolerances=F.tolerances)


class Reduction(Enum):
    PURE_SECOND_ORDER = "pure-second-order"
    GRADIENT_FREE = "gradient-free"
    GENERAL = "general"


@dataclass(frozen=True)
class OperatorSpec:
    """A proper elliptic operator F(x, J), with its coefficient fields."""
    name: str
    evaluator: Callable[[np.ndarray, Jet], np.ndarray]
    reduction: Reduction = Reduction.GENERAL
    coefficients: Dict[str, Any] = field(default_factory=dict)
    # omega(eta) = modulus * eta in the directionality regularity condition
    modulus: Optional[float] = None

    def __call__(self, x: Any, J: Jet) -> np.ndarray:
        x = broadcast_points(x, J)
        return np.asarray(self.evaluator(x, _broadcast_jet(J, x.shape[:-1])), dtype=float)


@dataclass(frozen=True)
class ProperEllipticPair:
    """An operator F together with its constraint G (None means G = J^2)."""
    name: str
    n: int
    operator: OperatorSpec
    cone: MonotonicityCone
    constraint: Optional[Subequation] = None
    probe: Optional[Jet] = None
    constant_coefficients: bool = True
    X: Optional[Domain] = None
    params: Dict[str, Any] = field(default_factory=dict)
    tolerances: Tolerances = field(default_factory=Tolerances)

    def __post_init__(self):
        if self.probe is None:
            object.__setattr__(self, "probe", self.cone.probe_jet())

    @property
    def case(self) -> str:
        return "unconstrained" if self.constraint is None else "constrained"

    @property
    def sample_box(self) -> Domain:
        return self.X if self.X is not None else Domain.unit(self.n)

    def constraint_margin(self, x: Any, J: Jet) -> np.ndarray:
        if self.constraint is None:
            return np.full(broadcast_points(x, J).shape[:-1], np.inf)
        return self.constraint.margin(x, J)

    def evaluate(self, x: Any, J: Jet) -> np.ndarray:
        return self.operator(x, J)

    def induce(self) -> Subequation:
        return induce(self)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "case": self.case,
            "reduction": self.operator.reduction.value,
            "cone": self.cone.to_dict(),
            "probe_jet": self.probe.to_dict(),
            "constant_coefficients": self.constant_coefficients,
            "params": self.params,
        }


def induce(pair: ProperEllipticPair) -> Subequation:
    """The candidate set {(x, J) in G : F(x, J) >= 0}; validity is left to the verifier."""
    operator = pair.operator
    constraint = pair.constraint

    if constraint is None:
        def margin_fn(x, J):
            return operator.evaluator(x, J)

        def parts_fn(x, J):
            return np.full(J.batch_shape, np.inf), operator.evaluator(x, J)
    else:
        def margin_fn(x, J):
            return np.minimum(constraint.margin(x, J), operator.evaluator(x, J))

        def parts_fn(x, J):
            return constraint.margin(x, J), operator.evaluator(x, J)

    return Subequation(
        name=pair.name,
        n=pair.n,
        margin_fn=margin_fn,
        cone=pair.cone,
        probe=pair.probe,
        constant_coefficients=pair.constant_coefficients,
        X=pair.X,
        tolerances=pair.tolerances,
        parts_fn=parts_fn,
    )


def boundary_probe(F: Subequation, x: Any, J_in: Jet, J_out: Jet, steps: Optional[int] = None) -> Jet:
    """Bisect the segment [J_in, J_out] onto the boundary of F_x; returns the inside endpoint."""
    steps = steps if steps is not None else F.tolerances.bisection_steps
    if not np.all(F.contains(x, J_in)):
        raise PreconditionError("boundary probe needs J_in inside the fiber")
    if np.any(F.contains(x, J_out)):
        raise PreconditionError("boundary probe needs J_out outside the fiber")
    batch = np.broadcast_shapes(J_in.batch_shape, J_out.batch_shape)
    lo = np.zeros(batch)
    hi = np.ones(batch)
    delta = J_out - J_in
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        inside = F.contains(x, J_in + delta * mid)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return J_in + delta * lo


def _flat_basis(n: int):
    """Orthonormal coordinates on R x R^n x S(n) (Frobenius on S(n))."""
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    return pairs, 1 + n + len(pairs)


def jet_to_flat(J: Jet) -> np.ndarray:
    n = J.n
    pairs, _ = _flat_basis(n)
    cols = [J.r[..., None], J.p]
    for i, j in pairs:
        w = 1.0 if i == j else np.sqrt(2.0)
        cols.append((w * J.A[..., i, j])[..., None])
    return np.concatenate(cols, axis=-1)


def flat_to_jet(z: np.ndarray, n: int) -> Jet:
    pairs, _ = _flat_basis(n)
    r = z[..., 0]
    p = z[..., 1:1 + n]
    A = np.zeros(z.shape[:-1] + (n, n))
    for k, (i, j) in enumerate(pairs):
        value = z[..., 1 + n + k]
        if i == j:
            A[..., i, i] = value
        else:
            A[..., i, j] = value / np.sqrt(2.0)
            A[..., j, i] = value / np.sqrt(2.0)
    return Jet(r, p, A)


class SignedDistance:
    """
    Signed Euclidean distance from J to the boundary of F_x.

    The distance is the least crossing time over rays from J: the ray along
    the probe jet, rays along finite-difference normals estimated at the
    crossings found so far, and the coordinate rays of jet space where no
    other ray crosses.
    """

    _DOUBLINGS = 48
    _REFINEMENTS = 2

    def __init__(self, F: Subequation):
        self.F = F
        self.n = F.n
        self.tol = F.tolerances

    def _margin(self, x, z):
        return self.F.margin(x, flat_to_jet(z, self.n))

    def _crossing(self, x, z, d, inside, scale):
        """Least t > 0 with membership at z + t d different from `inside` (inf if none)."""
        t_lo = np.zeros(z.shape[0])
        t_hi = np.full(z.shape[0], np.inf)
        t = 1e-3 * scale
        for _ in range(self._DOUBLINGS):
            open_ = ~np.isfinite(t_hi)
            if not np.any(open_):
                break
            flipped = (self._margin(x, z + t[:, None] * d) >= 0.0) != inside
            t_hi = np.where(open_ & flipped, t, t_hi)
            t_lo = np.where(open_ & ~flipped, t, t_lo)
            t = 2.0 * t
        found = np.isfinite(t_hi)
        if not np.any(found):
            return t_hi
        lo = t_lo.copy()
        hi = np.where(found, t_hi, 1.0)
        for _ in range(self.tol.bisection_steps):
            mid = 0.5 * (lo + hi)
            flipped = (self._margin(x, z + mid[:, None] * d) >= 0.0) != inside
            hi = np.where(flipped, mid, hi)
            lo = np.where(flipped, lo, mid)
        return np.where(found, hi, np.inf)

    def _normal(self, x, z):
        h = 1e-6 * (1.0 + np.linalg.norm(z, axis=-1))
        m = z.shape[-1]
        grad = np.empty_like(z)
        for k in range(m):
            e = np.zeros(m)
            e[k] = 1.0
            grad[:, k] = (self._margin(x, z + h[:, None] * e) - self._margin(x, z - h[:, None] * e)) / (2 * h)
        norm = np.linalg.norm(grad, axis=-1, keepdims=True)
        ok = np.isfinite(norm[:, 0]) & (norm[:, 0] > 0.0)
        return np.where(ok[:, None], grad / np.where(ok[:, None], norm, 1.0), 0.0), ok

    def __call__(self, x: Any, J: Jet) -> np.ndarray:
        x = broadcast_points(x, J)
        batch = x.shape[:-1]
        J = _broadcast_jet(J, batch)
        x = x.reshape(-1, self.n)
        z = jet_to_flat(J).reshape(-1, _flat_basis(self.n)[1])
        m = self._margin(x, z)
        inside = m >= 0.0
        scale = 1.0 + np.linalg.norm(z, axis=-1)
        sign = np.where(inside, 1.0, -1.0)

        probe = jet_to_flat(self.F.probe)
        probe = probe / np.linalg.norm(probe)
        # leave F_x against the probe direction, enter it along the probe
        d = np.where(inside[:, None], -probe, probe)
        best = self._crossing(x, z, d, inside, scale)
        hit = z + np.where(np.isfinite(best), best, 0.0)[:, None] * d

        if self.F.margin_fn is not None:
            for _ in range(self._REFINEMENTS):
                normal, ok = self._normal(x, hit)
                ok &= np.isfinite(best)
                if not np.any(ok):
                    break
                d_n = np.where(inside[:, None], -normal, normal)
                t = self._crossing(x, z, d_n, inside, scale)
                better = ok & (t < best)
                best = np.where(better, t, best)
                hit = np.where(better[:, None], z + np.where(better, t, 0.0)[:, None] * d_n, hit)

        missing = ~np.isfinite(best)
        if np.any(missing):
            m_dim = z.shape[-1]
            for k in range(m_dim):
                for s in (1.0, -1.0):
                    e = np.zeros((z.shape[0], m_dim))
                    e[:, k] = s
                    best = np.minimum(best, self._crossing(x, z, e, inside, scale))
        if np.any(~np.isfinite(best)):
            raise FiberDegenerate(f"fiber of {self.F.name} is empty or all of jet space near the sample")

        eps = self.F.shell(flat_to_jet(z, self.n))
        best = np.where(np.abs(m) <= eps, 0.0, best)
        out = sign * best
        return out.reshape(batch)


def signed_distance_operator(F: Subequation) -> OperatorSpec:
    distance = SignedDistance(F)
    return OperatorSpec(
        name=f"signed_distance({F.name})",
        evaluator=lambda x, J: distance(x, J),
        reduction=Reduction.GENERAL,
        coefficients={"of": F.name},
    )


BUILTIN_NAMES = (
    "laplace",
    "min_eigenvalue",
    "monge_ampere",
    "perturbed_monge_ampere",
    "transport",
    "det_minus_r",
    "signed_distance",
)


def _coefficient_points(n: int, X: Optional[Domain]) -> np.ndarray:
    box = X if X is not None else Domain.unit(n)
    h = max((b - a) for a, b in zip(box.lo, box.hi)) / 10.0
    return box.with_spacing(h).points().reshape(-1, n)


def _nonnegative(coefficient: Coefficient, label: str, x=None, p=None) -> None:
    values = coefficient(x, p)
    if np.any(values < 0.0):
        raise InvalidCoefficient(f"coefficient {label}={coefficient.description} is negative somewhere")


def _directions(spec: Any, n: int) -> DirectionalCone:
    if spec is None:
        return DirectionalCone.half_space(n)
    if isinstance(spec, DirectionalCone):
        return spec
    if spec == "full":
        return DirectionalCone.full_space(n)
    try:
        return DirectionalCone(n, spec)
    except InvalidInput:
        raise
    except (TypeError, ValueError):
        raise InvalidInput(f"D must be \"full\" or a list of normals, got {spec!r}")


def builtin(name: str, params: Optional[Dict[str, Any]] = None, n: int = 2,
            X: Optional[Domain] = None, tolerances: Optional[Tolerances] = None) -> ProperEllipticPair:
    """
    Build one of the bundled proper elliptic pairs.

    Args:
        name: one of BUILTIN_NAMES
        params: coefficient fields (numbers, expression strings or matrices)
        n: dimension
        X: optional box the coefficients are checked on
        tolerances: tolerances carried by the pair and its induced set

    Returns:
        ProperEllipticPair
    """
    if params is not None and not isinstance(params, dict):
        raise InvalidInput(f"params must be a mapping, got {params!r}")
    params = dict(params or {})
    tolerances = tolerances or Tolerances()
    common = dict(n=n, X=X, params=params, tolerances=tolerances)
    points = _coefficient_points(n, X)
    M_P = MonotonicityCone.positive(n)

    if name == "laplace":
        operator = OperatorSpec("laplace", lambda x, J: np.trace(J.A, axis1=-2, axis2=-1),
                                Reduction.PURE_SECOND_ORDER)
        return ProperEllipticPair("laplace", operator=operator, cone=M_P, **common)

    if name == "min_eigenvalue":
        operator = OperatorSpec("min_eigenvalue", lambda x, J: lambda_min(J.A),
                                Reduction.PURE_SECOND_ORDER)
        return ProperEllipticPair("min_eigenvalue", operator=operator, cone=M_P, **common)

    if name in ("monge_ampere", "perturbed_monge_ampere"):
        f = Coefficient.parse(params.get("f", 1.0), n)
        _nonnegative(f, "f", x=points)
        shift = MatrixCoefficient.parse(params.get("M") if name == "perturbed_monge_ampere" else None, n)
        shift(points)

        def constraint_margin(x, J):
            return lambda_min(J.A + shift(x))

        def evaluator(x, J):
            return sym_det(J.A + shift(x)) - f(x)

        constant = not (f.depends_on_x or shift.depends_on_x)
        constraint = Subequation(f"G({name})", n, margin_fn=constraint_margin, cone=M_P,
                                 constant_coefficients=not shift.depends_on_x, X=X,
                                 tolerances=tolerances)
        operator = OperatorSpec(name, evaluator, Reduction.PURE_SECOND_ORDER,
                                {"f": f.description, "M": shift.description})
        return ProperEllipticPair(name, operator=operator, cone=M_P, constraint=constraint,
                                  constant_coefficients=constant, **common)

    if name == "transport":
        g = Coefficient.parse(params.get("g", "max(p1, 0)"), n)
        f = Coefficient.parse(params.get("f", 1.0), n)
        D = _directions(params.get("D"), n)
        _nonnegative(f, "f", x=points)
        lattice = np.stack(np.meshgrid(*[np.linspace(-3.0, 3.0, 7)] * n, indexing="ij"), -1).reshape(-1, n)
        _nonnegative(g, "g", p=lattice)
        M = MonotonicityCone.directional(D)

        def constraint_margin(x, J):
            return np.minimum(D.margin(J.p), lambda_min(J.A))

        def evaluator(x, J):
            return g(p=J.p) * sym_det(J.A) - f(x)

        default_modulus = float(D.interior_direction[0]) if not D.full else None
        modulus = params.get("modulus", default_modulus)
        if modulus is not None and (not isinstance(modulus, (int, float)) or isinstance(modulus, bool)):
            raise InvalidInput(f"transport modulus must be a number, got {modulus!r}")
        constraint = Subequation("G(transport)", n, margin_fn=constraint_margin, cone=M,
                                 X=X, tolerances=tolerances)
        operator = OperatorSpec("transport", evaluator, Reduction.GENERAL,
                                {"g": g.description, "f": f.description, "D": D,
                                 "g_field": g, "f_field": f},
                                modulus=modulus)
        return ProperEllipticPair("transport", operator=operator, cone=M, constraint=constraint,
                                  constant_coefficients=not f.depends_on_x, **common)

    if name == "det_minus_r":
        variant = str(params.get("G", "G2")).upper()
        if variant not in ("G1", "G2"):
            raise InvalidInput(f"det_minus_r constraint must be G1 or G2, got {variant}")
        # F = det A - r decreases in r, so both variants are monotone for M(N,P) only
        M = MonotonicityCone.negative_positive(n)
        shape = M if variant == "G1" else M_P
        constraint = Subequation(f"det_minus_r.{variant}", n,
                                 margin_fn=lambda x, J: cone_member(shape, J), cone=M,
                                 X=X, tolerances=tolerances)
        operator = OperatorSpec("det_minus_r", lambda x, J: sym_det(J.A) - J.r,
                                Reduction.GRADIENT_FREE)
        return ProperEllipticPair(f"det_minus_r.{variant}", operator=operator, cone=M,
                                  constraint=constraint, **common)

    if name == "signed_distance":
        of = params.get("of", "laplace")
        inner = of if isinstance(of, Subequation) else induce(
            builtin(of, params.get("params"), n=n, X=X, tolerances=tolerances))
        operator = signed_distance_operator(inner)
        return ProperEllipticPair(f"signed_distance({inner.name})", operator=operator,
                                  cone=inner.cone or M_P, probe=inner.probe,
                                  constant_coefficients=inner.constant_coefficients, **common)

    raise InvalidInput(f"unknown builtin operator {name!r}; expected one of {', '.join(BUILTIN_NAMES)}")
