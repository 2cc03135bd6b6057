"""
Contact jets of grid functions and the viscosity verdicts built on them.

Upper contact jets at a node come from a finite family of quadratics
phi(y) = u(x) + <p, y - x> + 1/2 <A (y - x), y - x>: gradients from central
and one-sided differences (plus +-h lattice steps), Hessians from the second
difference Hessian H plus s * h * 2^m along each eigendirection of H and
along I. A candidate is kept when phi >= u - sigma(h) on the (2k+1)^n
stencil. Lower jets of w are the negated upper jets of -w.
"""

import logging
from dataclasses import dataclass
from itertools import product
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cones import MonotonicityCone
from .config import AppConfig, Tolerances
from .errors import InvalidInput, PreconditionError
from .jets import Jet, sym_eigen
from .models import (
    NODE_FAILS, NODE_HOLDS, NODE_SKIPPED, CheckReport, CheckStatus, GridFunction, Verdict,
    VerdictStatus,
)
from .subequations import ProperEllipticPair, Subequation, builtin, dual_cone_subequation, induce

logger = logging.getLogger(__name__)

DEFAULT_RADIUS = 2
MAX_WITNESSES = 10
_CHUNK = 64

JetTest = Callable[[np.ndarray, Jet], Tuple[np.ndarray, np.ndarray]]


@dataclass
class ContactJetSet:
    """The kept test jets at one node."""
    node: Tuple[int, ...]
    side: str
    x: np.ndarray
    jets: Jet

    def __len__(self) -> int:
        return len(self.jets)


def _offsets(n: int, k: int) -> np.ndarray:
    return np.array([o for o in product(range(-k, k + 1), repeat=n) if any(o)], dtype=int)


def _hessian_steps(h: float) -> np.ndarray:
    top = int(np.ceil(np.log2(16.0 / h ** 2)))
    return h * 2.0 ** np.arange(top + 1)


def _upper_candidates(values: np.ndarray, h: float, k: int, sigma: float, idx: np.ndarray):
    """
    Candidate quadratics at the nodes `idx` (N, n) of the value array.

    Returns:
        (r (N,), p (N, CP, n), A (N, CA, n, n), keep (N, CP, CA))
    """
    n = values.ndim
    N = idx.shape[0]
    eye = np.eye(n, dtype=int)

    def at(offset):
        return values[tuple((idx + offset).T)]

    def clean(a):
        return np.where(np.isfinite(a), a, 0.0)

    u0 = at(np.zeros(n, dtype=int))
    plus = np.stack([at(eye[i]) for i in range(n)], axis=1)
    minus = np.stack([at(-eye[i]) for i in range(n)], axis=1)

    central = clean((plus - minus) / (2.0 * h))
    grads = [central]
    forward = clean((plus - u0[:, None]) / h)
    backward = clean((u0[:, None] - minus) / h)
    for i in range(n):
        for one_sided in (forward, backward):
            g = central.copy()
            g[:, i] = one_sided[:, i]
            grads.append(g)
        for s in (1.0, -1.0):
            g = central.copy()
            g[:, i] += s * h
            grads.append(g)
    P = np.stack(grads, axis=1)

    H = np.zeros((N, n, n))
    for i in range(n):
        H[:, i, i] = clean((plus[:, i] - 2.0 * u0 + minus[:, i]) / h ** 2)
        for j in range(i + 1, n):
            mixed = (at(eye[i] + eye[j]) - at(eye[i] - eye[j])
                     - at(eye[j] - eye[i]) + at(-eye[i] - eye[j])) / (4.0 * h ** 2)
            H[:, i, j] = H[:, j, i] = clean(mixed)
    _, V = sym_eigen(H)

    hessians = [H]
    for t in _hessian_steps(h):
        for s in (1.0, -1.0):
            for i in range(n):
                v = V[:, :, i]
                hessians.append(H + s * t * v[:, :, None] * v[:, None, :])
            hessians.append(H + s * t * np.eye(n))
    A = np.stack(hessians, axis=1)

    offsets = _offsets(n, k)
    d = h * offsets.astype(float)
    u_off = np.stack([at(o) for o in offsets], axis=1)
    linear = np.einsum("ncj,sj->ncs", P, d)
    quadratic = 0.5 * np.einsum("si,naij,sj->nas", d, A, d)
    with np.errstate(invalid="ignore"):
        gap = (u0[:, None, None, None] + linear[:, :, None, :] + quadratic[:, None, :, :]
               - u_off[:, None, None, :])
    keep = np.all(gap >= -sigma, axis=-1)
    return u0, P, A, keep


def _eligible(u: GridFunction, values: np.ndarray, k: int) -> np.ndarray:
    return u.domain.interior_mask(k) & (values > -np.inf)


def _side_values(u: GridFunction, side: str) -> np.ndarray:
    if side == "upper":
        return u.values
    if side == "lower":
        return -u.values
    raise InvalidInput(f"side must be 'upper' or 'lower', got {side!r}")


def _jets_for_nodes(u: GridFunction, side: str, k: int, tol: Tolerances, idx: np.ndarray):
    """Kept jets for nodes idx, flattened: (node position in idx, Jet)."""
    values = _side_values(u, side)
    h = u.domain.h
    r, P, A, keep = _upper_candidates(values, h, k, tol.contact_slack(h, u.domain.n), idx)
    ni, pi, ai = np.nonzero(keep)
    J = Jet(r[ni], P[ni, pi], A[ni, ai])
    if side == "lower":
        J = -J
    return ni, J


def contact_jets(u: GridFunction, node: Sequence[int], side: str = "upper", k: int = DEFAULT_RADIUS,
                 tolerances: Optional[Tolerances] = None) -> ContactJetSet:
    """Test jets touching u from above (upper) or below (lower) at one grid node."""
    tol = tolerances or Tolerances()
    node = tuple(int(i) for i in node)
    values = _side_values(u, side)
    if len(node) != u.domain.n:
        raise InvalidInput("node index dimension mismatch")
    if not u.domain.interior_mask(k)[node]:
        raise InvalidInput(f"node {node} is too close to the boundary for stencil radius {k}")
    x = u.domain.points()[node]
    if values[node] == -np.inf:
        return ContactJetSet(node, side, x, Jet.zeros(u.domain.n, (0,)))
    _, J = _jets_for_nodes(u, side, k, tol, np.array([node]))
    return ContactJetSet(node, side, x, J)


def _scan(u: GridFunction, side: str, k: int, tol: Tolerances, test: JetTest, name: str) -> Verdict:
    """Apply `test` (returning pass flags and a ranking score) to every contact jet."""
    domain = u.domain
    values = _side_values(u, side)
    eligible = _eligible(u, values, k)
    status = np.full(domain.shape, NODE_SKIPPED, dtype=np.int8)
    status[eligible] = NODE_HOLDS
    idx = np.argwhere(eligible)
    points = domain.points()
    witnesses: List[Tuple[float, Dict[str, Any]]] = []

    for start in range(0, len(idx), _CHUNK):
        chunk = idx[start:start + _CHUNK]
        ni, J = _jets_for_nodes(u, side, k, tol, chunk)
        if len(ni) == 0:
            continue
        x = points[tuple(chunk[ni].T)]
        passed, score = test(x, J)
        failed_nodes = np.unique(ni[~passed])
        status[tuple(chunk[failed_nodes].T)] = NODE_FAILS
        failing = np.flatnonzero(~passed)
        for i in failing[np.argsort(score[failing], kind="stable")[:MAX_WITNESSES]]:
            witnesses.append((float(score[i]), {
                "node": chunk[ni[i]].tolist(),
                "x": x[i].tolist(),
                "jet": J[i].to_dict(),
                "score": float(score[i]),
            }))
        witnesses.sort(key=lambda item: item[0])
        witnesses = witnesses[:MAX_WITNESSES]

    overall = VerdictStatus.FAILS if np.any(status == NODE_FAILS) else VerdictStatus.HOLDS
    tau = tol.tau(domain.h)
    logger.debug(f"{name}: {overall.value} on {len(idx)} nodes (tau={tau:.3g})")
    return Verdict(name, overall, status, [w for _, w in witnesses], tau)


def is_subharmonic(F: Subequation, u: GridFunction, k: int = DEFAULT_RADIUS) -> Verdict:
    """
    Every upper contact jet at every interior node lies in F_x inflated by tau(h).

    For the dual of an induced set {g >= 0, F >= 0} a jet K passes unless
    -K is interior with room to spare: g(-K) > shell and F(-K) > tau. The
    constraint keeps the h-independent membership shell and only the operator
    value gets tau(h), matching admissible_supersolution.
    """
    if F.n != u.domain.n:
        raise InvalidInput("subequation and grid dimensions differ")
    tau = F.tolerances.tau(u.domain.h)

    def test(x, J):
        if F.induced and F.dualized:
            g, value = F.parts(x, -J)
            return (g <= F.shell(J)) | (value <= tau), -np.minimum(g, value)
        m = F.margin(x, J)
        return m >= -tau, m

    return _scan(u, "upper", k, F.tolerances, test, f"subharmonic({F.name})")


def is_superharmonic(F: Subequation, w: GridFunction, k: int = DEFAULT_RADIUS) -> Verdict:
    """w is F-superharmonic iff -w is dual(F)-subharmonic."""
    return is_subharmonic(F.dual(), -w, k)


def admissible_subsolution(pair: ProperEllipticPair, u: GridFunction,
                           k: int = DEFAULT_RADIUS) -> Verdict:
    """Upper jets satisfy J in G_x and F(x, J) >= -tau, with G inflated by tau as well."""
    tol = pair.tolerances
    tau = tol.tau(u.domain.h)

    def test(x, J):
        g = pair.constraint_margin(x, J)
        value = pair.evaluate(x, J)
        return (g >= -tau) & (value >= -tau), np.minimum(g, value)

    return _scan(u, "upper", k, tol, test, f"admissible_subsolution({pair.name})")


def admissible_supersolution(pair: ProperEllipticPair, u: GridFunction,
                             k: int = DEFAULT_RADIUS) -> Verdict:
    """
    Lower jets satisfy either [J in G_x and F(x, J) <= tau] or J not in G_x.

    G-membership uses the membership shell, not tau(h).
    """
    tol = pair.tolerances
    tau = tol.tau(u.domain.h)

    def test(x, J):
        g = pair.constraint_margin(x, J)
        value = pair.evaluate(x, J)
        outside_G = g < -tol.interior_eps(J.norm())
        return outside_G | (value <= tau), np.where(outside_G, np.inf, -value)

    return _scan(u, "lower", k, tol, test, f"admissible_supersolution({pair.name})")


def check_correspondence(pair: ProperEllipticPair, u: GridFunction, side: str = "sub",
                         k: int = DEFAULT_RADIUS, verify_samples: int = 0, seed: int = 1,
                         config: Optional[AppConfig] = None) -> CheckReport:
    """
    Node-by-node comparison of the induced-set verdict with the admissible one.

    With verify_samples > 0 the verifier battery is run on the pair first and
    its outcome recorded; otherwise the report carries UNVERIFIED-HYPOTHESES.
    """
    F = induce(pair)
    if side == "sub":
        potential = is_subharmonic(F, u, k)
        operator = admissible_subsolution(pair, u, k)
    elif side == "super":
        potential = is_superharmonic(F, u, k)
        operator = admissible_supersolution(pair, u, k)
    else:
        raise InvalidInput(f"side must be 'sub' or 'super', got {side!r}")

    hypotheses = "UNVERIFIED-HYPOTHESES"
    if verify_samples > 0:
        from .verifier import run_battery
        reports = run_battery(pair, verify_samples, seed, config)
        hypotheses = "VERIFIED" if all(r.passed for r in reports) else "FAILED-HYPOTHESES"

    compared = (potential.node_status != NODE_SKIPPED) & (operator.node_status != NODE_SKIPPED)
    disagree = compared & (potential.node_status != operator.node_status)
    points = u.domain.points()
    counterexamples = [
        {"node": list(map(int, node)), "x": points[tuple(node)].tolist(),
         "subequation": int(potential.node_status[tuple(node)]),
         "operator": int(operator.node_status[tuple(node)])}
        for node in np.argwhere(disagree)[:MAX_WITNESSES]
    ]
    verdict = CheckStatus.FAIL if np.any(disagree) else CheckStatus.PASS
    logger.info(f"check_correspondence {pair.name} ({side}): {verdict.value}, "
                f"{int(np.sum(disagree))} disagreeing nodes")
    return CheckReport(
        name="check_correspondence",
        samples=int(np.sum(compared)),
        seed=seed,
        verdict=verdict,
        counterexamples=counterexamples,
        tolerances=pair.tolerances.to_dict(),
        details={
            "subject": pair.name,
            "side": side,
            "hypotheses": hypotheses,
            "subequation_verdict": potential.overall.value,
            "operator_verdict": operator.overall.value,
            "disagreements": int(np.sum(disagree)),
            "tau": potential.tau,
        },
    )


def check_subharmonic_addition(F: Subequation, u: GridFunction, v: GridFunction,
                               M: Optional[MonotonicityCone] = None,
                               k: int = DEFAULT_RADIUS, seed: int = 0) -> CheckReport:
    """u F-subharmonic and v dual(F)-subharmonic imply u + v is dual(M)-subharmonic."""
    M = M or F.cone
    if M is None:
        raise InvalidInput(f"{F.name} declares no monotonicity cone")
    first = is_subharmonic(F, u, k)
    second = is_subharmonic(F.dual(), v, k)
    if not first.holds:
        raise PreconditionError(f"u is not {F.name}-subharmonic")
    if not second.holds:
        raise PreconditionError(f"v is not dual({F.name})-subharmonic")
    total = is_subharmonic(dual_cone_subequation(M), u + v, k)
    verdict = CheckStatus.PASS if total.holds else CheckStatus.FAIL
    logger.info(f"check_subharmonic_addition {F.name}/{M.name}: {verdict.value}")
    return CheckReport(
        name="check_subharmonic_addition",
        samples=int(np.sum(total.node_status != NODE_SKIPPED)),
        seed=seed,
        verdict=verdict,
        counterexamples=total.violations,
        tolerances=F.tolerances.to_dict(),
        details={"subject": F.name, "cone": M.name, "tau": total.tau},
    )


def _shell_offsets(n: int, radius_nodes: int) -> np.ndarray:
    reach = radius_nodes + 1
    grid = np.array(list(product(range(-reach, reach + 1), repeat=n)), dtype=float)
    lengths = np.linalg.norm(grid, axis=1)
    keep = (lengths >= radius_nodes - 0.5) & (lengths <= radius_nodes + 0.5)
    return grid[keep].astype(int)


def mean_value_check(u: GridFunction, radii: Sequence[int] = (2, 4),
                     tolerances: Optional[Tolerances] = None, seed: int = 0) -> CheckReport:
    """u(x) <= average of u over lattice spheres of radius rho = m h, m in radii."""
    tol = tolerances or Tolerances()
    if not np.all(np.isfinite(u.values)):
        raise InvalidInput("mean value check needs a finite grid function")
    domain = u.domain
    h = domain.h
    slack = tol.contact_c * h ** 2
    laplace_set = induce(builtin("laplace", n=domain.n, tolerances=tol))
    counterexamples: List[Dict[str, Any]] = []
    excess: Dict[str, float] = {}
    failed = 0
    checked = 0
    points = domain.points()
    for m in radii:
        reach = m + 1
        mask = domain.interior_mask(reach)
        idx = np.argwhere(mask)
        if len(idx) == 0:
            continue
        offsets = _shell_offsets(domain.n, m)
        shell = np.stack([u.values[tuple((idx + o).T)] for o in offsets], axis=1)
        average = shell.mean(axis=1)
        centre = u.values[tuple(idx.T)]
        over = centre - average
        bad = over > slack
        checked += len(idx)
        failed += int(np.sum(bad))
        excess[f"{m}h"] = float(np.max(over))
        for i in np.argsort(-over)[:MAX_WITNESSES]:
            if bad[i]:
                counterexamples.append({"node": idx[i].tolist(), "x": points[tuple(idx[i])].tolist(),
                                        "radius": m * h, "value": float(centre[i]),
                                        "average": float(average[i])})
    verdict = CheckStatus.FAIL if failed else CheckStatus.PASS
    subharmonic = is_subharmonic(laplace_set, u)
    logger.info(f"mean_value_check: {verdict.value} ({checked} node/radius pairs)")
    return CheckReport(
        name="mean_value_check",
        samples=checked,
        seed=seed,
        verdict=verdict,
        counterexamples=counterexamples[:MAX_WITNESSES],
        tolerances=tol.to_dict(),
        details={"slack": slack, "max_excess": excess, "subharmonic": subharmonic.overall.value},
    )

