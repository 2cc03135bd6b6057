"""
Seeded randomized checks of the structural hypotheses on subequations and pairs.

Every check splits its sample budget into independent RNG streams
(``iter_streams``), runs the streams on a thread pool and merges the results
in stream order, so a report depends only on (seed, samples, tolerances).
A violation is recorded only when its margin is below -2 times the shell
width of the offending jet; counterexamples are kept smallest-jet-first.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cones import MonotonicityCone, cone_dual, sample_cone_member
from .config import AppConfig, Tolerances
from .errors import InvalidInput, Unsupported
from .jets import Jet, JetSampler, iter_streams
from .models import CheckReport, CheckStatus, Domain, EquationBoundary
from .subequations import ProperEllipticPair, Subequation, boundary_probe, induce, oracle_dual

logger = logging.getLogger(__name__)

MAX_COUNTEREXAMPLES = 10
_PUSH_DOUBLINGS = 40
_STABILITY_HALVINGS = 30
_T_STEPS = (1e-1, 1e-2, 1e-3)

Violation = Tuple[float, Dict[str, Any]]
Target = Union[Subequation, ProperEllipticPair]


@dataclass
class StreamResult:
    checked: int = 0
    violations: int = 0
    witnesses: List[Violation] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)


def _scale(tol: Tolerances) -> float:
    return tol.jet_radius / 3.0


def _run_streams(worker: Callable[[JetSampler, int], StreamResult], seed: int, samples: int,
                 config: AppConfig) -> List[StreamResult]:
    streams = list(iter_streams(seed, samples, config.stream_size))

    def run(item):
        stream, count = item
        result = worker(JetSampler(seed, stream), count)
        logger.debug(f"stream {stream}: {result.checked} checked, {result.violations} violations")
        return result

    if config.threads == 1 or len(streams) == 1:
        return [run(item) for item in streams]
    with ThreadPoolExecutor(max_workers=config.threads) as executor:
        return list(executor.map(run, streams))


def _witnesses(mask: np.ndarray, x: np.ndarray, J: Jet, margins: Dict[str, np.ndarray],
               extras: Optional[Dict[str, Jet]] = None) -> List[Violation]:
    out = []
    norms = J.norm()
    for i in np.flatnonzero(mask):
        entry = {
            "x": x[i].tolist(),
            "jet": J[i].to_dict(),
            "margins": {k: float(np.asarray(v)[i]) for k, v in margins.items()},
        }
        for name, jet in (extras or {}).items():
            entry[name] = jet[i].to_dict()
        out.append((float(norms[i]), entry))
    out.sort(key=lambda item: item[0])
    return out[:MAX_COUNTEREXAMPLES]


def _finish(name: str, results: Sequence[StreamResult], samples: int, seed: int,
            tol: Tolerances, details: Optional[Dict[str, Any]] = None) -> CheckReport:
    witnesses: List[Violation] = []
    checked = 0
    violations = 0
    for result in results:
        witnesses.extend(result.witnesses)
        checked += result.checked
        violations += result.violations
    witnesses.sort(key=lambda item: item[0])
    verdict = CheckStatus.FAIL if violations else CheckStatus.PASS
    report = CheckReport(
        name=name,
        samples=samples,
        seed=seed,
        verdict=verdict,
        counterexamples=[entry for _, entry in witnesses[:MAX_COUNTEREXAMPLES]],
        tolerances=tol.to_dict(),
        details={"checked": checked, "violations": violations, **(details or {})},
    )
    logger.info(f"{name}: {verdict.value} ({checked} checked, {violations} violations, seed {seed})")
    return report


def _resolve(config: Optional[AppConfig], samples: Optional[int], seed: Optional[int]):
    config = config or AppConfig()
    return config, (samples if samples is not None else config.samples), (
        seed if seed is not None else config.seed)


def push_in(F: Subequation, x: np.ndarray, J: Jet) -> Tuple[Jet, np.ndarray]:
    """Push jets along the probe jet (doubling steps) until they enter F_x; returns (jets, entered)."""
    t = np.zeros(len(J))
    for k in range(_PUSH_DOUBLINGS):
        pending = F.margin(x, J + F.probe * t) < 0.0
        if not np.any(pending):
            break
        t = np.where(pending, 0.25 * 2.0 ** k, t)
    J = J + F.probe * t
    ok = F.margin(x, J) >= 0.0
    if not np.all(ok):
        logger.warning(f"{F.name}: {int(np.sum(~ok))} of {len(ok)} samples never entered the fiber")
    return J, ok


def sample_members(F: Subequation, sampler: JetSampler, x: np.ndarray,
                   size: int) -> Tuple[np.ndarray, Jet]:
    """Mixture jets pushed into F_x; jets that never enter are dropped along with their points."""
    J, ok = push_in(F, x, sampler.mixture(F.n, size, _scale(F.tolerances)))
    return x[ok], J[ok]


def _points(F: Subequation, sampler: JetSampler, size: int) -> np.ndarray:
    box = F.sample_box
    return sampler.points(box.lo, box.hi, size)


def _as_set(target: Target) -> Subequation:
    return induce(target) if isinstance(target, ProperEllipticPair) else target


def check_P(F: Subequation, samples: Optional[int] = None, seed: Optional[int] = None,
            config: Optional[AppConfig] = None) -> CheckReport:
    """Positivity: (r, p, A + P) stays in F_x for P >= 0 (P = I probed first)."""
    config, samples, seed = _resolve(config, samples, seed)
    n = F.n

    def worker(sampler, count):
        x, J = sample_members(F, sampler, _points(F, sampler, count), count)
        result = StreamResult()
        for label, P in (("identity", np.broadcast_to(np.eye(n), (len(J), n, n))),
                         ("random", sampler.psd(n, len(J), _scale(F.tolerances)))):
            moved = J.shift(A=P)
            m = F.margin(x, moved)
            bad = m < -2.0 * F.shell(moved)
            result.checked += len(J)
            result.violations += int(np.sum(bad))
            result.witnesses += _witnesses(bad, x, J, {"margin": F.margin(x, J), "moved": m},
                                           {"moved_jet": moved})
        return result

    return _finish("check_P", _run_streams(worker, seed, samples, config), samples, seed,
                   F.tolerances, {"subject": F.name})


def check_N(F: Subequation, samples: Optional[int] = None, seed: Optional[int] = None,
            config: Optional[AppConfig] = None) -> CheckReport:
    """Negativity: (r + s, p, A) stays in F_x for s <= 0 (s = -1 probed first)."""
    config, samples, seed = _resolve(config, samples, seed)

    def worker(sampler, count):
        x, J = sample_members(F, sampler, _points(F, sampler, count), count)
        result = StreamResult()
        for s in (-np.ones(len(J)), -np.abs(sampler.normal(len(J), _scale(F.tolerances)))):
            moved = J.shift(r=s)
            m = F.margin(x, moved)
            bad = m < -2.0 * F.shell(moved)
            result.checked += len(J)
            result.violations += int(np.sum(bad))
            result.witnesses += _witnesses(bad, x, J, {"margin": F.margin(x, J), "moved": m},
                                           {"moved_jet": moved})
        return result

    return _finish("check_N", _run_streams(worker, seed, samples, config), samples, seed,
                   F.tolerances, {"subject": F.name})


def _outside_along_probe(F: Subequation, x: np.ndarray, J: Jet) -> Tuple[np.ndarray, Jet]:
    """Move members against the probe jet until they leave F_x; mask of successes."""
    t = np.zeros(len(J))
    for k in range(_PUSH_DOUBLINGS):
        inside = F.margin(x, J - F.probe * t) >= 0.0
        if not np.any(inside):
            break
        t = np.where(inside, 0.25 * 2.0 ** k, t)
    out = J - F.probe * t
    return F.margin(x, out) < 0.0, out


def check_T(F: Subequation, samples: Optional[int] = None, seed: Optional[int] = None,
            config: Optional[AppConfig] = None) -> CheckReport:
    """
    Topological stability through three surrogates:

    (i) F-jets are limits of interior jets along +t J0;
    (ii) interior verdicts survive a joint perturbation of (x, J);
    (iii) boundary jets have interior jets nearby in the +J0 direction.
    """
    if F.cone is None or not F.cone.has_interior:
        raise Unsupported(f"{F.name}: check_T needs a monotonicity cone with nonempty interior")
    config, samples, seed = _resolve(config, samples, seed)
    box = F.sample_box
    J0 = F.probe

    def worker(sampler, count):
        x, J = sample_members(F, sampler, _points(F, sampler, count), count)
        result = StreamResult(extra={"approach": 0, "stability": 0, "boundary": 0})
        size = len(J)
        base = F.margin(x, J)

        for t in _T_STEPS:
            moved = J + J0 * t
            m = F.margin(x, moved)
            bad = m < -2.0 * F.shell(moved)
            result.checked += size
            result.violations += int(np.sum(bad))
            result.extra["approach"] += int(np.sum(bad))
            result.witnesses += _witnesses(bad, x, J, {"margin": base, "approach": m},
                                           {"approach_jet": moved})

        interior = base > F.shell(J)
        noise = sampler.jets(F.n, size, 1.0)
        noise = noise * (1.0 / np.maximum(noise.euclidean_norm(), 1e-300))
        v = sampler.unit_vectors(F.n, size)
        rho = 0.5 * np.minimum(1.0, np.where(interior, base, 1.0))
        stable = ~interior
        for _ in range(_STABILITY_HALVINGS):
            if np.all(stable):
                break
            Jp = J + noise * rho
            xp = np.clip(x + rho[:, None] * v, box.lo, box.hi)
            stable |= F.margin(xp, Jp) > F.shell(Jp)
            rho = np.where(stable, rho, 0.5 * rho)
        bad = ~stable
        result.checked += int(np.sum(interior))
        result.violations += int(np.sum(bad))
        result.extra["stability"] += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, J, {"margin": base, "radius": rho})

        found, outside = _outside_along_probe(F, x, J)
        if np.any(found):
            xb = x[found]
            Jb = boundary_probe(F, xb, J[found], outside[found])
            step = 1e-3 * (1.0 + Jb.norm())
            moved = Jb + J0 * step
            m = F.margin(xb, moved)
            bad = m <= F.shell(moved)
            result.checked += len(Jb)
            result.violations += int(np.sum(bad))
            result.extra["boundary"] += int(np.sum(bad))
            result.witnesses += _witnesses(bad, xb, Jb, {"boundary": F.margin(xb, Jb), "pushed": m},
                                           {"pushed_jet": moved})
        return result

    results = _run_streams(worker, seed, samples, config)
    details = {"subject": F.name, "probe_jet": J0.to_dict()}
    for key in ("approach", "stability", "boundary"):
        details[key] = sum(r.extra[key] for r in results)
    return _finish("check_T", results, samples, seed, F.tolerances, details)


def check_monotonicity(F: Subequation, M: Optional[MonotonicityCone] = None,
                       samples: Optional[int] = None, seed: Optional[int] = None,
                       config: Optional[AppConfig] = None) -> CheckReport:
    """F_x + M in F_x (direct form) and F_x + dual(F)_x in dual(M) (jet addition form)."""
    M = M or F.cone
    if M is None:
        raise InvalidInput(f"{F.name} declares no monotonicity cone")
    if M.n != F.n:
        raise InvalidInput("cone and subequation dimensions differ")
    config, samples, seed = _resolve(config, samples, seed)
    G = F.dual()
    dual_cone = cone_dual(M)

    def worker(sampler, count):
        result = StreamResult(extra={"direct": 0, "dual": 0})
        x, J = sample_members(F, sampler, _points(F, sampler, count), count)
        Q = sample_cone_member(M, sampler, len(J), _scale(F.tolerances))
        moved = J + Q
        m = F.margin(x, moved)
        bad = m < -2.0 * F.shell(moved)
        result.checked += len(J)
        result.violations += int(np.sum(bad))
        result.extra["direct"] += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, J, {"margin": F.margin(x, J), "moved": m},
                                       {"cone_jet": Q})

        # jets of F_x and of dual(F)_x over the same base points
        y = _points(F, sampler, count)
        J1, ok1 = push_in(F, y, sampler.mixture(F.n, count, _scale(F.tolerances)))
        K, ok2 = push_in(G, y, sampler.mixture(F.n, count, _scale(F.tolerances)))
        ok = ok1 & ok2
        y, J1, K = y[ok], J1[ok], K[ok]
        total = J1 + K
        m = dual_cone.margin(total)
        bad = m < -2.0 * F.tolerances.interior_eps(total.norm())
        result.checked += len(total)
        result.violations += int(np.sum(bad))
        result.extra["dual"] += int(np.sum(bad))
        result.witnesses += _witnesses(bad, y, J1, {"dual_cone": m}, {"dual_jet": K})
        return result

    results = _run_streams(worker, seed, samples, config)
    details = {"subject": F.name, "cone": M.to_dict(),
               "direct_violations": sum(r.extra["direct"] for r in results),
               "dual_violations": sum(r.extra["dual"] for r in results)}
    return _finish("check_monotonicity", results, samples, seed, F.tolerances, details)


def check_compatibility(pair: ProperEllipticPair, samples: Optional[int] = None,
                        seed: Optional[int] = None, config: Optional[AppConfig] = None,
                        boundary: Optional[EquationBoundary] = None,
                        boundary_limit: int = 100) -> CheckReport:
    """
    Int F = {F > 0} on G, sampled from both sides.

    (a) jets of G_x with F > compat must be interior to the induced set;
    (b) boundary jets of the induced set must lie on the zero level of F.
    Boundary jets with |F| <= compat are collected into `boundary` when given.
    """
    config, samples, seed = _resolve(config, samples, seed)
    F = induce(pair)
    tol = pair.tolerances
    compat = tol.compat

    def worker(sampler, count):
        result = StreamResult(extra={"interior": 0, "boundary": 0, "gamma": []})
        x = _points(F, sampler, count)
        J = sampler.mixture(F.n, count, _scale(tol))
        g = pair.constraint_margin(x, J)
        value = pair.evaluate(x, J)
        m = F.margin(x, J)
        in_G = g >= 0.0
        bad = in_G & (value > compat) & (m <= F.shell(J))
        result.checked += int(np.sum(in_G))
        result.violations += int(np.sum(bad))
        result.extra["interior"] += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, J, {"F": value, "G": g, "induced": m})

        xm, Jm = sample_members(F, sampler, x, count)
        found, outside = _outside_along_probe(F, xm, Jm)
        if np.any(found):
            xb = xm[found]
            Jb = boundary_probe(F, xb, Jm[found], outside[found])
            vb = pair.evaluate(xb, Jb)
            gb = pair.constraint_margin(xb, Jb)
            bad = vb > compat
            result.checked += len(Jb)
            result.violations += int(np.sum(bad))
            result.extra["boundary"] += int(np.sum(bad))
            result.witnesses += _witnesses(bad, xb, Jb, {"F": vb, "G": gb, "induced": F.margin(xb, Jb)})
            on_level = np.flatnonzero(np.abs(vb) <= compat)
            for i in on_level[:boundary_limit]:
                result.extra["gamma"].append((xb[i], Jb[i].to_dict(), float(vb[i])))
        return result

    results = _run_streams(worker, seed, samples, config)
    gamma = [item for r in results for item in r.extra["gamma"]]
    if boundary is not None:
        for xi, jet_dict, value in gamma[:boundary_limit]:
            boundary.add(xi, jet_dict, value)
    details = {
        "subject": pair.name,
        "case": pair.case,
        "interior_violations": sum(r.extra["interior"] for r in results),
        "boundary_violations": sum(r.extra["boundary"] for r in results),
        "equation_boundary_samples": len(gamma),
        "equation_boundary_nonempty": len(gamma) > 0,
    }
    return _finish("check_compatibility", results, samples, seed, tol, details)


def check_agreement(F1: Subequation, F2: Subequation, samples: Optional[int] = None,
                    seed: Optional[int] = None, config: Optional[AppConfig] = None,
                    name: str = "check_agreement") -> CheckReport:
    """Membership of F1 and F2 agrees wherever F1's margin is off the shell."""
    if F1.n != F2.n:
        raise InvalidInput("cannot compare subequations of different dimension")
    config, samples, seed = _resolve(config, samples, seed)
    shell = F1.tolerances.shell

    def worker(sampler, count):
        result = StreamResult()
        x = _points(F1, sampler, count)
        J = sampler.mixture(F1.n, count, _scale(F1.tolerances))
        m1 = F1.margin(x, J)
        m2 = F2.margin(x, J)
        decided = np.abs(m1) > shell
        bad = decided & ((m1 >= 0.0) != (m2 >= 0.0))
        result.checked += int(np.sum(decided))
        result.violations += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, J, {"first": m1, "second": m2})
        return result

    return _finish(name, _run_streams(worker, seed, samples, config), samples, seed,
                   F1.tolerances, {"first": F1.name, "second": F2.name})


def _decided(F: Subequation, x: np.ndarray, J: Jet) -> Tuple[np.ndarray, np.ndarray]:
    """(membership in F, mask of jets off the shell whose membership survives small steps along F.probe)."""
    m = F.margin(x, J)
    inside = m >= 0.0
    decided = np.abs(m) > np.maximum(F.tolerances.shell, 2.0 * F.shell(J))
    t = F.tolerances.probe_step
    for s in (-2.0, -1.0, 1.0, 2.0):
        decided &= F.contains(x, J + F.probe * (s * t)) == inside
    return inside, decided


def check_biduality(F: Subequation, samples: Optional[int] = None, seed: Optional[int] = None,
                    config: Optional[AppConfig] = None) -> CheckReport:
    """
    Rebuild the dual and the double dual from membership queries alone and
    compare: F against its double dual at J, and F.dual() against the
    query-built dual. Only jets whose F-membership is decided count.
    """
    config, samples, seed = _resolve(config, samples, seed)
    single = oracle_dual(F)
    double = oracle_dual(single)
    closed_form = F.dual()

    def worker(sampler, count):
        result = StreamResult()
        x = _points(F, sampler, count)
        J = sampler.mixture(F.n, count, _scale(F.tolerances))
        inside, decided = _decided(F, x, J)
        twice = np.asarray(double.oracle(x, J), dtype=bool)
        bad = decided & (inside != twice)

        _, decided_neg = _decided(F, x, -J)
        dual_member = closed_form.contains(x, J)
        queried = np.asarray(single.oracle(x, J), dtype=bool)
        bad_dual = decided_neg & (dual_member != queried)

        result.checked += int(np.sum(decided) + np.sum(decided_neg))
        result.violations += int(np.sum(bad) + np.sum(bad_dual))
        result.witnesses += _witnesses(bad | bad_dual, x, J,
                                       {"F": F.margin(x, J), "double_dual": twice.astype(float),
                                        "dual": closed_form.margin(x, J), "queried_dual": queried.astype(float)})
        return result

    return _finish("check_biduality", _run_streams(worker, seed, samples, config), samples, seed,
                   F.tolerances, {"subject": F.name, "double_dual": double.name})


def check_proper_ellipticity(pair: ProperEllipticPair, samples: Optional[int] = None,
                             seed: Optional[int] = None,
                             config: Optional[AppConfig] = None) -> CheckReport:
    """F(x, r + s, p, A + P) >= F(x, r, p, A) on G-jets for s <= 0, P >= 0."""
    config, samples, seed = _resolve(config, samples, seed)
    tol = pair.tolerances
    G = pair.constraint

    def worker(sampler, count):
        result = StreamResult()
        box = pair.sample_box
        x = sampler.points(box.lo, box.hi, count)
        if G is not None:
            x, J = sample_members(G, sampler, x, count)
        else:
            J = sampler.mixture(pair.n, count, _scale(tol))
        s = -np.abs(sampler.normal(len(J), _scale(tol)))
        P = sampler.psd(pair.n, len(J), _scale(tol))
        before = pair.evaluate(x, J)
        moved = J.shift(r=s, A=P)
        after = pair.evaluate(x, moved)
        bad = after < before - 1e-12 * (1.0 + np.abs(before))
        result.checked += len(J)
        result.violations += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, J, {"before": before, "after": after},
                                       {"moved_jet": moved})
        return result

    return _finish("check_proper_ellipticity", _run_streams(worker, seed, samples, config),
                   samples, seed, tol, {"subject": pair.name})


def check_directionality(pair: ProperEllipticPair, samples: Optional[int] = None,
                         seed: Optional[int] = None,
                         config: Optional[AppConfig] = None) -> CheckReport:
    """g(p + q) >= g(p) on D, and g(p + eta q) >= g(p) + omega(eta) when a modulus is declared."""
    coefficients = pair.operator.coefficients
    if "g_field" not in coefficients or "D" not in coefficients:
        raise Unsupported(f"{pair.name} has no gradient factor and directional cone")
    config, samples, seed = _resolve(config, samples, seed)
    g = coefficients["g_field"]
    D = coefficients["D"]
    modulus = pair.operator.modulus
    tol = pair.tolerances

    def worker(sampler, count):
        result = StreamResult()
        p = D.project_in(sampler.normal((count, pair.n), _scale(tol)))
        q = D.project_in(sampler.normal((count, pair.n), _scale(tol)))
        gp = g(p=p)
        gq = g(p=p + q)
        bad = gq < gp - 1e-12 * (1.0 + np.abs(gp))
        zeros = Jet(np.zeros(count), p, np.zeros((count, pair.n, pair.n)))
        x = np.zeros((count, pair.n))
        result.checked += count
        result.violations += int(np.sum(bad))
        result.witnesses += _witnesses(bad, x, zeros, {"g(p)": gp, "g(p+q)": gq})
        if modulus is not None:
            eta = sampler.uniform(count)
            shifted = g(p=p + eta[:, None] * D.interior_direction)
            need = gp + modulus * eta
            bad = shifted < need - 1e-12 * (1.0 + np.abs(need))
            result.checked += count
            result.violations += int(np.sum(bad))
            result.witnesses += _witnesses(bad, x, zeros, {"eta": eta, "g(p+eta q)": shifted,
                                                           "required": need})
        return result

    return _finish("check_directionality", _run_streams(worker, seed, samples, config),
                   samples, seed, tol, {"subject": pair.name, "modulus": modulus})


@dataclass
class ModulusTable:
    """Empirical fiberegularity modulus: eta -> largest delta found."""
    name: str
    form: str
    etas: List[float]
    # running maximum of raw_deltas
    deltas: List[float]
    failures: List[List[Dict[str, Any]]]
    constant: bool = False
    # bisection result per eta before the running maximum
    raw_deltas: Optional[List[float]] = None

    def __post_init__(self):
        if self.raw_deltas is None:
            self.raw_deltas = list(self.deltas)

    @property
    def positive(self) -> bool:
        return all(d > 0.0 for d in self.raw_deltas)

    @property
    def nondecreasing(self) -> bool:
        """Raw deltas never drop as eta grows, up to bisection resolution."""
        finite = [d for d in self.raw_deltas if np.isfinite(d)]
        resolution = (max(finite) if finite else 0.0) * 2.0 ** -_DELTA_BISECTIONS
        return all(b >= a - resolution for a, b in zip(self.raw_deltas, self.raw_deltas[1:]))

    def to_report(self, samples: int, seed: int, tol: Tolerances) -> CheckReport:
        verdict = CheckStatus.PASS if self.positive and self.nondecreasing else CheckStatus.FAIL
        counterexamples = [c for row in self.failures for c in row][:MAX_COUNTEREXAMPLES]
        table = [{"eta": e, "delta": _finite_or_inf(d), "raw_delta": _finite_or_inf(raw)}
                 for e, d, raw in zip(self.etas, self.deltas, self.raw_deltas)]
        return CheckReport("fiber_modulus", samples, seed, verdict, counterexamples, tol.to_dict(),
                           {"subject": self.name, "form": self.form, "constant": self.constant,
                            "nondecreasing": self.nondecreasing, "table": table})


def _finite_or_inf(value: float) -> Any:
    return "inf" if np.isinf(value) else value


_DELTA_BISECTIONS = 30


def fiber_modulus(target: Target, domain: Domain, etas: Sequence[float] = (0.05, 0.1, 0.2),
                  seed: int = 1, samples: int = 1000, form: Optional[str] = None) -> ModulusTable:
    """
    For each eta, binary-search the largest delta such that for the sampled
    (x, y = x + s delta v, J in Theta(x)):

    set form:      J + eta J0 in Theta(y)
    operator form: F(y, J + eta J0) >= F(x, J) for J in G_x

    The inclusion at eta implies it at every larger eta, so raw deltas should
    not drop; the table keeps them and reports their running maximum as
    deltas. Constant-coefficient targets return +inf.
    """
    if any(e <= 0 for e in etas):
        raise InvalidInput("eta values must be positive")
    etas = sorted(float(e) for e in etas)
    if form is None:
        form = "operator" if isinstance(target, ProperEllipticPair) else "set"
    if form not in ("set", "operator"):
        raise InvalidInput(f"unknown fiber modulus form {form!r}")
    name = target.name
    if target.constant_coefficients:
        logger.info(f"fiber_modulus: {name} has constant coefficients; delta = inf")
        return ModulusTable(name, form, etas, [np.inf] * len(etas), [[] for _ in etas], constant=True)

    if form == "operator" and not isinstance(target, ProperEllipticPair):
        raise InvalidInput("the operator form needs a proper elliptic pair")
    F = _as_set(target)
    sampler = JetSampler(seed, 0)
    x = sampler.points(domain.lo, domain.hi, samples)
    if form == "set":
        x, J = sample_members(F, sampler, x, samples)
    elif target.constraint is not None:
        x, J = sample_members(target.constraint, sampler, x, samples)
    else:
        J = sampler.mixture(F.n, samples, _scale(F.tolerances))
    window = J.norm() <= F.tolerances.jet_radius
    x, J = x[window], J[window]
    v = sampler.unit_vectors(F.n, len(J))
    s = sampler.uniform(len(J))
    J0 = F.probe
    base = target.evaluate(x, J) if form == "operator" else None

    def failing(delta, eta):
        y = np.clip(x + (delta * s)[:, None] * v, domain.lo, domain.hi)
        moved = J + J0 * eta
        if form == "set":
            return F.margin(y, moved) < -F.shell(moved)
        return target.evaluate(y, moved) < base - 1e-12 * (1.0 + np.abs(base))

    deltas: List[float] = []
    raw_deltas: List[float] = []
    failures: List[List[Dict[str, Any]]] = []
    top = domain.diameter
    previous = 0.0
    for eta in etas:
        if not np.any(failing(top, eta)):
            delta = top
        else:
            lo, hi = 0.0, top
            for _ in range(_DELTA_BISECTIONS):
                mid = 0.5 * (lo + hi)
                if np.any(failing(mid, eta)):
                    hi = mid
                else:
                    lo = mid
            delta = lo
        raw_deltas.append(float(delta))
        delta = max(delta, previous)
        previous = delta
        probe = min(delta * (1.0 + 1e-3), top)
        bad = failing(probe, eta)
        y = np.clip(x + (probe * s)[:, None] * v, domain.lo, domain.hi)
        rows = [{"x": x[i].tolist(), "y": y[i].tolist(), "eta": eta, "jet": J[i].to_dict()}
                for i in np.flatnonzero(bad)[:MAX_COUNTEREXAMPLES]]
        deltas.append(float(delta))
        failures.append(rows)
        logger.debug(f"fiber_modulus {name}: eta={eta} delta={delta}")
    logger.info(f"fiber_modulus {name}: " + ", ".join(f"{e}->{d:.4g}" for e, d in zip(etas, deltas)))
    table = ModulusTable(name, form, etas, deltas, failures, raw_deltas=raw_deltas)
    if not table.nondecreasing:
        logger.warning(f"fiber_modulus {name}: raw deltas drop as eta grows: {raw_deltas}")
    return table


def run_battery(target: Target, samples: Optional[int] = None, seed: Optional[int] = None,
                config: Optional[AppConfig] = None) -> List[CheckReport]:
    """P, N, T, monotonicity and biduality on the set; compatibility and ellipticity on pairs."""
    F = _as_set(target)
    reports = [
        check_P(F, samples, seed, config),
        check_N(F, samples, seed, config),
    ]
    try:
        reports.append(check_T(F, samples, seed, config))
    except Unsupported as e:
        logger.warning(f"check_T skipped: {e}")
    if F.cone is not None:
        reports.append(check_monotonicity(F, F.cone, samples, seed, config))
    reports.append(check_biduality(F, samples, seed, config))
    if isinstance(target, ProperEllipticPair):
        reports.append(check_compatibility(target, samples, seed, config))
        reports.append(check_proper_ellipticity(target, samples, seed, config))
        if "g_field" in target.operator.coefficients:
            reports.append(check_directionality(target, samples, seed, config))
    return reports
