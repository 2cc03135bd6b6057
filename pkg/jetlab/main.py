"""
Main application entry point for jetlab.

    python -m jetlab.main verify-axioms --problem problems/laplace.json --seed 1
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .cones import MonotonicityCone
from .config import AppConfig, load_config_from_env
from .dirichlet import check_comparison, check_zmp, solve_convex_envelope, solve_laplace, solve_monge_ampere
from .errors import InvalidInput, JetlabError, Unsupported
from .models import BoundaryData, CheckReport, CheckStatus, Domain, GridFunction, RunManifest, SolveResult
from .reports import (
    build_document, dumps_checks_csv, sha256_text, summary_lines, write_checks_csv, write_report,
    write_solution,
)
from .subequations import (
    BUILTIN_NAMES, ProperEllipticPair, builtin, cone_subequation, dual_cone_subequation, induce,
)
from .verifier import (
    check_agreement, check_biduality, check_compatibility, fiber_modulus, run_battery,
)
from .viscosity import check_correspondence

logger = logging.getLogger(__name__)

COMMANDS = (
    "verify-axioms",
    "dual-check",
    "check-compatibility",
    "fiber-modulus",
    "check-correspondence",
    "solve",
    "compare",
    "zmp",
)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

DEFAULT_ETAS = (0.05, 0.1, 0.2)
DEFAULT_MODULUS_SAMPLES = 1000


@dataclass
class Problem:
    """
    A parsed problem file.

    Required keys: operator, dimension, domain {lo, hi, h}. Optional keys:
    params, boundary, function, side, compare {u, w}, cone, eta, verify_samples.
    Grid-valued entries are expression strings or paths to grid CSV files.
    """
    operator: str
    dimension: int
    domain: Domain
    params: Dict[str, Any] = field(default_factory=dict)
    raw: Dict[str, Any] = field(default_factory=dict)
    text: str = ""
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: Dict[str, Any], text: str = "", base_dir: str = ".") -> "Problem":
        if not isinstance(data, dict):
            raise InvalidInput("problem file must hold a JSON object")
        for key in ("operator", "dimension", "domain"):
            if key not in data:
                raise InvalidInput(f"problem file is missing '{key}'")
        if data["operator"] not in BUILTIN_NAMES:
            raise InvalidInput(f"unknown operator {data['operator']!r}; expected one of {list(BUILTIN_NAMES)}")
        n = data["dimension"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise InvalidInput(f"dimension must be a positive integer, got {n!r}")
        domain = Domain.from_dict(data["domain"])
        if domain.n != n:
            raise InvalidInput(f"domain is {domain.n}-dimensional but dimension is {n}")
        params = data.get("params") or {}
        if not isinstance(params, dict):
            raise InvalidInput(f"params must be an object, got {params!r}")
        return cls(data["operator"], n, domain, dict(params), data,
                   text or json.dumps(data, sort_keys=True), base_dir)

    @classmethod
    def load(cls, path: str) -> "Problem":
        try:
            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
        except OSError as e:
            logger.error(f"Error reading problem file {path}: {str(e)}")
            raise
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"{path}: invalid JSON at line {e.lineno}, col {e.colno}: {e.msg}")
        return cls.from_dict(data, text, os.path.dirname(os.path.abspath(path)))

    @property
    def hash(self) -> str:
        return sha256_text(self.text)

    def with_spacing(self, h: Optional[float]) -> "Problem":
        if h is None:
            return self
        return replace(self, domain=self.domain.with_spacing(h))

    def require(self, key: str) -> Any:
        if key not in self.raw:
            raise InvalidInput(f"problem file needs '{key}' for this command")
        return self.raw[key]

    def grid(self, spec: Any) -> GridFunction:
        """A grid function on the problem domain from a number, an expression or a CSV path."""
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return GridFunction.from_function(self.domain, lambda x: float(spec))
        if not isinstance(spec, str):
            raise InvalidInput(f"cannot build a grid function from {spec!r}")
        if spec.endswith(".csv"):
            path = spec if os.path.isabs(spec) else os.path.join(self.base_dir, spec)
            grid = GridFunction.from_csv(path)
            if grid.domain != self.domain:
                raise InvalidInput(f"{spec} is sampled on {grid.domain.to_dict()}, "
                                   f"not on the problem domain {self.domain.to_dict()}")
            return grid
        return GridFunction.from_expression(self.domain, spec)

    def boundary(self) -> BoundaryData:
        return BoundaryData(self.domain, self.grid(self.raw.get("boundary", 0.0)).values,
                            source=str(self.raw.get("boundary", 0.0)))


@dataclass
class Outcome:
    """What one command produced: its check reports plus command-specific output."""
    command: str
    reports: List[CheckReport]
    extra: Dict[str, Any] = field(default_factory=dict)
    solution: Optional[SolveResult] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


class JetLab:
    """Library facade: one method per CLI command."""

    def __init__(self, config: Optional[AppConfig] = None):
        self.config = config or load_config_from_env()
        logger.debug(f"JetLab initialized (seed={self.config.seed}, samples={self.config.samples}, "
                     f"threads={self.config.threads})")

    def pair(self, problem: Problem) -> ProperEllipticPair:
        return builtin(problem.operator, problem.params, problem.dimension, X=problem.domain,
                       tolerances=self.config.tolerances)

    def verify_axioms(self, problem: Problem) -> Outcome:
        pair = self.pair(problem)
        reports = run_battery(pair, self.config.samples, self.config.seed, self.config)
        return Outcome("verify-axioms", reports, {"subject": pair.describe()})

    def dual_check(self, problem: Problem) -> Outcome:
        """Biduality of the induced set, and agreement of the cone's closed-form dual with the computed one."""
        F = induce(self.pair(problem))
        reports = [check_biduality(F, self.config.samples, self.config.seed, self.config)]
        if F.cone is not None:
            computed, closed_form = cone_subequation(F.cone).dual(), dual_cone_subequation(F.cone)
            reports.append(check_agreement(computed, closed_form, self.config.samples, self.config.seed,
                                           self.config, name="check_cone_dual"))
        return Outcome("dual-check", reports, {"subject": F.describe()})

    def check_compatibility(self, problem: Problem) -> Outcome:
        pair = self.pair(problem)
        report = check_compatibility(pair, self.config.samples, self.config.seed, self.config)
        return Outcome("check-compatibility", [report], {"subject": pair.describe()})

    def fiber_modulus(self, problem: Problem, samples: Optional[int] = None) -> Outcome:
        pair = self.pair(problem)
        etas = problem.raw.get("eta", DEFAULT_ETAS)
        if isinstance(etas, (int, float)):
            etas = [etas]
        if not isinstance(etas, (list, tuple)) or not all(
                isinstance(e, (int, float)) and not isinstance(e, bool) for e in etas):
            raise InvalidInput(f"eta must be a number or a list of numbers, got {etas!r}")
        samples = samples or DEFAULT_MODULUS_SAMPLES
        table = fiber_modulus(pair, problem.domain, etas, self.config.seed, samples,
                              form=problem.raw.get("form"))
        report = table.to_report(samples, self.config.seed, self.config.tolerances)
        return Outcome("fiber-modulus", [report], {"subject": pair.describe()})

    def check_correspondence(self, problem: Problem) -> Outcome:
        pair = self.pair(problem)
        u = problem.grid(problem.require("function"))
        verify_samples = problem.raw.get("verify_samples", 0)
        if not isinstance(verify_samples, int) or isinstance(verify_samples, bool) or verify_samples < 0:
            raise InvalidInput(f"verify_samples must be a non-negative integer, got {verify_samples!r}")
        report = check_correspondence(pair, u, problem.raw.get("side", "sub"),
                                      verify_samples=verify_samples,
                                      seed=self.config.seed, config=self.config)
        return Outcome("check-correspondence", [report], {"subject": pair.describe()})

    def solve(self, problem: Problem) -> Outcome:
        g = problem.boundary()
        solver = self.config.solver
        if problem.operator == "laplace":
            result = solve_laplace(problem.domain, g, solver)
        elif problem.operator == "min_eigenvalue":
            result = solve_convex_envelope(problem.domain, g, solver)
        elif problem.operator in ("monge_ampere", "perturbed_monge_ampere"):
            result = solve_monge_ampere(problem.domain, problem.params.get("f", 1.0), g,
                                        problem.params.get("M"), solver)
        else:
            raise Unsupported(f"no Dirichlet solver for operator {problem.operator!r}")
        report = CheckReport("solve", problem.domain.node_count, self.config.seed, CheckStatus.PASS,
                             tolerances=self.config.tolerances.to_dict(),
                             details=result.metadata())
        return Outcome("solve", [report], {"solver": self.config.solver.to_dict()}, solution=result)

    def compare(self, problem: Problem) -> Outcome:
        pair = self.pair(problem)
        spec = problem.require("compare")
        if not isinstance(spec, dict) or "u" not in spec or "w" not in spec:
            raise InvalidInput("'compare' must be an object with 'u' and 'w'")
        report = check_comparison(induce(pair), problem.grid(spec["u"]), problem.grid(spec["w"]),
                                  seed=self.config.seed)
        return Outcome("compare", [report], {"subject": pair.describe()})

    def zmp(self, problem: Problem) -> Outcome:
        M = MonotonicityCone.from_name(problem.require("cone"), problem.dimension)
        z = problem.grid(problem.require("function"))
        report = check_zmp(M, z, tolerances=self.config.tolerances, seed=self.config.seed)
        return Outcome("zmp", [report], {"cone": M.to_dict()})

    def run(self, command: str, problem: Problem, samples: Optional[int] = None) -> Outcome:
        if command == "verify-axioms":
            return self.verify_axioms(problem)
        if command == "dual-check":
            return self.dual_check(problem)
        if command == "check-compatibility":
            return self.check_compatibility(problem)
        if command == "fiber-modulus":
            return self.fiber_modulus(problem, samples)
        if command == "check-correspondence":
            return self.check_correspondence(problem)
        if command == "solve":
            return self.solve(problem)
        if command == "compare":
            return self.compare(problem)
        if command == "zmp":
            return self.zmp(problem)
        raise InvalidInput(f"unknown command {command!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jetlab",
        description="Subequation checks, viscosity verdicts and monotone Dirichlet solvers on 2-jets.",
    )
    parser.add_argument("command", choices=COMMANDS, help="what to run")
    parser.add_argument("--problem", required=True, metavar="PATH",
                        help="problem file (JSON: operator, params, dimension, domain)")
    parser.add_argument("--seed", type=int, help="RNG seed (default: JETLAB_SEED or 1)")
    parser.add_argument("--samples", type=int,
                        help="samples per check (default: JETLAB_SAMPLES or 10000; 1000 for fiber-modulus)")
    parser.add_argument("--h", type=float, help="grid spacing, overrides the problem domain")
    parser.add_argument("--tol", type=float,
                        help="constant c of the viscosity tolerance tau(h) = c*h (default: JETLAB_CONTACT_C or 4)")
    parser.add_argument("--out", metavar="PATH",
                        help="report path; for solve with --format csv, the grid CSV path")
    parser.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def _configure(args: argparse.Namespace) -> AppConfig:
    config = load_config_from_env()
    if args.seed is not None:
        config.seed = args.seed
    if args.samples is not None:
        if args.samples < 1:
            raise InvalidInput(f"--samples must be positive, got {args.samples}")
        config.samples = args.samples
    if args.tol is not None:
        if not args.tol > 0:
            raise InvalidInput(f"--tol must be positive, got {args.tol}")
        config.tolerances = replace(config.tolerances, contact_c=args.tol)
    return config


def _solution_path(args: argparse.Namespace) -> str:
    if args.out and args.format == "csv":
        return args.out
    if args.out:
        return os.path.splitext(args.out)[0] + ".csv"
    stem = os.path.splitext(os.path.basename(args.problem))[0]
    return f"{stem}.solution.csv"


def _emit(args: argparse.Namespace, outcome: Outcome, problem: Problem, config: AppConfig) -> None:
    manifest = RunManifest(args.command, problem.hash, config.seed, config.tolerances.to_dict(), __version__)
    overrides = {k: getattr(args, k) for k in ("seed", "samples", "h", "tol") if getattr(args, k) is not None}
    extra = dict(outcome.extra)
    if overrides:
        extra["overrides"] = overrides
    if outcome.solution is not None:
        path = _solution_path(args)
        extra["solution_csv"] = path
        extra["metadata"] = write_solution(path, outcome.solution, manifest)
    document = build_document(manifest, problem.raw, outcome.reports, extra)
    if args.out and not (outcome.solution is not None and args.format == "csv"):
        if args.format == "csv":
            write_checks_csv(args.out, outcome.reports)
        else:
            write_report(args.out, document)
    elif args.format == "csv" and outcome.solution is None:
        sys.stdout.write(dumps_checks_csv(outcome.reports))
    for line in summary_lines(args.command, outcome.reports):
        print(line)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for CLI usage; returns the exit code."""
    logging.basicConfig(
        level=os.getenv("JETLAB_LOG_LEVEL", "INFO").upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_PASS if e.code == 0 else EXIT_ERROR

    try:
        config = _configure(args)
        problem = Problem.load(args.problem).with_spacing(args.h)
        outcome = JetLab(config).run(args.command, problem, args.samples)
        _emit(args, outcome, problem, config)
    except (JetlabError, ValueError, OSError) as e:
        print(f"jetlab: error: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_PASS if outcome.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
