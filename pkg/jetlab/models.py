"""
Data models for jetlab: grids, grid functions and the report records.
"""

import hashlib
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInput

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class Domain:
    """A box [lo, hi] sampled by a uniform grid of spacing h."""
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]
    h: float

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not lo:
            raise InvalidInput(f"domain corners disagree in dimension: {lo} vs {hi}")
        if any(a >= b for a, b in zip(lo, hi)):
            raise InvalidInput(f"domain needs lo < hi componentwise, got {lo}, {hi}")
        if not self.h > 0:
            raise InvalidInput(f"grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def unit(cls, n: int, h: float = 0.125) -> "Domain":
        return cls((0.0,) * n, (1.0,) * n, h)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Domain":
        if not isinstance(data, dict) or not all(k in data for k in ("lo", "hi", "h")):
            raise InvalidInput(f"domain must be an object with lo, hi and h, got {data!r}")
        lo, hi, h = data["lo"], data["hi"], data["h"]
        if not isinstance(lo, (list, tuple)) or not isinstance(hi, (list, tuple)):
            raise InvalidInput("domain lo and hi must be lists of numbers")
        if not isinstance(h, (int, float)) or isinstance(h, bool):
            raise InvalidInput(f"domain h must be a number, got {h!r}")
        try:
            lo, hi = tuple(float(v) for v in lo), tuple(float(v) for v in hi)
        except (TypeError, ValueError):
            raise InvalidInput(f"domain corners must be numeric: {lo!r}, {hi!r}")
        return cls(lo, hi, float(h))

    def to_dict(self) -> Dict[str, Any]:
        return {"lo": list(self.lo), "hi": list(self.hi), "h": self.h}

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(int(np.floor((b - a) / self.h + 1e-9)) + 1 for a, b in zip(self.lo, self.hi))

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    def with_spacing(self, h: float) -> "Domain":
        return Domain(self.lo, self.hi, h)

    def axes(self) -> List[np.ndarray]:
        return [a + self.h * np.arange(m) for a, m in zip(self.lo, self.shape)]

    def points(self) -> np.ndarray:
        """Node coordinates with shape `shape + (n,)`."""
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(grids, axis=-1)

    def interior_mask(self, k: int = 1) -> np.ndarray:
        """Nodes whose (2k+1)^n stencil lies inside the grid."""
        mask = np.ones(self.shape, dtype=bool)
        for axis, m in enumerate(self.shape):
            index = np.arange(m)
            ok = (index >= k) & (index <= m - 1 - k)
            shape = [1] * self.n
            shape[axis] = m
            mask &= ok.reshape(shape)
        return mask

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask(1)

    def contains(self, x: np.ndarray, slack: float = 1e-12) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lo) - slack) & (x <= np.asarray(self.hi) + slack), axis=-1)


class GridFunction:
    """A scalar field on the nodes of a Domain; +-inf are allowed as USC/LSC sentinels."""

    def __init__(self, domain: Domain, values: Any):
        arr = np.array(values, dtype=float)
        if arr.shape != domain.shape:
            try:
                arr = arr.reshape(domain.shape)
            except ValueError:
                raise InvalidInput(
                    f"grid values shape {arr.shape} does not match domain {domain.shape}")
        if np.any(np.isnan(arr)):
            raise InvalidInput("grid function has NaN values")
        self.domain = domain
        self.values = arr

    @classmethod
    def from_function(cls, domain: Domain, fn: Callable[[np.ndarray], Any]) -> "GridFunction":
        """Sample fn(points) where points has shape `shape + (n,)`."""
        values = np.broadcast_to(np.asarray(fn(domain.points()), dtype=float), domain.shape)
        return cls(domain, values)

    @classmethod
    def from_expression(cls, domain: Domain, source: str) -> "GridFunction":
        from .expressions import Coefficient
        coefficient = Coefficient.parse(source, domain.n)
        return cls.from_function(domain, lambda x: coefficient(x))

    def copy(self) -> "GridFunction":
        return GridFunction(self.domain, self.values.copy())

    def _check_domain(self, other: "GridFunction") -> None:
        if other.domain != self.domain:
            raise InvalidInput("grid functions live on different domains")

    def __add__(self, other: Any) -> "GridFunction":
        if isinstance(other, GridFunction):
            self._check_domain(other)
            return GridFunction(self.domain, self.values + other.values)
        return GridFunction(self.domain, self.values + float(other))

    def __sub__(self, other: Any) -> "GridFunction":
        if isinstance(other, GridFunction):
            self._check_domain(other)
            return GridFunction(self.domain, self.values - other.values)
        return GridFunction(self.domain, self.values - float(other))

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.domain, -self.values)

    def __mul__(self, s: float) -> "GridFunction":
        return GridFunction(self.domain, self.values * float(s))

    __rmul__ = __mul__

    def interpolate(self, x: Any) -> np.ndarray:
        """Multilinear interpolation at points x of shape (..., n), clamped to the box."""
        x = np.asarray(x, dtype=float)
        lo = np.asarray(self.domain.lo)
        shape = np.asarray(self.domain.shape)
        t = (x - lo) / self.domain.h
        t = np.clip(t, 0.0, shape - 1)
        base = np.minimum(np.floor(t).astype(int), np.maximum(shape - 2, 0))
        frac = t - base
        result = np.zeros(x.shape[:-1])
        n = self.domain.n
        for corner in range(2 ** n):
            bits = [(corner >> axis) & 1 for axis in range(n)]
            weight = np.ones(x.shape[:-1])
            index = []
            for axis, bit in enumerate(bits):
                w = frac[..., axis] if bit else 1.0 - frac[..., axis]
                weight = weight * w
                index.append(np.minimum(base[..., axis] + bit, shape[axis] - 1))
            result = result + weight * self.values[tuple(index)]
        return result

    def to_csv_string(self) -> str:
        d = self.domain
        header = "\n".join([
            "dims," + ",".join(str(m) for m in d.shape),
            "lo," + ",".join(f"{v:.17g}" for v in d.lo),
            "hi," + ",".join(f"{v:.17g}" for v in d.hi),
            f"h,{d.h:.17g}",
        ])
        buffer = io.StringIO()
        rows = self.values.reshape(-1, d.shape[-1])
        np.savetxt(buffer, rows, fmt="%.17g", delimiter=",", header=header, comments="")
        return buffer.getvalue()

    @classmethod
    def from_csv_string(cls, text: str) -> "GridFunction":
        lines = text.splitlines()
        if len(lines) < 5:
            raise InvalidInput("grid CSV needs a 4-line header and values")
        fields = {}
        for line in lines[:4]:
            key, *rest = line.split(",")
            fields[key.strip()] = rest
        try:
            shape = tuple(int(v) for v in fields["dims"])
            lo = tuple(float(v) for v in fields["lo"])
            hi = tuple(float(v) for v in fields["hi"])
            h = float(fields["h"][0])
        except (KeyError, ValueError, IndexError) as e:
            raise InvalidInput(f"malformed grid CSV header: {e}")
        domain = Domain(lo, hi, h)
        if domain.shape != shape:
            raise InvalidInput(f"grid CSV dims {shape} disagree with lo/hi/h {domain.shape}")
        values = np.loadtxt(io.StringIO("\n".join(lines[4:])), delimiter=",", ndmin=2)
        return cls(domain, values.reshape(shape))

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_csv_string())

    @classmethod
    def from_csv(cls, path: str) -> "GridFunction":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_csv_string(f.read())


@dataclass
class BoundaryData:
    """Dirichlet data: values are read on boundary nodes only."""
    domain: Domain
    values: np.ndarray
    source: Optional[str] = None

    def __post_init__(self):
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), self.domain.shape).copy()
        if not np.all(np.isfinite(self.values[self.domain.boundary_mask()])):
            raise InvalidInput("boundary data must be finite")

    @classmethod
    def from_function(cls, domain: Domain, fn: Callable[[np.ndarray], Any]) -> "BoundaryData":
        return cls(domain, GridFunction.from_function(domain, fn).values)

    @classmethod
    def from_expression(cls, domain: Domain, source: str) -> "BoundaryData":
        return cls(domain, GridFunction.from_expression(domain, source).values, source=source)

    def initial_grid(self, fill: float = 0.0) -> np.ndarray:
        u = np.full(self.domain.shape, float(fill))
        mask = self.domain.boundary_mask()
        u[mask] = self.values[mask]
        return u


class CheckStatus(Enum):
    PASS = "PASS"
    FAIL = "FAIL"


@dataclass
class CheckReport:
    """Outcome of one seeded check."""
    name: str
    samples: int
    seed: int
    verdict: CheckStatus
    counterexamples: List[Dict[str, Any]] = field(default_factory=list)
    tolerances: Dict[str, Any] = field(default_factory=dict)
    details: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict is CheckStatus.PASS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "samples": self.samples,
            "seed": self.seed,
            "verdict": self.verdict.value,
            "counterexamples": self.counterexamples,
            "tolerances": self.tolerances,
            "details": self.details,
        }


class VerdictStatus(Enum):
    HOLDS = "HOLDS"
    FAILS = "FAILS"


NODE_SKIPPED = -1
NODE_FAILS = 0
NODE_HOLDS = 1


@dataclass
class Verdict:
    """Node-by-node outcome of a viscosity test on a grid function."""
    name: str
    overall: VerdictStatus
    node_status: np.ndarray
    violations: List[Dict[str, Any]] = field(default_factory=list)
    tau: float = 0.0

    @property
    def holds(self) -> bool:
        return self.overall is VerdictStatus.HOLDS

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "overall": self.overall.value,
            "node_status": self.node_status.tolist(),
            "violations": self.violations,
            "tau": self.tau,
        }


@dataclass
class SolveResult:
    """A Dirichlet solve: the grid function plus iteration metadata."""
    grid: GridFunction
    iterations: int
    residual: float
    scheme: str
    extra: Dict[str, Any] = field(default_factory=dict)

    def metadata(self) -> Dict[str, Any]:
        return {
            "scheme": self.scheme,
            "residual": self.residual,
            "iterations": self.iterations,
            "domain": self.grid.domain.to_dict(),
            **self.extra,
        }


@dataclass
class EquationBoundary:
    """Sampled jets of the zero level {J in G_x : F(x, J) = 0}."""
    points: List[List[float]] = field(default_factory=list)
    jets: List[Dict[str, Any]] = field(default_factory=list)
    values: List[float] = field(default_factory=list)

    def add(self, x: Sequence[float], jet_dict: Dict[str, Any], value: float) -> None:
        self.points.append([float(v) for v in x])
        self.jets.append(jet_dict)
        self.values.append(float(value))

    def __len__(self) -> int:
        return len(self.jets)

    @property
    def nonempty(self) -> bool:
        return len(self.jets) > 0


@dataclass
class RunManifest:
    """Inputs that determine a report; the timestamp is excluded from the fingerprint."""
    command: str
    problem_hash: str
    seed: int
    tolerances: Dict[str, Any]
    version: str
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "problem_hash": self.problem_hash,
            "seed": self.seed,
            "tolerances": self.tolerances,
            "version": self.version,
            "timestamp": self.timestamp,
        }

    def fingerprint(self) -> str:
        body = {k: v for k, v in self.to_dict().items() if k != "timestamp"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode("utf-8")).hexdigest()
