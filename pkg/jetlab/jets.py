"""
2-jet arithmetic and the symmetric eigen kernel.

A jet J = (r, p, A) carries optional leading batch dimensions: ``r`` has shape
``batch``, ``p`` has ``batch + (n,)`` and ``A`` has ``batch + (n, n)``. A single
jet is the empty-batch case. Every defining function in the package is written
against batched jets so that sampling and grid checks stay vectorized.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInput

logger = logging.getLogger(__name__)

Scalar = Union[float, np.ndarray]

_MAX_SWEEPS = 50


def _as_symmetric(A: Any) -> np.ndarray:
    """Return A as a float array of symmetric matrices, rejecting bad input."""
    arr = np.array(A, dtype=float)
    if arr.ndim < 2 or arr.shape[-1] != arr.shape[-2]:
        raise InvalidInput(f"expected square matrices, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("matrix has non-finite entries")
    return 0.5 * (arr + np.swapaxes(arr, -1, -2))


def sym_eigen(A: Any, tol: float = 1e-15) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cyclic Jacobi eigen-decomposition of (a batch of) symmetric matrices.

    Args:
        A: array of shape (..., n, n); symmetrized before use
        tol: sweeps stop once the off-diagonal Frobenius mass drops below
             tol times the Frobenius norm of A

    Returns:
        (eigenvalues, frame): eigenvalues ascending with shape (..., n) and the
        orthonormal eigenvectors as the columns of frame, shape (..., n, n)
    """
    sym = _as_symmetric(A)
    n = sym.shape[-1]
    batch = sym.shape[:-2]
    a = sym.reshape((-1, n, n)).copy()
    v = np.broadcast_to(np.eye(n), a.shape).copy()
    scale = np.sqrt(np.sum(a * a, axis=(1, 2)))
    off_mask = ~np.eye(n, dtype=bool)

    for sweep in range(_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.where(off_mask, a * a, 0.0), axis=(1, 2)))
        if np.all(off <= tol * scale):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                sign = np.where(theta >= 0.0, 1.0, -1.0)
                t = sign / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, :, p].copy()
                col_q = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * col_p - s[:, None] * col_q
                a[:, :, q] = s[:, None] * col_p + c[:, None] * col_q
                row_p = a[:, p, :].copy()
                row_q = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * row_p - s[:, None] * row_q
                a[:, q, :] = s[:, None] * row_p + c[:, None] * row_q
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0

                vec_p = v[:, :, p].copy()
                vec_q = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vec_p - s[:, None] * vec_q
                v[:, :, q] = s[:, None] * vec_p + c[:, None] * vec_q
    else:
        logger.warning(f"Jacobi iteration stopped after {_MAX_SWEEPS} sweeps")

    w = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch + (n,)), v.reshape(batch + (n, n))


def sym_eigvals(A: Any) -> np.ndarray:
    """Ascending eigenvalues; the 1x1 and 2x2 cases use the one-rotation closed form."""
    sym = _as_symmetric(A)
    n = sym.shape[-1]
    if n == 1:
        return sym[..., 0].copy()
    if n == 2:
        a = sym[..., 0, 0]
        b = sym[..., 0, 1]
        d = sym[..., 1, 1]
        mean = 0.5 * (a + d)
        radius = np.hypot(0.5 * (a - d), b)
        return np.stack([mean - radius, mean + radius], axis=-1)
    return sym_eigen(sym)[0]


def lambda_min(A: Any) -> np.ndarray:
    return sym_eigvals(A)[..., 0]


def lambda_max(A: Any) -> np.ndarray:
    return sym_eigvals(A)[..., -1]


def sym_det(A: Any) -> np.ndarray:
    """Determinant of symmetric matrices (closed form up to n = 2)."""
    sym = np.asarray(A, dtype=float)
    n = sym.shape[-1]
    if n == 1:
        return sym[..., 0, 0]
    if n == 2:
        return sym[..., 0, 0] * sym[..., 1, 1] - sym[..., 0, 1] * sym[..., 1, 0]
    return np.linalg.det(sym)


@dataclass(frozen=True)
class Jet:
    """A (batch of) 2-jets (r, p, A) in R x R^n x S(n)."""
    r: np.ndarray
    p: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        p = np.array(self.p, dtype=float)
        A = np.array(self.A, dtype=float)
        if p.ndim < 1 or A.ndim < 2:
            raise InvalidInput("jet gradient must be a vector and Hessian a matrix")
        n = p.shape[-1]
        if A.shape[-2:] != (n, n):
            raise InvalidInput(f"Hessian shape {A.shape} does not match gradient dimension {n}")
        if r.shape != p.shape[:-1] or A.shape[:-2] != r.shape:
            raise InvalidInput(
                f"inconsistent jet batch shapes r{r.shape} p{p.shape} A{A.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p)) and np.all(np.isfinite(A))):
            raise InvalidInput("jet has non-finite components")
        A = 0.5 * (A + np.swapaxes(A, -1, -2))
        for name, value in (("r", r), ("p", p), ("A", A)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @classmethod
    def zeros(cls, n: int, batch: Tuple[int, ...] = ()) -> "Jet":
        return cls(np.zeros(batch), np.zeros(batch + (n,)), np.zeros(batch + (n, n)))

    @classmethod
    def stack(cls, jets: Sequence["Jet"]) -> "Jet":
        """Stack single jets (or concatenate batches along the first axis)."""
        if not jets:
            raise InvalidInput("cannot stack an empty sequence of jets")
        if jets[0].r.ndim == 0:
            return cls(np.stack([j.r for j in jets]), np.stack([j.p for j in jets]),
                       np.stack([j.A for j in jets]))
        return cls(np.concatenate([j.r for j in jets]), np.concatenate([j.p for j in jets]),
                   np.concatenate([j.A for j in jets]))

    @property
    def n(self) -> int:
        return self.p.shape[-1]

    @property
    def batch_shape(self) -> Tuple[int, ...]:
        return self.r.shape

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("a single jet has no length")
        return self.batch_shape[0]

    def __getitem__(self, index) -> "Jet":
        return Jet(self.r[index], self.p[index], self.A[index])

    def _check_same_dim(self, other: "Jet") -> None:
        if self.n != other.n:
            raise InvalidInput(f"jet dimension mismatch: {self.n} vs {other.n}")

    def __add__(self, other: "Jet") -> "Jet":
        self._check_same_dim(other)
        return Jet(self.r + other.r, self.p + other.p, self.A + other.A)

    def __sub__(self, other: "Jet") -> "Jet":
        self._check_same_dim(other)
        return Jet(self.r - other.r, self.p - other.p, self.A - other.A)

    def __neg__(self) -> "Jet":
        return Jet(-self.r, -self.p, -self.A)

    def __mul__(self, s: Scalar) -> "Jet":
        s = np.asarray(s, dtype=float)
        return Jet(self.r * s, self.p * s[..., None], self.A * s[..., None, None])

    __rmul__ = __mul__

    def shift(self, r: Scalar = 0.0, p: Any = 0.0, A: Any = 0.0) -> "Jet":
        """Add the given slot increments (broadcast over the batch)."""
        return Jet(self.r + r, self.p + p, self.A + A)

    def norm(self) -> np.ndarray:
        """The jet norm |r| + |p| + |A|_F."""
        return (np.abs(self.r) + np.linalg.norm(self.p, axis=-1)
                + np.sqrt(np.sum(self.A * self.A, axis=(-2, -1))))

    def euclidean_norm(self) -> np.ndarray:
        """Euclidean norm on R x R^n x S(n) with the Frobenius inner product on S(n)."""
        return np.sqrt(self.r * self.r + np.sum(self.p * self.p, axis=-1)
                       + np.sum(self.A * self.A, axis=(-2, -1)))

    def to_dict(self) -> Dict[str, Any]:
        return {"r": self.r.tolist(), "p": self.p.tolist(), "A": self.A.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Jet":
        return cls(data["r"], data["p"], data["A"])


def jet_combine(a: Scalar, J1: Jet, b: Scalar, J2: Jet) -> Jet:
    """Componentwise a*J1 + b*J2, always summed in this order."""
    J1._check_same_dim(J2)
    return (J1 * a) + (J2 * b)


def identity_jet(n: int, r: float = -1.0) -> Jet:
    """The jet (r, 0, I), the default probe direction."""
    return Jet(r, np.zeros(n), np.eye(n))


class JetSampler:
    """
    Deterministic jet/point sampler.

    Each sampler wraps a counter-based Philox generator keyed by
    (seed, stream), so independent streams can be drawn in any order or in
    parallel and still merge to the same result.
    """

    def __init__(self, seed: int, stream: int = 0):
        if seed < 0 or stream < 0:
            raise InvalidInput("seed and stream must be non-negative")
        self.seed = seed
        self.stream = stream
        key = np.array([seed, stream], dtype=np.uint64)
        self.rng = np.random.Generator(np.random.Philox(key=key))

    def jets(self, n: int, size: Union[int, Tuple[int, ...]] = (), scale: float = 1.0) -> Jet:
        """Gaussian jets with spread `scale` in every slot; A symmetrized."""
        if scale <= 0:
            raise InvalidInput(f"scale must be positive, got {scale}")
        batch = (size,) if isinstance(size, int) else tuple(size)
        r = self.rng.normal(0.0, scale, size=batch)
        p = self.rng.normal(0.0, scale, size=batch + (n,))
        B = self.rng.normal(0.0, scale, size=batch + (n, n))
        A = 0.5 * (B + np.swapaxes(B, -1, -2))
        return Jet(np.asarray(r), p, A)

    def lattice_jets(self, n: int, size: int, bound: int = 2) -> Jet:
        """Jets with integer entries in [-bound, bound]."""
        r = self.rng.integers(-bound, bound + 1, size=size).astype(float)
        p = self.rng.integers(-bound, bound + 1, size=(size, n)).astype(float)
        upper = np.triu(self.rng.integers(-bound, bound + 1, size=(size, n, n)).astype(float))
        A = upper + np.swapaxes(np.triu(upper, 1), -1, -2)
        return Jet(r, p, A)

    def vertex_jets(self, n: int, size: int, scale: float = 1.0) -> Jet:
        """Jets (r, 0, 0) sitting on the vertex of every cone in (p, A)."""
        r = np.round(self.rng.normal(0.0, scale, size=size))
        return Jet(r, np.zeros((size, n)), np.zeros((size, n, n)))

    def mixture(self, n: int, size: int, scale: float = 1.0) -> Jet:
        """80% Gaussian, 10% lattice, 10% vertex jets, shuffled deterministically."""
        n_lattice = size // 10
        n_vertex = size // 10
        n_gauss = size - n_lattice - n_vertex
        parts = [self.jets(n, n_gauss, scale)]
        if n_lattice:
            parts.append(self.lattice_jets(n, n_lattice))
        if n_vertex:
            parts.append(self.vertex_jets(n, n_vertex, scale))
        jets = Jet.stack(parts)
        order = self.rng.permutation(size)
        return jets[order]

    def psd(self, n: int, size: int, scale: float = 1.0) -> np.ndarray:
        """Random positive semidefinite matrices B B^T / n."""
        B = self.rng.normal(0.0, scale, size=(size, n, n))
        return np.einsum("bij,bkj->bik", B, B) / n

    def points(self, lo: Sequence[float], hi: Sequence[float], size: int) -> np.ndarray:
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return lo + (hi - lo) * self.rng.random(size=(size, lo.shape[0]))

    def unit_vectors(self, n: int, size: int) -> np.ndarray:
        g = self.rng.normal(size=(size, n))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        return g / norms

    def uniform(self, size: Union[int, Tuple[int, ...]]) -> np.ndarray:
        return self.rng.random(size=size)

    def normal(self, size: Union[int, Tuple[int, ...]], scale: float = 1.0) -> np.ndarray:
        return self.rng.normal(0.0, scale, size=size)


def sample_jet(seed: int, scale: float, n: int, stream: int = 0) -> Jet:
    """A single deterministic Gaussian jet for the given seed."""
    return JetSampler(seed, stream).jets(n, (), scale)


def iter_streams(seed: int, total: int, stream_size: int) -> Iterable[Tuple[int, int]]:
    """Yield (stream index, sample count) pairs covering `total` samples."""
    stream = 0
    remaining = total
    while remaining > 0:
        count = min(stream_size, remaining)
        yield stream, count
        remaining -= count
        stream += 1
