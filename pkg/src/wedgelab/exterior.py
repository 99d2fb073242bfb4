"""d-vectors in R^n over the lexicographic basis {e_I}.

Multi-indices are 1-based, strictly increasing tuples, matching the usual
``e_{12} = e_1 ^ e_2`` notation.  Coefficients are stored densely; at the
sizes used here (n <= 12, d <= 4) the basis has at most 495 elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import NotSimpleError, PreconditionError

EXACT_TOL = 1e-10
RANK_TOL = 1e-8


@lru_cache(maxsize=None)
def basis_indices(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    """All multi-indices of length ``d`` in ``[1, n]`` in lexicographic order."""
    if not 0 <= d <= n:
        return ()
    return tuple(combinations(range(1, n + 1), d))


@lru_cache(maxsize=None)
def _index_lookup(n: int, d: int) -> dict:
    return {I: k for k, I in enumerate(basis_indices(n, d))}


def _inversions(seq) -> int:
    count = 0
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                count += 1
    return count


def permutation_sign(seq) -> int:
    """Sign of the permutation sorting ``seq`` (0 if an entry repeats)."""
    if len(set(seq)) != len(seq):
        return 0
    return -1 if _inversions(seq) % 2 else 1


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, q: int):
    """Index arrays (a, b, out, sign) over all disjoint basis pairs."""
    lookup = _index_lookup(n, p + q)
    ia, ib, io, sg = [], [], [], []
    for ka, I in enumerate(basis_indices(n, p)):
        for kb, J in enumerate(basis_indices(n, q)):
            if set(I) & set(J):
                continue
            ia.append(ka)
            ib.append(kb)
            io.append(lookup[tuple(sorted(I + J))])
            sg.append(permutation_sign(I + J))
    return (np.array(ia, dtype=np.intp), np.array(ib, dtype=np.intp),
            np.array(io, dtype=np.intp), np.array(sg, dtype=float))


@dataclass(frozen=True)
class Multivector:
    """Element of the d-th exterior power of R^n."""

    n: int
    d: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.d <= self.n:
            raise PreconditionError(f"invalid grade {self.d} for R^{self.n}")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != comb(self.n, self.d):
            raise PreconditionError(
                f"expected {comb(self.n, self.d)} coefficients, got {c.shape[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, n, d):
        return cls(n, d, np.zeros(comb(n, d)))

    @classmethod
    def basis(cls, n, *index):
        """``Multivector.basis(4, 1, 2)`` is e_{12} in R^4; unsorted input picks up the sign."""
        sign = permutation_sign(index)
        if any(not 1 <= i <= n for i in index):
            raise PreconditionError(f"index {index} out of range for R^{n}")
        out = np.zeros(comb(n, len(index)))
        if sign:
            out[_index_lookup(n, len(index))[tuple(sorted(index))]] = sign
        return cls(n, len(index), out)

    @classmethod
    def from_dict(cls, n, d, mapping):
        out = np.zeros(comb(n, d))
        lookup = _index_lookup(n, d)
        for index, value in mapping.items():
            index = tuple(index)
            if index not in lookup:
                raise PreconditionError(f"{index} is not a valid multi-index for ({n}, {d})")
            out[lookup[index]] = value
        return cls(n, d, out)

    def as_dict(self, tol=0.0):
        return {I: float(c) for I, c in zip(basis_indices(self.n, self.d), self.coeffs)
                if abs(c) > tol}

    def __getitem__(self, index):
        return self.coeffs[_index_lookup(self.n, self.d)[tuple(index)]]

    def __add__(self, other):
        _check_same(self, other)
        return Multivector(self.n, self.d, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return Multivector(self.n, self.d, self.coeffs - other.coeffs)

    def __neg__(self):
        return Multivector(self.n, self.d, -self.coeffs)

    def __mul__(self, scalar):
        return Multivector(self.n, self.d, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Multivector(self.n, self.d, self.coeffs / float(scalar))

    def __xor__(self, other):
        return wedge(self, other)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def allclose(self, other, atol=EXACT_TOL) -> bool:
        _check_same(self, other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=0.0, atol=atol))

    def to_json(self) -> dict:
        return {"n": self.n, "d": self.d,
                "coeffs": [{"index": list(I), "value": float(c)}
                           for I, c in zip(basis_indices(self.n, self.d), self.coeffs)
                           if c != 0.0]}

    @classmethod
    def from_json(cls, obj):
        try:
            n, d = int(obj["n"]), int(obj["d"])
            mapping = {tuple(int(i) for i in e["index"]): float(e["value"])
                       for e in obj["coeffs"]}
        except (KeyError, TypeError, ValueError) as exc:
            raise PreconditionError(f"malformed multivector JSON: {exc}") from exc
        return cls.from_dict(n, d, mapping)


def _check_same(a, b):
    if a.n != b.n or a.d != b.d:
        raise PreconditionError(
            f"grade/dimension mismatch: ({a.n}, {a.d}) vs ({b.n}, {b.d})")


def vector(v) -> Multivector:
    v = np.asarray(v, dtype=float).reshape(-1)
    return Multivector(v.shape[0], 1, v)


def wedge(a: Multivector, b: Multivector) -> Multivector:
    if a.n != b.n:
        raise PreconditionError(f"dimension mismatch: R^{a.n} vs R^{b.n}")
    if a.d + b.d > a.n:
        raise PreconditionError(f"grade {a.d + b.d} exceeds ambient dimension {a.n}")
    ia, ib, io, sg = _wedge_table(a.n, a.d, b.d)
    out = np.zeros(comb(a.n, a.d + b.d))
    np.add.at(out, io, sg * a.coeffs[ia] * b.coeffs[ib])
    return Multivector(a.n, a.d + b.d, out)


def inner(a: Multivector, b: Multivector) -> float:
    _check_same(a, b)
    return float(a.coeffs @ b.coeffs)


def minors(matrix, d) -> np.ndarray:
    """All d x d row-minors of an (..., n, d) array, lexicographic row order.

    For a frame whose columns are x_1..x_d this is the coefficient vector of
    x_1 ^ ... ^ x_d.
    """
    matrix = np.asarray(matrix, dtype=float)
    n = matrix.shape[-2]
    if d == 0:
        return np.ones(matrix.shape[:-2] + (1,))
    rows = np.array(basis_indices(n, d)) - 1
    return np.linalg.det(matrix[..., rows, :])


@dataclass(frozen=True)
class Frame:
    """Orthonormal d-frame in R^n, stored as the columns of an (n, d) array."""

    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[1] > b.shape[0]:
            raise PreconditionError(f"frame must be an (n, d) array with d <= n, got {b.shape}")
        gram = b.T @ b
        err = np.abs(gram - np.eye(b.shape[1])).max(initial=0.0)
        if err > EXACT_TOL:
            raise PreconditionError(f"frame is not orthonormal (max Gram error {err:.3g})")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @classmethod
    def from_vectors(cls, vectors):
        """Build from a sequence of d vectors (rows)."""
        return cls(np.array(vectors, dtype=float).T)

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    @property
    def d(self) -> int:
        return self.basis.shape[1]

    @property
    def vectors(self) -> list:
        return [self.basis[:, j].copy() for j in range(self.d)]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T


def blade_of_frame(frame: Frame) -> Multivector:
    """x_1 ^ ... ^ x_d for an orthonormal frame; a unit simple d-vector."""
    if not isinstance(frame, Frame):
        frame = Frame(frame)
    return Multivector(frame.n, frame.d, minors(frame.basis, frame.d))


def _wedge_map(xi: Multivector) -> np.ndarray:
    """Matrix of v -> v ^ xi from R^n to the (d+1)-th exterior power."""
    n, d = xi.n, xi.d
    if d == n:
        return np.zeros((0, n))
    ia, ib, io, sg = _wedge_table(n, 1, d)
    W = np.zeros((comb(n, d + 1), n))
    np.add.at(W, (io, ia), sg * xi.coeffs[ib])
    return W


def _kernel(xi: Multivector, tol: float):
    norm = xi.norm()
    if norm == 0.0:
        raise PreconditionError("zero multivector has no associated subspace")
    W = _wedge_map(xi / norm)
    if W.shape[0] == 0:
        return np.eye(xi.n)
    _, s, vt = np.linalg.svd(W)
    rank = int(np.sum(s > tol))
    return vt[rank:].T


def is_simple(xi: Multivector, tol: float = RANK_TOL) -> bool:
    """True iff xi factors as a wedge of d vectors (kernel-rank test)."""
    return _kernel(xi, tol).shape[1] >= xi.d


def span_of_blade(xi: Multivector, tol: float = RANK_TOL) -> Frame:
    """Orthonormal frame of P(xi) = {v : v ^ xi = 0}, oriented like xi."""
    K = _kernel(xi, tol)
    if K.shape[1] != xi.d:
        raise NotSimpleError(
            f"d-vector is not simple: kernel of v -> v^xi has dimension {K.shape[1]}, "
            f"expected {xi.d}")
    # re-orthonormalize the SVD kernel to exact frame tolerance
    Q, _ = np.linalg.qr(K)
    if xi.d and minors(Q, xi.d) @ xi.coeffs < 0:
        Q[:, 0] = -Q[:, 0]
    return Frame(Q)


def lift_matrix(f, d: int) -> np.ndarray:
    """Matrix of the d-th exterior power of the linear map ``f`` (n x n)."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    if f.shape != (n, n):
        raise PreconditionError(f"linear map must be square, got {f.shape}")
    if d == 0:
        return np.ones((1, 1))
    idx = np.array(basis_indices(n, d)) - 1
    sub = f[idx[:, None, :, None], idx[None, :, None, :]]
    return np.linalg.det(sub)


def lift_linear(f, xi: Multivector) -> Multivector:
    """Apply the grade-d lift of ``f``: x_1^...^x_d -> f(x_1)^...^f(x_d)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (xi.n, xi.n):
        raise PreconditionError(f"map of shape {f.shape} does not act on R^{xi.n}")
    return Multivector(xi.n, xi.d, lift_matrix(f, xi.d) @ xi.coeffs)
