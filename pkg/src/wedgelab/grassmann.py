"""Subspace geometry: characteristic angles, plane families, projection sums.

Projection norms of a unit simple d-vector onto a d-plane are computed two
ways: :func:`blade_projection_norm` lifts the orthogonal projector to the
exterior power and takes the norm of the image, while
:func:`frame_projection_norms` works directly on frames, where the same
number is ``|det(P^T X)|``.  The frame route is what the samplers and the
ascent use; the blade route is the reference.
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from joblib import Parallel, delayed

from .errors import NotSimpleError, PreconditionError
from .exterior import (EXACT_TOL, RANK_TOL, Frame, Multivector, blade_of_frame,
                       is_simple, lift_linear, span_of_blade)

logger = logging.getLogger(__name__)


def orthonormalize(vectors, tol: float = RANK_TOL) -> Frame:
    """Gram-Schmidt (via QR) with a relative rank check.

    Diagonal entries of R are made positive, so ``(e1, e1 + e2)`` becomes
    ``(e1, e2)``.
    """
    A = np.array(vectors, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    A = A.T
    if A.shape[1] > A.shape[0]:
        raise PreconditionError(f"{A.shape[1]} vectors cannot be independent in R^{A.shape[0]}")
    scale = np.linalg.norm(A, axis=0).max(initial=0.0)
    if scale == 0.0:
        raise PreconditionError("rank deficiency: all vectors are zero")
    Q, R = np.linalg.qr(A)
    diag = np.diag(R)
    if np.any(np.abs(diag) <= tol * scale):
        raise PreconditionError(
            f"rank deficiency: |R_ii| = {np.abs(diag).min():.3g} below tolerance")
    Q = Q * np.sign(diag)
    return Frame(Q)


def _as_basis(P):
    return P.basis if isinstance(P, Frame) else np.asarray(P, dtype=float)


def principal_angles(P, Q) -> np.ndarray:
    """Characteristic angles between two d-planes, ascending, in [0, pi/2].

    The cosines are the singular values of the cross-Gram matrix P^T Q.
    Angles below pi/4 are taken from the sines instead (singular values of
    Q - P P^T Q), which keeps small angles accurate to machine precision.
    """
    A, B = _as_basis(P), _as_basis(Q)
    if A.shape != B.shape:
        raise PreconditionError(f"rank/dimension mismatch: {A.shape} vs {B.shape}")
    cos = np.clip(np.linalg.svd(A.T @ B, compute_uv=False), 0.0, 1.0)
    from_cos = np.arccos(cos)
    sin = np.clip(np.linalg.svd(B - A @ (A.T @ B), compute_uv=False), 0.0, 1.0)
    from_sin = np.arcsin(sin[::-1])
    angles = np.where(from_cos < np.pi / 4, from_sin, from_cos)
    return np.sort(angles)


def subspace_distance(P, Q) -> float:
    """Largest principal angle; zero iff the planes coincide."""
    return float(principal_angles(P, Q)[-1])


def canonical_pair(angles) -> tuple[Frame, Frame]:
    """P1 = span(e_1..e_d), P2 = span(cos a_i e_i + sin a_i e_{d+i}) in R^{2d}."""
    a = np.asarray(angles, dtype=float).reshape(-1)
    if np.any(a < 0) or np.any(a > np.pi / 2 + EXACT_TOL):
        raise PreconditionError("characteristic angles must lie in [0, pi/2]")
    d = a.shape[0]
    P1 = np.zeros((2 * d, d))
    P2 = np.zeros((2 * d, d))
    for i in range(d):
        P1[i, i] = 1.0
        P2[i, i] = np.cos(a[i])
        P2[d + i, i] = np.sin(a[i])
    return Frame(P1), Frame(P2)


@dataclass(frozen=True)
class PlaneFamily:
    """m d-planes in R^{md}."""

    planes: tuple = field()

    def __post_init__(self):
        planes = tuple(p if isinstance(p, Frame) else Frame(p) for p in self.planes)
        if not planes:
            raise PreconditionError("a plane family needs at least one plane")
        n, d = planes[0].n, planes[0].d
        if any(p.n != n or p.d != d for p in planes):
            raise PreconditionError("all planes must share ambient dimension and rank")
        if n != len(planes) * d:
            raise PreconditionError(
                f"{len(planes)} planes of dimension {d} must live in R^{len(planes) * d}, got R^{n}")
        object.__setattr__(self, "planes", planes)

    @property
    def m(self) -> int:
        return len(self.planes)

    @property
    def d(self) -> int:
        return self.planes[0].d

    @property
    def n(self) -> int:
        return self.planes[0].n

    @cached_property
    def pairwise_angles(self) -> dict:
        return {(i, j): principal_angles(self.planes[i], self.planes[j])
                for i in range(self.m) for j in range(i + 1, self.m)}

    def min_angle(self) -> float:
        if self.m < 2:
            return np.pi / 2
        return float(min(a[0] for a in self.pairwise_angles.values()))

    def is_orthogonal(self, tol: float = RANK_TOL) -> bool:
        return all(np.all(np.abs(a - np.pi / 2) < tol) for a in self.pairwise_angles.values())

    def stacked(self) -> np.ndarray:
        """(m, n, d) array of plane bases."""
        return np.stack([p.basis for p in self.planes])

    def to_json(self) -> dict:
        return {"m": self.m, "d": self.d,
                "planes": [[list(map(float, v)) for v in p.vectors] for p in self.planes]}

    @classmethod
    def from_json(cls, obj):
        try:
            m, d = int(obj["m"]), int(obj["d"])
            planes = [Frame.from_vectors(vs) for vs in obj["planes"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise PreconditionError(f"malformed plane family JSON: {exc}") from exc
        family = cls(tuple(planes))
        if family.m != m or family.d != d:
            raise PreconditionError(
                f"declared (m, d) = ({m}, {d}) disagrees with planes ({family.m}, {family.d})")
        return family

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise PreconditionError(f"cannot parse plane family file {path}: {exc}") from exc
        return cls.from_json(obj)

    def angle_rows(self):
        """Rows (i, j, a_1, ..., a_d) with 1-based plane labels."""
        return [(i + 1, j + 1, *map(float, a)) for (i, j), a in self.pairwise_angles.items()]


def orthogonal_family(m: int, d: int) -> PlaneFamily:
    if m < 1 or d < 1:
        raise PreconditionError("need m >= 1 and d >= 1")
    eye = np.eye(m * d)
    return PlaneFamily(tuple(Frame(eye[:, i * d:(i + 1) * d]) for i in range(m)))


def pair_family(angles) -> PlaneFamily:
    return PlaneFamily(canonical_pair(angles))


def rotated_family(m: int, d: int, theta: float, shared_dim: int = 0) -> PlaneFamily:
    """Planes R x Q^i with a shared k-plane R and mutual angles theta on the rest.

    Start from the orthogonal (d-k)-family with vectors f^i_j and tilt every
    f^i_j toward the common direction s_j = sum_l f^l_j:
    g^i_j = (f^i_j + t s_j) / |f^i_j + t s_j|.  Vectors with different j stay
    orthogonal and <g^i_j, g^l_j> = (2t + m t^2) / (1 + 2t + m t^2), so t is
    solved from that being cos(theta).  Every pair then has principal angles
    (0 x k, theta x (d-k)).  Reported angles are measured, not assumed.
    """
    k = int(shared_dim)
    if not 0 <= k < d:
        raise PreconditionError(f"shared dimension must satisfy 0 <= k < d, got k={k}, d={d}")
    if not 0.0 <= theta <= np.pi / 2:
        raise PreconditionError("theta must lie in [0, pi/2]")
    if m < 1:
        raise PreconditionError("need m >= 1")
    n, q = m * d, d - k
    c = np.cos(theta)
    if m == 1 or c <= 1e-15:
        t = 0.0
    elif c >= 1.0:
        t = np.inf
    else:
        a, b = (1 - c) * m, 2 * (1 - c)
        t = (-b + np.sqrt(b * b + 4 * a * c)) / (2 * a)
    planes = []
    for i in range(m):
        B = np.zeros((n, d))
        B[:k, :k] = np.eye(k)
        for j in range(q):
            col = np.zeros(n)
            if np.isinf(t):
                col[[k + l * q + j for l in range(m)]] = 1.0
            else:
                col[k + i * q + j] = 1.0
                col[[k + l * q + j for l in range(m)]] += t
            B[:, k + j] = col / np.linalg.norm(col)
        planes.append(Frame(B))
    family = PlaneFamily(tuple(planes))
    for (i, j), a in family.pairwise_angles.items():
        if k and a[k - 1] > 1e-8:
            raise PreconditionError(f"planes {i + 1},{j + 1} do not share a {k}-plane")
        if a[k] < theta - 1e-8:
            raise PreconditionError(
                f"construction check failed: angle {a[k]:.6g} < theta = {theta:.6g}")
    return family


def _require_unit_simple(xi: Multivector, tol: float = RANK_TOL):
    if abs(xi.norm() - 1.0) > 1e-8:
        raise PreconditionError(f"d-vector must be unit, |xi| = {xi.norm():.12g}")
    if not is_simple(xi, tol):
        raise NotSimpleError("d-vector is not simple")


def blade_projection_norm(P, xi: Multivector) -> float:
    """|p(xi)| for the orthogonal projection p onto P (lifted to d-vectors)."""
    _require_unit_simple(xi)
    basis = _as_basis(P)
    if basis.shape[0] != xi.n:
        raise PreconditionError(f"plane lives in R^{basis.shape[0]}, d-vector in R^{xi.n}")
    return lift_linear(basis @ basis.T, xi).norm()


def frame_projection_norms(P, X) -> np.ndarray:
    """|det(P^T X)| for one plane basis P (n, d) and frames X (..., n, d)."""
    return np.abs(np.linalg.det(np.swapaxes(_as_basis(P), -1, -2) @ X))


def projection_sum(family: PlaneFamily, xi: Multivector) -> float:
    if family.n != xi.n or family.d != xi.d:
        raise PreconditionError("family and d-vector dimensions disagree")
    return float(sum(blade_projection_norm(p, xi) for p in family.planes))


def frame_projection_sums(family: PlaneFamily, X) -> np.ndarray:
    """Projection sums for orthonormal frames X of shape (..., n, d)."""
    X = np.asarray(X, dtype=float)
    return sum(frame_projection_norms(p.basis, X) for p in family.planes)


def two_plane_excess_bound(angles, d: int | None = None) -> float:
    """Upper bound 1 + (d+1) cos(a_1) for two d-planes with smallest angle a_1."""
    a = np.atleast_1d(np.asarray(angles, dtype=float))
    if d is None:
        d = a.shape[0]
    return float(1.0 + (d + 1) * np.cos(a.min()))


def random_frames(rng, n: int, d: int, size: int) -> np.ndarray:
    """Haar-distributed orthonormal (n, d) frames, shape (size, n, d)."""
    G = rng.standard_normal((size, n, d))
    Q, R = np.linalg.qr(G)
    return Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[:, None, :]


def _retract(X):
    Q, R = np.linalg.qr(X)
    return Q * np.sign(np.diagonal(R, axis1=-2, axis2=-1))[..., None, :]


def _cofactor(M):
    """Cofactor matrix of a batch of small square matrices (singular allowed)."""
    d = M.shape[-1]
    if d == 1:
        return np.ones_like(M)
    C = np.empty_like(M)
    idx = np.arange(d)
    for i in range(d):
        for j in range(d):
            rows, cols = idx[idx != i], idx[idx != j]
            C[..., i, j] = (-1) ** (i + j) * np.linalg.det(M[..., rows[:, None], cols[None, :]])
    return C


def _objective_and_gradient(stack, X):
    """f(X) = sum_i |det(P_i^T X)| and its Euclidean gradient in X."""
    value = 0.0
    grad = np.zeros_like(X)
    for P in stack:
        M = P.T @ X
        det = np.linalg.det(M)
        value += abs(det)
        grad += np.sign(det) * P @ _cofactor(M)
    return value, grad


def _ascend(stack, X, iterations, step=1.0):
    """Riemannian gradient ascent with Armijo backtracking and QR retraction."""
    value, grad = _objective_and_gradient(stack, X)
    for _ in range(iterations):
        sym = X.T @ grad
        rgrad = grad - X @ (0.5 * (sym + sym.T))
        slope = float(np.sum(rgrad * rgrad))
        if slope < 1e-28:
            break
        while step > 1e-12:
            Y = _retract(X + step * rgrad)
            new_value, new_grad = _objective_and_gradient(stack, Y)
            if new_value >= value + 0.25 * step * slope:
                X, value, grad = Y, new_value, new_grad
                step = min(2.0 * step, 4.0)
                break
            step *= 0.5
        else:
            break
    return X, value


def _restart(stack, n, d, seed_seq, budget):
    rng = np.random.default_rng(seed_seq)
    X0 = random_frames(rng, n, d, 1)[0]
    return _ascend(stack, X0, budget)


def maximize_projection_sum(family: PlaneFamily, budget: int = 200, seed: int = 0,
                            restarts: int = 64, n_jobs: int = 1):
    """Multistart Riemannian ascent of sum_i |p^i(xi)| over unit simple xi.

    Each restart draws a Haar frame from its own child of
    ``SeedSequence(seed)`` and runs ``budget`` ascent iterations with
    backtracking; results are merged by max with ties going to the lowest
    restart index, so the answer does not depend on ``n_jobs``.

    Returns
    -------
    (blade, value, values)
        The best unit simple d-vector, its projection sum, and the per-restart
        maxima.
    """
    if budget < 1 or restarts < 1:
        raise PreconditionError("budget and restarts must be positive")
    stack = family.stacked()
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_restart)(stack, family.n, family.d, s, budget) for s in seeds)
    values = np.array([v for _, v in results])
    best = int(np.argmax(values))
    blade = blade_of_frame(Frame(_retract(results[best][0])))
    return blade, float(values[best]), values


@dataclass(frozen=True)
class ClassificationResult:
    verdict: str
    sum: float
    distance_to_nearest_plane: float
    plane: int | None = None
    weights: tuple | None = None

    @property
    def is_member(self) -> bool:
        return self.verdict.startswith("member")

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "sum": self.sum,
                "distance_to_nearest_plane": self.distance_to_nearest_plane,
                "plane": self.plane,
                "weights": None if self.weights is None else list(self.weights)}


def xi_classify(family: PlaneFamily, xi: Multivector, tol: float = 1e-6,
                angle_tol: float = 1e-2) -> ClassificationResult:
    """Decide whether xi attains sum_i |p_0^i(xi)| = 1 over an orthogonal family.

    For d >= 3 members are exactly the family's own planes; the verdict is
    ``member-plane(i)`` (1-based).  For d = 2 members have the holomorphic
    form (sum a_i u_i) ^ (sum a_i v_i); the check is that, for an orthonormal
    frame (x, y) of P(xi), the components q_i(x), q_i(y) have equal norms
    a_i and are orthogonal in every plane.  ``angle_tol`` bounds both the
    plane distance (d >= 3) and the structure defects (d = 2).
    """
    if not family.is_orthogonal():
        raise PreconditionError("xi_classify needs a mutually orthogonal family")
    total = projection_sum(family, xi)
    frame = span_of_blade(xi)
    dists = np.array([subspace_distance(frame, p) for p in family.planes])
    nearest = int(np.argmin(dists))
    if total < 1.0 - tol:
        return ClassificationResult("non-member", total, float(dists[nearest]))
    if family.d >= 3:
        if dists[nearest] >= angle_tol:
            warnings.warn(f"sum {total:.9g} within tol of 1 but no plane within {angle_tol}",
                          RuntimeWarning, stacklevel=2)
            return ClassificationResult("non-member", total, float(dists[nearest]))
        return ClassificationResult(f"member-plane({nearest + 1})", total,
                                    float(dists[nearest]), plane=nearest + 1)
    x, y = frame.basis[:, 0], frame.basis[:, 1]
    weights, defect = [], 0.0
    for p in family.planes:
        qx, qy = p.basis.T @ x, p.basis.T @ y
        nx, ny = np.linalg.norm(qx), np.linalg.norm(qy)
        defect = max(defect, abs(nx - ny), abs(qx @ qy))
        weights.append(0.5 * (nx + ny))
    if defect >= angle_tol:
        return ClassificationResult("non-member", total, float(dists[nearest]))
    return ClassificationResult("member-holomorphic", total, float(dists[nearest]),
                                weights=tuple(float(w) for w in weights))


def holomorphic_blade(weights, frames=None) -> Multivector:
    """(sum a_i u_i) ^ (sum a_i v_i) for orthonormal pairs (u_i, v_i) in P_0^i.

    ``frames`` holds one (u_i, v_i) pair per plane in the plane's own
    2-dimensional coordinates; the default is the standard pair.
    """
    a = np.asarray(weights, dtype=float).reshape(-1)
    m = a.shape[0]
    if np.any(a <= 0):
        raise PreconditionError("weights must be positive")
    if abs(a @ a - 1.0) > 1e-12:
        raise PreconditionError(f"weights must satisfy sum a_i^2 = 1, got {a @ a:.15g}")
    x = np.zeros(2 * m)
    y = np.zeros(2 * m)
    for i in range(m):
        if frames is None:
            u, v = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        else:
            u, v = (np.asarray(w, dtype=float) for w in frames[i])
            if (abs(u @ u - 1) > EXACT_TOL or abs(v @ v - 1) > EXACT_TOL
                    or abs(u @ v) > EXACT_TOL):
                raise PreconditionError(f"pair {i} is not orthonormal")
        x[2 * i:2 * i + 2] = a[i] * u
        y[2 * i:2 * i + 2] = a[i] * v
    return blade_of_frame(Frame(np.stack([x, y], axis=1)))
