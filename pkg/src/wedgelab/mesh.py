"""Triangulated d-dimensional sets in R^n.

A :class:`SimplicialSet` carries its measure (sum of simplex volumes from
Gram determinants), one unit tangent blade per simplex, exact point-to-set
distances, and a cell-counting rasteriser for projected images.  Images
are measured without multiplicity: two sheets stacked over the same region
count once.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations, permutations

import numpy as np
from scipy.spatial import cKDTree

from .errors import HypothesisViolation, NumericalToleranceError, PreconditionError
from .exterior import Frame, Multivector, blade_of_frame

VOLUME_FLOOR = 1e-14


@dataclass(frozen=True)
class SimplicialSet:
    n: int
    d: int
    vertices: np.ndarray = field(repr=False)
    simplices: np.ndarray = field(repr=False)

    def __post_init__(self):
        V = np.array(self.vertices, dtype=float).reshape(-1, self.n)
        S = np.array(self.simplices, dtype=np.intp).reshape(-1, self.d + 1)
        if not 1 <= self.d <= self.n:
            raise PreconditionError(f"intrinsic dimension {self.d} invalid in R^{self.n}")
        if S.size and (S.min() < 0 or S.max() >= V.shape[0]):
            raise PreconditionError("simplex vertex index out of range")
        V.setflags(write=False)
        S.setflags(write=False)
        object.__setattr__(self, "vertices", V)
        object.__setattr__(self, "simplices", S)
        bad = np.flatnonzero(self.volumes <= VOLUME_FLOOR)
        if bad.size:
            raise PreconditionError(
                f"degenerate simplex {int(bad[0])} (volume {self.volumes[bad[0]]:.3g})")

    @property
    def size(self) -> int:
        return self.simplices.shape[0]

    @cached_property
    def edges(self) -> np.ndarray:
        """(S, n, d) edge vectors from each simplex's first vertex."""
        V, S = self.vertices, self.simplices
        return np.swapaxes(V[S[:, 1:]] - V[S[:, :1]], 1, 2)

    @cached_property
    def volumes(self) -> np.ndarray:
        E = self.edges
        gram = np.swapaxes(E, 1, 2) @ E
        det = np.clip(np.linalg.det(gram), 0.0, None)
        return np.sqrt(det) / math.factorial(self.d)

    @cached_property
    def frames(self) -> np.ndarray:
        """(S, n, d) orthonormal bases of the simplices' tangent planes."""
        Q, R = np.linalg.qr(self.edges)
        return Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :]

    def diameters(self) -> np.ndarray:
        P = self.vertices[self.simplices]
        diffs = P[:, :, None, :] - P[:, None, :, :]
        return np.linalg.norm(diffs, axis=-1).max(axis=(1, 2))

    @cached_property
    def unique_edges(self) -> np.ndarray:
        pairs = np.concatenate([self.simplices[:, [a, b]]
                                for a, b in combinations(range(self.d + 1), 2)])
        return np.unique(np.sort(pairs, axis=1), axis=0)

    def sample_points(self) -> np.ndarray:
        """Vertices plus edge midpoints."""
        e = self.unique_edges
        mids = 0.5 * (self.vertices[e[:, 0]] + self.vertices[e[:, 1]])
        return np.concatenate([self.vertices, mids])

    @cached_property
    def _centroid_tree(self):
        P = self.vertices[self.simplices]
        centroids = P.mean(axis=1)
        radii = np.linalg.norm(P - centroids[:, None, :], axis=-1).max(axis=1)
        return cKDTree(centroids), centroids, radii, cKDTree(self.vertices)

    def distance(self, points) -> np.ndarray:
        """Exact Euclidean distance from each point to the union of simplices."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[0] == 0:
            return np.zeros(0)
        tree, centroids, radii, vtree = self._centroid_tree
        upper, _ = vtree.query(pts)
        cands = tree.query_ball_point(pts, upper + radii.max() + 1e-12)
        counts = np.fromiter((len(c) for c in cands), dtype=np.intp, count=len(cands))
        qi = np.repeat(np.arange(pts.shape[0]), counts)
        si = np.concatenate([np.asarray(c, dtype=np.intp) for c in cands])
        # a simplex lies inside the ball around its centroid; skip those that cannot beat upper
        near = (np.linalg.norm(pts[qi] - centroids[si], axis=1) - radii[si]
                <= upper[qi] + 1e-12)
        qi, si = qi[near], si[near]
        dist = point_simplex_distance(pts[qi], self.vertices[self.simplices[si]])
        out = upper.copy()
        np.minimum.at(out, qi, dist)
        return out

    def transformed(self, func) -> "SimplicialSet":
        return SimplicialSet(self.n, self.d, func(self.vertices), self.simplices)

    def translated(self, offset) -> "SimplicialSet":
        return SimplicialSet(self.n, self.d, self.vertices + np.asarray(offset, float),
                             self.simplices)

    def to_text(self) -> str:
        lines = [f"{self.n} {self.d} {self.vertices.shape[0]} {self.size}"]
        lines += [" ".join(repr(float(x)) for x in v) for v in self.vertices]
        lines += [" ".join(str(int(i)) for i in s) for s in self.simplices]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SimplicialSet":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        try:
            n, d, nv, ns = (int(x) for x in rows[0])
            if len(rows) != 1 + nv + ns:
                raise ValueError(f"expected {1 + nv + ns} lines, found {len(rows)}")
            V = np.array([[float(x) for x in r] for r in rows[1:1 + nv]], dtype=float)
            S = np.array([[int(x) for x in r] for r in rows[1 + nv:]], dtype=np.intp)
            if V.shape != (nv, n) or S.shape != (ns, d + 1):
                raise ValueError("row lengths disagree with the header")
        except (ValueError, IndexError) as exc:
            raise PreconditionError(f"cannot parse mesh: {exc}") from exc
        return cls(n, d, V, S)

    @classmethod
    def load(cls, path) -> "SimplicialSet":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())


def union(*sets: SimplicialSet) -> SimplicialSet:
    n, d = sets[0].n, sets[0].d
    if any(s.n != n or s.d != d for s in sets):
        raise PreconditionError("cannot join sets of different dimensions")
    verts, simps, offset = [], [], 0
    for s in sets:
        verts.append(s.vertices)
        simps.append(s.simplices + offset)
        offset += s.vertices.shape[0]
    return SimplicialSet(n, d, np.concatenate(verts), np.concatenate(simps))


def point_simplex_distance(points, simplices) -> np.ndarray:
    """Distance from points[k] to the simplex with vertex rows simplices[k].

    The nearest point lies in the relative interior of some face, where it is
    the orthogonal projection onto that face's affine hull; so the distance
    is the minimum over faces whose projection has nonnegative barycentric
    coordinates.
    """
    y = np.asarray(points, dtype=float)
    T = np.asarray(simplices, dtype=float)
    k = T.shape[1]
    best = np.full(y.shape[0], np.inf)
    for size in range(1, k + 1):
        for face in combinations(range(k), size):
            base = T[:, face[0], :]
            if size == 1:
                best = np.minimum(best, np.linalg.norm(y - base, axis=1))
                continue
            E = T[:, face[1:], :] - base[:, None, :]          # (P, size-1, n)
            G = E @ np.swapaxes(E, 1, 2)
            rhs = np.einsum("pkn,pn->pk", E, y - base)
            lam = np.linalg.solve(G, rhs[..., None])[..., 0]
            ok = np.all(lam >= -1e-12, axis=1) & (lam.sum(axis=1) <= 1 + 1e-12)
            proj = base + np.einsum("pk,pkn->pn", lam, E)
            dist = np.where(ok, np.linalg.norm(y - proj, axis=1), np.inf)
            best = np.minimum(best, dist)
    return best


def set_measure(S: SimplicialSet) -> float:
    return float(np.sum(S.volumes))


def tangent_blade(S: SimplicialSet, index: int) -> Multivector:
    return blade_of_frame(Frame(S.frames[index]))


def projection_factors(S: SimplicialSet, P) -> np.ndarray:
    """|p(T)| per simplex: the Jacobian of the projection restricted to the simplex."""
    basis = P.basis if isinstance(P, Frame) else np.asarray(P, dtype=float)
    return np.abs(np.linalg.det(basis.T @ S.frames))


def _cell_coords(Y, cell, chunk_budget=2_000_000):
    """Integer coordinates of grid cells whose centres lie in the simplices Y (S, d+1, d)."""
    d = Y.shape[-1]
    T = np.swapaxes(Y[:, 1:] - Y[:, :1], 1, 2)
    vol = np.abs(np.linalg.det(T)) / math.factorial(d)
    keep = vol > VOLUME_FLOOR
    Y, T = Y[keep], T[keep]
    if Y.shape[0] == 0:
        return np.zeros((0, d), dtype=np.int64)
    Tinv = np.linalg.inv(T)
    lo = np.ceil(Y.min(axis=1) / cell - 0.5).astype(np.int64)
    hi = np.floor(Y.max(axis=1) / cell - 0.5).astype(np.int64)
    extent = np.maximum(hi - lo + 1, 0).max(axis=1)
    found = [np.zeros((0, d), dtype=np.int64)]
    for ext in np.unique(extent):
        if ext == 0:
            continue
        group = np.flatnonzero(extent == ext)
        offs = np.stack(np.meshgrid(*[np.arange(ext)] * d, indexing="ij"), -1).reshape(-1, d)
        step = max(1, chunk_budget // offs.shape[0])
        for start in range(0, group.size, step):
            idx = group[start:start + step]
            cells = lo[idx][:, None, :] + offs[None]                    # (c, K, d)
            inbox = np.all(cells <= hi[idx][:, None, :], axis=-1)
            centres = (cells + 0.5) * cell
            lam = np.einsum("cij,ckj->cki", Tinv[idx], centres - Y[idx][:, None, 0, :])
            inside = inbox & np.all(lam >= -1e-12, axis=-1) & (lam.sum(axis=-1) <= 1 + 1e-12)
            found.append(cells[inside])
    return np.unique(np.concatenate(found), axis=0)


def default_cell(S: SimplicialSet) -> float:
    return float(np.median(S.diameters())) / 4.0


def projected_image_measure(S: SimplicialSet, P, cell: float | None = None) -> float:
    """H^d of the projection of S onto the d-plane P, by counting grid cells.

    Cells are squares (cubes) of side ``cell`` in P's own coordinates, counted
    once however many simplices cover them.
    """
    basis = P.basis if isinstance(P, Frame) else np.asarray(P, dtype=float)
    if S.d > 3:
        raise PreconditionError("rasterisation supports d <= 3")
    if basis.shape != (S.n, S.d):
        raise PreconditionError("plane must be a d-frame in the set's ambient space")
    if cell is None:
        cell = default_cell(S)
    if cell <= 0:
        raise PreconditionError("cell must be positive")
    median = float(np.median(S.diameters()))
    if cell > median:
        warnings.warn(f"cell {cell:.3g} exceeds the median simplex diameter {median:.3g}",
                      RuntimeWarning, stacklevel=2)
    coords = S.vertices @ basis
    occupied = _cell_coords(coords[S.simplices], cell)
    return occupied.shape[0] * cell ** S.d


@dataclass(frozen=True)
class ProjectionReport:
    set_measure: float
    per_plane_image_measure: list
    integrand_bound: float
    lambda_used: float
    per_plane_multiplicity_integral: list
    cell: float
    chain_holds: bool

    @property
    def image_sum(self) -> float:
        return float(sum(self.per_plane_image_measure))

    @property
    def lambda_bound(self) -> float:
        return self.lambda_used * self.set_measure

    def to_json(self) -> dict:
        return {"set_measure": self.set_measure,
                "per_plane_image_measure": list(self.per_plane_image_measure),
                "image_sum": self.image_sum,
                "per_plane_multiplicity_integral": list(self.per_plane_multiplicity_integral),
                "integrand_bound": self.integrand_bound,
                "lambda_used": self.lambda_used,
                "lambda_bound": self.lambda_bound,
                "cell": self.cell,
                "chain_holds": self.chain_holds}


def projection_inequality_report(S: SimplicialSet, family, lam: float,
                                 cell: float | None = None, rtol: float = 0.03,
                                 strict: bool = True) -> ProjectionReport:
    """Check sum_i H^d(p^i(S)) <= int_S sum_i |p^i(T_x S)| <= lam H^d(S).

    The per-simplex hypothesis sum_i |p^i(T)| <= lam is verified first and a
    :class:`HypothesisViolation` names the first offending simplex.  The
    rasterised left-hand side may exceed the integrand by ``rtol`` relative;
    with ``strict`` a broken chain raises :class:`NumericalToleranceError`.
    """
    if family.n != S.n or family.d != S.d:
        raise PreconditionError("family and set dimensions disagree")
    factors = np.stack([projection_factors(S, p) for p in family.planes])   # (m, S)
    per_simplex = factors.sum(axis=0)
    bad = np.flatnonzero(per_simplex > lam + 1e-9)
    if bad.size:
        k = int(bad[0])
        raise HypothesisViolation(
            f"simplex {k} has sum of projections {per_simplex[k]:.9g} > lambda = {lam}", index=k)
    if cell is None:
        cell = default_cell(S)
    vols = S.volumes
    measure = float(vols.sum())
    mult = [float(f @ vols) for f in factors]
    integrand = float(per_simplex @ vols)
    images = [projected_image_measure(S, p, cell) for p in family.planes]
    holds = (sum(images) <= integrand * (1 + rtol) + 1e-12
             and integrand <= lam * measure * (1 + 1e-9) + 1e-12)
    report = ProjectionReport(measure, images, integrand, float(lam), mult, float(cell), holds)
    if strict and not holds:
        raise NumericalToleranceError(
            f"projection chain failed: images {sum(images):.6g}, integrand {integrand:.6g}, "
            f"lambda*measure {lam * measure:.6g}")
    return report


# ---------------------------------------------------------------- generators

def disc_parameters(radii, sectors: int):
    """Planar triangulation of a disc: centre fan plus quad rings split in two.

    ``radii`` are the ring radii (ascending, > 0); returns (points (V, 2), tris).
    """
    radii = np.asarray(radii, dtype=float)
    ang = 2 * np.pi * np.arange(sectors) / sectors
    ring = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    pts = [np.zeros((1, 2))] + [r * ring for r in radii]
    P = np.concatenate(pts)
    tris = []
    j = np.arange(sectors)
    jn = (j + 1) % sectors
    first = 1
    tris.append(np.stack([np.zeros(sectors, dtype=int), first + j, first + jn], -1))
    for k in range(1, radii.size):
        a, b = 1 + (k - 1) * sectors, 1 + k * sectors
        tris.append(np.stack([a + j, b + j, b + jn], -1))
        tris.append(np.stack([a + j, b + jn, a + jn], -1))
    return P, np.concatenate(tris)


def ring_radii(radius: float, rings: int, breaks=()):
    """Uniformly spaced radii on [0, radius] that include every break point."""
    knots = sorted({0.0, float(radius), *[float(b) for b in breaks if 0 < b < radius]})
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        count = max(1, int(round(rings * (b - a) / radius)))
        out.extend(np.linspace(a, b, count + 1)[1:])
    return np.array(out)


def disc_mesh(frame, radius: float = 1.0, rings: int = 32, sectors: int = 64,
              breaks=(), centre=None) -> SimplicialSet:
    """Flat disc in the 2-plane spanned by ``frame`` (n, 2)."""
    basis = frame.basis if isinstance(frame, Frame) else np.asarray(frame, dtype=float)
    if basis.shape[1] != 2:
        raise PreconditionError("disc_mesh needs a 2-frame")
    P, T = disc_parameters(ring_radii(radius, rings, breaks), sectors)
    V = P @ basis.T
    if centre is not None:
        V = V + np.asarray(centre, dtype=float)
    return SimplicialSet(basis.shape[0], 2, V, T)


def cube_parameters(shape, lo=-1.0, hi=1.0):
    """Kuhn triangulation of a d-dimensional box grid; returns (points, simplices)."""
    shape = tuple(int(s) for s in shape)
    d = len(shape)
    axes = [np.linspace(lo, hi, s + 1) for s in shape]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    strides = np.array([int(np.prod([s + 1 for s in shape[k + 1:]])) for k in range(d)])
    cells = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), -1).reshape(-1, d)
    base = cells @ strides
    simplices = []
    for perm in permutations(range(d)):
        idx = [base]
        cur = base.copy()
        for axis in perm:
            cur = cur + strides[axis]
            idx.append(cur)
        simplices.append(np.stack(idx, -1))
    return grid, np.concatenate(simplices)


def graph_mesh(frame, height, shape=(24, 24), half_width: float = 1.0, normal=None) -> SimplicialSet:
    """Graph x -> x + height(x) over a box in the d-plane ``frame``.

    ``height`` maps (V, d) plane coordinates to (V, n) ambient displacements,
    or to (V, k) components along ``normal`` (n, k).
    """
    basis = frame.basis if isinstance(frame, Frame) else np.asarray(frame, dtype=float)
    P, T = cube_parameters(shape, -half_width, half_width)
    disp = np.asarray(height(P), dtype=float)
    if normal is not None:
        disp = disp.reshape(P.shape[0], -1) @ np.asarray(normal, dtype=float).T
    V = P @ basis.T + disp
    return SimplicialSet(basis.shape[0], basis.shape[1], V, T)


def random_graph_mesh(rng, frame, normal, amplitude: float = 0.2, modes: int = 3,
                      shape=(24, 24), half_width: float = 1.0) -> SimplicialSet:
    """Graph of a random trigonometric height over a box in a 2-plane.

    Each of the k normal components is a sum of ``modes``^2 products
    sin/cos(a x + b) cos/sin(c y + e) with random phases and coefficients
    decaying like 1/(j + l + 1)^2, scaled so the largest coefficient is
    ``amplitude``.
    """
    normal = np.asarray(normal, dtype=float)
    k = normal.shape[1]
    j, l = np.meshgrid(np.arange(modes), np.arange(modes), indexing="ij")
    decay = 1.0 / (j + l + 1.0) ** 2
    coef = amplitude * rng.uniform(-1, 1, size=(k, modes, modes)) * decay
    phase = rng.uniform(0, 2 * np.pi, size=(k, 2, modes, modes))
    freq = np.pi / (2 * half_width) * (np.arange(modes) + 1.0)

    def height(P):
        x, y = P[:, 0, None, None], P[:, 1, None, None]
        out = np.empty((P.shape[0], k))
        for c in range(k):
            wave = (np.sin(freq[:, None] * x + phase[c, 0])
                    * np.cos(freq[None, :] * y + phase[c, 1]))
            out[:, c] = np.sum(coef[c] * wave, axis=(1, 2))
        return out

    return graph_mesh(frame, height, shape, half_width, normal)
