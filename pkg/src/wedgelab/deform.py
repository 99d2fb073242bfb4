"""Deformation experiments on unions of planes.

Two experiments live here:

* the epsilon-stopping-time process, a dyadic descent that tracks the
  translate of the reference cone best fitting a candidate set at each scale
  and stops at the first scale where no translate is epsilon-near;
* pinching, a compactly supported Lipschitz map that pulls the sheets of a
  plane union toward a common centroid plane inside a neck, used to look for
  measure-decreasing deformations as the angle between the planes shrinks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from .errors import NumericalToleranceError, PreconditionError
from .grassmann import PlaneFamily, rotated_family
from .mesh import (SimplicialSet, cube_parameters, disc_parameters, ring_radii, set_measure,
                   union)

logger = logging.getLogger(__name__)


# ------------------------------------------------------------ regions & sets

def in_region(points, centre, r, region="cylinder", family=None) -> np.ndarray:
    """Membership in B(x, r) or in D(x, r) = intersection of the cylinders C^i(x, r)."""
    rel = np.asarray(points, dtype=float) - np.asarray(centre, dtype=float)
    if region == "ball":
        return np.linalg.norm(rel, axis=-1) < r
    if region != "cylinder":
        raise PreconditionError(f"unknown region {region!r}")
    if family is None:
        raise PreconditionError("the cylinder region needs a plane family")
    inside = np.ones(rel.shape[:-1], dtype=bool)
    for p in family.planes:
        inside &= np.linalg.norm(rel @ p.basis, axis=-1) < r
    return inside


@dataclass(frozen=True)
class PlaneUnion:
    """The cone ``family`` translated by ``offset``; exact distances, gridded samples."""

    family: PlaneFamily
    offset: np.ndarray = field(default=None)
    samples_per_radius: int = 12

    def __post_init__(self):
        off = np.zeros(self.family.n) if self.offset is None else np.asarray(self.offset, float)
        object.__setattr__(self, "offset", off)

    def translated(self, q) -> "PlaneUnion":
        return PlaneUnion(self.family, self.offset + np.asarray(q, float), self.samples_per_radius)

    def distance(self, points) -> np.ndarray:
        rel = np.atleast_2d(np.asarray(points, dtype=float)) - self.offset
        out = np.full(rel.shape[0], np.inf)
        for p in self.family.planes:
            resid = rel - (rel @ p.basis) @ p.basis.T
            out = np.minimum(out, np.linalg.norm(resid, axis=1))
        return out

    def region_samples(self, centre, r, region="cylinder", family=None) -> np.ndarray:
        """Grid points of each plane covering its part of the region."""
        centre = np.asarray(centre, dtype=float)
        k = self.samples_per_radius
        d = self.family.d
        ticks = np.linspace(-1.0, 1.0, 2 * k + 1)
        unit = np.stack(np.meshgrid(*[ticks] * d, indexing="ij"), -1).reshape(-1, d)
        unit = unit[np.linalg.norm(unit, axis=1) <= 1.0]
        pts = []
        for p in self.family.planes:
            c0 = p.basis.T @ (centre - self.offset)
            pts.append(self.offset + (c0 + r * unit) @ p.basis.T)
        pts = np.concatenate(pts)
        return pts[in_region(pts, centre, r, region, family or self.family)]


def _samples(S, centre, r, region, family):
    if isinstance(S, SimplicialSet):
        pts = S.sample_points()
        return pts[in_region(pts, centre, r, region, family)]
    return S.region_samples(centre, r, region, family)


class Nearness(NamedTuple):
    value: float
    vacuous: bool


def relative_distance(E, F, centre, r, region="cylinder", family=None) -> Nearness:
    """(1/r) max(sup_{y in E cap U} d(y, F), sup_{y in F cap U} d(y, E)).

    ``E`` and ``F`` are :class:`SimplicialSet` (sampled at vertices and edge
    midpoints, exact distances to their simplices) or :class:`PlaneUnion`.
    A supremum over an empty sample set is 0; ``vacuous`` is set when both
    sides are empty.
    """
    if r <= 0:
        raise PreconditionError("radius must be positive")
    if region == "cylinder" and family is None:
        family = getattr(F, "family", None) or getattr(E, "family", None)
    ye = _samples(E, centre, r, region, family)
    yf = _samples(F, centre, r, region, family)
    a = float(F.distance(ye).max()) if len(ye) else 0.0
    b = float(E.distance(yf).max()) if len(yf) else 0.0
    return Nearness(max(a, b) / r, len(ye) == 0 and len(yf) == 0)


# --------------------------------------------------------- stopping time

@dataclass(frozen=True)
class SearchSpec:
    """Translation search: final pitch ``pitch * eps * s``, reach ``reach * eps * s``."""

    pitch: float = 0.25
    reach: float = 24.0
    half_width: int = 2

    def __post_init__(self):
        if self.pitch > 1.0:
            raise PreconditionError(
                "translation grid coarser than eps*s cannot resolve the acceptance threshold")
        if self.pitch <= 0 or self.reach <= 0 or self.half_width < 1:
            raise PreconditionError("search pitch, reach and half_width must be positive")


@dataclass(frozen=True)
class StepRecord:
    index: int
    centre: np.ndarray
    scale: float
    best_distance: float
    witness: np.ndarray | None

    def to_json(self) -> dict:
        return {"index": self.index, "centre": [float(x) for x in self.centre],
                "scale": self.scale, "best_distance": self.best_distance,
                "witness": None if self.witness is None else [float(x) for x in self.witness]}


@dataclass(frozen=True)
class StoppingTimeTrace:
    eps: float
    steps: list
    stopped_at: int | str
    o_k: np.ndarray
    r_k: float

    def to_json(self) -> dict:
        return {"eps": self.eps, "stopped_at": self.stopped_at,
                "o_k": [float(x) for x in self.o_k], "r_k": self.r_k,
                "steps": [s.to_json() for s in self.steps]}

    def check_chain(self):
        """Raise unless |q_{n+1} - q_n| <= 12 s_n eps and, if stopped, |o_k| <= 12 eps."""
        slack = 1e-12
        for s in self.steps:
            if s.witness is not None:
                jump = float(np.linalg.norm(s.witness - s.centre))
                if jump > 12 * s.scale * self.eps + slack:
                    raise NumericalToleranceError(
                        f"step {s.index}: |q_(n+1) - q_n| = {jump:.6g} > 12 s eps")
        if self.stopped_at != "exhausted" and np.linalg.norm(self.o_k) > 12 * self.eps + slack:
            raise NumericalToleranceError(f"|o_k| = {np.linalg.norm(self.o_k):.6g} > 12 eps")


def _complement(basis):
    """Orthonormal basis of the orthogonal complement of span(basis)."""
    U, _, _ = np.linalg.svd(basis, full_matrices=True)
    return U[:, basis.shape[1]:]


def _offset_grid(n, half_width):
    ticks = np.arange(-half_width, half_width + 1, dtype=float)
    grid = np.stack(np.meshgrid(*[ticks] * n, indexing="ij"), -1).reshape(-1, n)
    order = np.lexsort((np.arange(len(grid)), np.linalg.norm(grid, axis=1)))
    return grid[order]


def _one_sided(complements, ye_coords, q, r, chunk=512):
    """sup over E-samples of the distance to the cone translated by each q, over r."""
    out = np.zeros(q.shape[0])
    if ye_coords[0].shape[0] == 0:
        return out
    for s in range(0, q.shape[0], chunk):
        qq = q[s:s + chunk]
        best = None
        for C, ya in zip(complements, ye_coords):
            dist = cdist(qq @ C, ya)
            best = dist if best is None else np.minimum(best, dist, out=best)
        out[s:s + chunk] = best.max(axis=1) / r
    return out


def _best_translation(E, family, centre, s, eps, search, start):
    """Coarse-to-fine grid search minimising d_{centre, s}(E, family + q)."""
    n = family.n
    complements = [_complement(p.basis) for p in family.planes]
    ye = _samples(E, centre, s, "cylinder", family)
    ye_coords = [ye @ C for C in complements]
    cone = PlaneUnion(family)

    def full(q):
        return relative_distance(E, cone.translated(q), centre, s, "cylinder", family).value

    reach = search.reach * eps * s
    final = search.pitch * eps * s
    best_q = np.asarray(start, dtype=float)
    best_val = full(best_q)
    offsets = _offset_grid(n, search.half_width)
    pitch = reach / search.half_width
    while True:
        cand = best_q + pitch * offsets
        cand = cand[np.linalg.norm(cand - centre, axis=1) <= reach + 1e-15]
        lower = _one_sided(complements, ye_coords, cand, s)
        for k in np.argsort(lower, kind="stable"):
            if lower[k] >= best_val:
                break
            val = full(cand[k])
            if val < best_val:
                best_val, best_q = val, cand[k]
        if pitch <= final:
            break
        pitch = max(pitch / 2, final)
    return best_q, best_val


def epsilon_process(E, family: PlaneFamily, eps: float, max_steps: int = 8,
                    search: SearchSpec | None = None) -> StoppingTimeTrace:
    """Dyadic stopping-time descent with s_n = 2^-n and q_0 = q_1 = 0.

    Step 1 records d_{0,1}(E, P).  For n >= 1 the search looks in D(q_n, s_n)
    for a translate P + q_{n+1} that is eps-near E; the process stops at the
    first n where none is found and reports o_k = q_n, r_k = s_n.  Chain
    bounds are asserted on the result.
    """
    if not 0 < eps < 0.01:
        raise PreconditionError("the process needs 0 < eps < 1/100")
    if max_steps < 1:
        raise PreconditionError("max_steps must be positive")
    search = search or SearchSpec()
    n = family.n
    zero = np.zeros(n)
    d0 = relative_distance(E, PlaneUnion(family), zero, 1.0, "cylinder", family).value
    steps = [StepRecord(0, zero, 1.0, d0, None if d0 > eps else zero)]
    q, stopped = zero, None
    if d0 > eps:
        stopped = 0
    else:
        for k in range(1, max_steps + 1):
            s = 2.0 ** -k
            best_q, best = _best_translation(E, family, q, s, eps, search, q)
            logger.debug("step %d: s=%g best=%.6g", k, s, best)
            if best > eps:
                steps.append(StepRecord(k, q, s, best, None))
                stopped = k
                break
            steps.append(StepRecord(k, q, s, best, best_q))
            q = best_q
    if stopped is None:
        trace = StoppingTimeTrace(eps, steps, "exhausted", q, steps[-1].scale)
    else:
        trace = StoppingTimeTrace(eps, steps, stopped, steps[-1].centre, steps[-1].scale)
    trace.check_chain()
    return trace


def graded_radii(radius, inner, inner_rings, outer_rings):
    """Ring radii that are fine on [0, inner] and coarser on [inner, radius]."""
    fine = np.linspace(0.0, inner, inner_rings + 1)[1:]
    coarse = np.linspace(inner, radius, outer_rings + 1)[1:]
    return np.concatenate([fine, coarse])


def cone_mesh(family: PlaneFamily, radius=1.0, rings=32, sectors=96, radii=None,
              lift=None) -> SimplicialSet:
    """Union of 2-discs, one per plane, optionally lifted off the planes.

    ``lift(i, coords)`` returns an (V, n) displacement for sheet i.
    """
    if family.d != 2:
        raise PreconditionError("cone_mesh builds 2-dimensional sheets")
    if radii is None:
        radii = ring_radii(radius, rings)
    P, T = disc_parameters(radii, sectors)
    sheets = []
    for i, p in enumerate(family.planes):
        V = P @ p.basis.T
        if lift is not None:
            V = V + lift(i, P)
        sheets.append(SimplicialSet(family.n, 2, V, T))
    return union(*sheets)


def bump_normal(family: PlaneFamily) -> np.ndarray:
    """Unit normal to the first plane pointing as far as possible from the others."""
    C = _complement(family.planes[0].basis)
    if family.m == 1:
        return C[:, 0]
    rows = [(np.eye(family.n) - p.basis @ p.basis.T) @ C for p in family.planes[1:]]
    _, _, Vt = np.linalg.svd(np.concatenate(rows), full_matrices=False)
    nu = C @ Vt[0]
    # fix the sign so the construction is reproducible
    return nu if nu[np.argmax(np.abs(nu))] > 0 else -nu


def bump_set(family: PlaneFamily, height: float, width: float, radius=1.0,
             sectors=96, normal=None) -> SimplicialSet:
    """Cone mesh whose first sheet carries a bump of ``height`` and support ``width``.

    The bump profile is height * (1 - (|c|/width)^2)^2 along ``normal``
    (default :func:`bump_normal`).
    """
    normal = bump_normal(family) if normal is None else np.asarray(normal, dtype=float)

    def lift(i, c):
        if i != 0:
            return np.zeros((c.shape[0], family.n))
        t = np.clip(np.linalg.norm(c, axis=1) / width, 0.0, 1.0)
        return (height * (1 - t ** 2) ** 2)[:, None] * normal[None, :]

    radii = graded_radii(radius, 2 * width, 16, 48)
    return cone_mesh(family, radii=radii, sectors=sectors, lift=lift)


def bump_height(E, family: PlaneFamily) -> float:
    """Largest distance from the sampled set to the untranslated cone.

    For a bump set this is the height the cone actually sees: the raised
    points can sit close to another plane, so it can be well below the
    nominal displacement.
    """
    return float(PlaneUnion(family).distance(E.sample_points()).max())


# -------------------------------------------------------------- pinching

@dataclass(frozen=True)
class PinchProfile:
    """Piecewise-linear radial weight: 1 on [0, core*rho], 0 beyond rho.

    ``pull`` scales how far points travel toward the centroid plane.
    """

    neck_radius: float
    pull: float
    core: float = 0.5

    def __post_init__(self):
        if self.neck_radius <= 0:
            raise PreconditionError("neck radius must be positive")
        if not 0.0 <= self.pull <= 1.0:
            raise PreconditionError("pull must lie in [0, 1]")
        if not 0.0 <= self.core < 1.0:
            raise PreconditionError("core fraction must lie in [0, 1)")

    def weight(self, radius):
        inner = self.core * self.neck_radius
        w = (self.neck_radius - np.asarray(radius, dtype=float)) / (self.neck_radius - inner)
        return np.clip(w, 0.0, 1.0)


def centroid_frame(family: PlaneFamily) -> np.ndarray:
    """Orthonormal polar factor of the mean of the plane bases."""
    mean = family.stacked().mean(axis=0)
    U, _, Vt = np.linalg.svd(mean, full_matrices=False)
    return U @ Vt


@dataclass(frozen=True)
class PinchMap:
    """x -> x + pull * w(|x|) * (L x - x), L sending every plane onto the centroid plane.

    L maps the j-th basis vector of each plane to the j-th centroid vector, so
    at full pull the cores of all sheets land on one disc.  Identity outside
    B(0, rho).
    """

    profile: PinchProfile
    linear: np.ndarray = field(repr=False)
    lipschitz: float

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        r = np.linalg.norm(X, axis=-1)
        w = self.profile.pull * self.profile.weight(r)
        moved = X + w[..., None] * (X @ self.linear.T - X)
        return np.where((r < self.profile.neck_radius)[..., None], moved, X)


def pinch_map(profile: PinchProfile, family: PlaneFamily) -> PinchMap:
    n = family.n
    F = np.concatenate([p.basis for p in family.planes], axis=1)
    if np.linalg.matrix_rank(F, tol=1e-10) < n:
        raise PreconditionError("pinching needs transversal planes spanning the ambient space")
    G = centroid_frame(family)
    L = np.concatenate([G] * family.m, axis=1) @ np.linalg.inv(F)
    I = np.eye(n)
    t = profile.pull
    # |D phi| <= max(1, |(1-t)I + tL|) + t |L - I| |x| |grad w|, and |x||grad w| <= 1/(1-core)
    lip = (max(1.0, np.linalg.norm((1 - t) * I + t * L, 2))
           + t * np.linalg.norm(L - I, 2) / (1.0 - profile.core))
    return PinchMap(profile, L, float(lip))


def _sheet_parameters(d, radius, profile, resolution):
    breaks = (profile.core * profile.neck_radius, profile.neck_radius)
    if d == 2:
        return disc_parameters(ring_radii(radius, resolution, breaks), 4 * resolution)
    if d == 3:
        return cube_parameters((resolution,) * 3, -radius, radius)
    raise PreconditionError("pinch experiments support d in (2, 3)")


def measure_delta(family: PlaneFamily, radius: float, profile: PinchProfile,
                  resolution: int = 16) -> float:
    """Measure of the pinched union minus measure of the union, on meshed sheets.

    Every sheet uses the same parameter mesh.  At full pull the core simplices
    of all sheets map to the same points and are counted once; other overlaps
    are counted with multiplicity, which can only overstate the deformed
    measure, so a negative result is a genuine decrease at mesh scale.
    """
    if profile.neck_radius >= radius:
        raise PreconditionError("neck radius must be smaller than the sheet radius")
    params, simplices = _sheet_parameters(family.d, radius, profile, resolution)
    phi = pinch_map(profile, family)
    before, after = 0.0, 0.0
    core = np.all(np.linalg.norm(params[simplices], axis=-1)
                  <= profile.core * profile.neck_radius, axis=1)
    merge = profile.pull == 1.0 and family.m > 1
    first = None
    for i, p in enumerate(family.planes):
        V = params @ p.basis.T
        sheet = SimplicialSet(family.n, family.d, V, simplices)
        before += set_measure(sheet)
        W = phi(V)
        keep = simplices if not (merge and i > 0) else simplices[~core]
        try:
            moved = SimplicialSet(family.n, family.d, W, keep)
        except PreconditionError as exc:
            raise PreconditionError(f"resolution too low: {exc}") from exc
        after += set_measure(moved)
        if merge:
            used = np.unique(simplices[core])
            if first is None:
                first = W[used]
            elif np.abs(W[used] - first).max(initial=0.0) > 1e-9:
                raise NumericalToleranceError("pinched cores do not coincide")
    return after - before


def measure_delta_with_error(family, radius, profile, resolution=16):
    """(delta at 2*resolution, |delta(2*resolution) - delta(resolution)|)."""
    coarse = measure_delta(family, radius, profile, resolution)
    fine = measure_delta(family, radius, profile, 2 * resolution)
    return fine, abs(fine - coarse)


DEFAULT_PROFILES = tuple(PinchProfile(rho, t) for rho in (0.2, 0.3, 0.4)
                         for t in (0.25, 0.5, 0.75, 1.0))


@dataclass(frozen=True)
class ScanRow:
    theta: float
    angles: tuple
    neck_radius: float
    pull: float
    core: float
    delta: float
    error_bar: float

    @property
    def decreases(self) -> bool:
        return self.delta < -3.0 * self.error_bar


@dataclass(frozen=True)
class ScanResult:
    rows: list
    crossover: float | None

    def minimum_by_angle(self) -> dict:
        out = {}
        for row in self.rows:
            key = row.theta
            if key not in out or row.delta < out[key].delta:
                out[key] = row
        return out


def _scan_cell(d, m, theta, profile, radius, resolution):
    family = rotated_family(m, d, theta)
    measured = tuple(float(a) for a in family.pairwise_angles[(0, 1)])
    delta, err = measure_delta_with_error(family, radius, profile, resolution)
    return ScanRow(theta, measured, profile.neck_radius, profile.pull, profile.core, delta, err)


def angle_threshold_scan(d: int, m: int, angles, profiles=DEFAULT_PROFILES,
                         resolution: int = 16, radius: float = 0.5,
                         n_jobs: int = 1) -> ScanResult:
    """Most negative pinch delta per angle; crossover = smallest angle above which none decreases.

    Each angle builds the family with all pairwise characteristic angles
    equal to it.  Rows come back in grid order whatever ``n_jobs`` is.
    """
    angles = [float(a) for a in angles]
    profiles = list(profiles)
    if not angles or not profiles:
        raise PreconditionError("angle and profile grids must be nonempty")
    cells = [(a, p) for a in angles for p in profiles]
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_scan_cell)(d, m, a, p, radius, resolution) for a, p in cells)
    decreasing = {a for (a, _), row in zip(cells, rows) if row.decreases}
    crossover = None
    for a in sorted(set(angles), reverse=True):
        if a in decreasing:
            break
        crossover = a
    return ScanResult(list(rows), crossover)
