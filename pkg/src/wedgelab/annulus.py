"""Harmonic extension on the annulus B(0,1) minus B(0,r0) in R^d.

Boundary data is prescribed on the inner sphere |x| = r0 and the normal
derivative vanishes on the outer sphere.  Each spherical-harmonic degree n
contributes a radial factor A_n r^n + B_n r^(2-d-n) normalised to 1 at r0,
and the Dirichlet energy splits into closed-form per-mode terms.

Angular bases are implemented for d = 2 (normalised cos/sin) and d = 3
(real orthonormal spherical harmonics, index i = 1..2n+1 standing for order
m = i - n - 1).  The purely radial solution works for every d >= 3.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import sph_harm_y

from .errors import OutsideHypothesisWarning, PreconditionError

DEFAULT_DEGREE = {2: 32, 3: 16}


def sphere_area(d: int) -> float:
    """H^{d-1}(S^{d-1}) = 2 pi^(d/2) / Gamma(d/2)."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def _comb(a, b):
    return math.comb(a, b) if a >= 0 and b >= 0 else 0


def sh_dim(d: int, n: int) -> int:
    """Dimension of the degree-n spherical harmonics on S^{d-1}."""
    if d < 2 or n < 0:
        raise PreconditionError("need d >= 2 and n >= 0")
    return _comb(n + d - 1, d - 1) - _comb(n + d - 3, d - 1)


def _check_d(d):
    if d not in (2, 3):
        raise PreconditionError(f"angular bases exist only for d in (2, 3), got d={d}")


def _angles(points):
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] == 2:
        return (np.arctan2(pts[..., 1], pts[..., 0]),)
    polar = np.arccos(np.clip(pts[..., 2] / np.linalg.norm(pts, axis=-1), -1.0, 1.0))
    azimuth = np.arctan2(pts[..., 1], pts[..., 0])
    return polar, azimuth


def sh_eval(d: int, n: int, i: int, points) -> np.ndarray:
    """i-th (1-based) orthonormal real spherical harmonic of degree n at unit points."""
    _check_d(d)
    if not 1 <= i <= sh_dim(d, n):
        raise PreconditionError(f"index {i} out of range for degree {n} on S^{d - 1}")
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != d:
        raise PreconditionError(f"points must have last axis {d}")
    if d == 2:
        (theta,) = _angles(pts)
        if n == 0:
            return np.full(theta.shape, 1.0 / math.sqrt(2 * math.pi))
        trig = np.cos if i == 1 else np.sin
        return trig(n * theta) / math.sqrt(math.pi)
    polar, azimuth = _angles(pts)
    m = i - n - 1
    Y = sph_harm_y(n, abs(m), polar, azimuth)
    if m == 0:
        return Y.real
    sign = (-1) ** m
    return math.sqrt(2) * sign * (Y.real if m > 0 else Y.imag)


def sh_degree_values(d: int, n: int, points) -> np.ndarray:
    """All degree-n basis functions at ``points``, shape (a_n, ...)."""
    return np.stack([sh_eval(d, n, i, points) for i in range(1, sh_dim(d, n) + 1)])


def sh_grad_d2(n: int, i: int, theta) -> np.ndarray:
    """Exact angular derivative of the d = 2 basis in the angle variable."""
    if n == 0:
        return np.zeros_like(theta)
    if i == 1:
        return -n * np.sin(n * theta) / math.sqrt(math.pi)
    return n * np.cos(n * theta) / math.sqrt(math.pi)


def tangent_frame(points) -> np.ndarray:
    """Orthonormal tangent vectors at points of S^{d-1}, shape (..., d-1, d)."""
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] == 2:
        return np.stack([-pts[..., 1], pts[..., 0]], axis=-1)[..., None, :]
    polar, azimuth = _angles(pts)
    e_polar = np.stack([np.cos(polar) * np.cos(azimuth), np.cos(polar) * np.sin(azimuth),
                        -np.sin(polar)], axis=-1)
    e_azim = np.stack([-np.sin(azimuth), np.cos(azimuth), np.zeros_like(azimuth)], axis=-1)
    return np.stack([e_polar, e_azim], axis=-2)


def _geodesic(points, tangents, h):
    return math.cos(h) * points + math.sin(h) * tangents


def sphere_gradient_fd(func, points, h: float = 1e-4) -> np.ndarray:
    """Tangential gradient components of ``func`` by central differences on great circles."""
    pts = np.asarray(points, dtype=float)
    T = tangent_frame(pts)
    comps = [(func(_geodesic(pts, T[..., k, :], h)) - func(_geodesic(pts, T[..., k, :], -h)))
             / (2 * h) for k in range(T.shape[-2])]
    return np.stack(comps, axis=-1)


def sphere_laplacian_fd(func, points, h: float = 1e-3) -> np.ndarray:
    """Laplace-Beltrami operator as a sum of second differences along geodesics."""
    pts = np.asarray(points, dtype=float)
    T = tangent_frame(pts)
    centre = func(pts)
    out = np.zeros_like(centre)
    for k in range(T.shape[-2]):
        out += (func(_geodesic(pts, T[..., k, :], h)) - 2 * centre
                + func(_geodesic(pts, T[..., k, :], -h))) / h ** 2
    return out


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature nodes on S^{d-1}, exact for polynomials up to ``degree``."""

    d: int
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    degree: int


def sphere_grid(d: int, degree: int) -> SphereGrid:
    """Trapezoid rule on S^1; Gauss-Legendre x uniform longitude on S^2."""
    _check_d(d)
    if d == 2:
        K = degree + 1
        theta = 2 * math.pi * np.arange(K) / K
        pts = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        return SphereGrid(2, pts, np.full(K, 2 * math.pi / K), degree)
    L = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(L)
    K = degree + 1
    phi = 2 * math.pi * np.arange(K) / K
    polar = np.arccos(x)
    P, F = np.meshgrid(polar, phi, indexing="ij")
    pts = np.stack([np.sin(P) * np.cos(F), np.sin(P) * np.sin(F), np.cos(P)], axis=-1)
    W = np.outer(w, np.full(K, 2 * math.pi / K))
    return SphereGrid(3, pts.reshape(-1, 3), W.reshape(-1), degree)


@dataclass(frozen=True)
class BoundaryTrace:
    """Mean and spherical-harmonic coefficients of boundary data on S^{d-1}.

    ``coeffs[n]`` is the array of the a_n coefficients of degree n
    (n = 1..max_degree).
    """

    d: int
    max_degree: int
    mean: float
    coeffs: dict = field(default_factory=dict)
    parseval_residual: float = 0.0

    def __post_init__(self):
        _check_d(self.d)
        full = {}
        for n in range(1, self.max_degree + 1):
            c = np.zeros(sh_dim(self.d, n))
            if n in self.coeffs:
                given = np.asarray(self.coeffs[n], dtype=float).reshape(-1)
                if given.shape != c.shape:
                    raise PreconditionError(f"degree {n} needs {c.shape[0]} coefficients")
                c = given.copy()
            c.setflags(write=False)
            full[n] = c
        extra = set(self.coeffs) - set(full)
        if extra:
            raise PreconditionError(f"degrees {sorted(extra)} exceed max_degree {self.max_degree}")
        object.__setattr__(self, "coeffs", full)

    @classmethod
    def single_mode(cls, d, n, i=1, value=1.0, mean=0.0, max_degree=None):
        """Trace equal to ``mean + value * Y_i^(n)``."""
        N = max(n, max_degree or n)
        c = np.zeros(sh_dim(d, n))
        c[i - 1] = value
        return cls(d, N, mean, {n: c} if n >= 1 else {})

    def mass(self, n: int) -> float:
        return float(self.coeffs[n] @ self.coeffs[n])

    def total_mass(self) -> float:
        """||u0 - mean||^2 in L^2(S^{d-1})."""
        return float(sum(self.mass(n) for n in range(1, self.max_degree + 1)))

    def evaluate(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        out = np.full(pts.shape[:-1], self.mean)
        for n, c in self.coeffs.items():
            if np.any(c):
                out = out + np.tensordot(c, sh_degree_values(self.d, n, pts), axes=1)
        return out


def expand_trace(grid: SphereGrid, samples, max_degree: int) -> BoundaryTrace:
    """Quadrature projection of sampled boundary data onto the basis up to degree N."""
    if grid.degree < 2 * max_degree:
        raise PreconditionError(
            f"grid exact to degree {grid.degree} is too coarse for N={max_degree} "
            f"(needs {2 * max_degree})")
    f = np.asarray(samples, dtype=float).reshape(-1)
    if f.shape[0] != grid.weights.shape[0]:
        raise PreconditionError("sample count does not match the grid")
    mean = float(grid.weights @ f) / sphere_area(grid.d)
    coeffs = {n: sh_degree_values(grid.d, n, grid.points) @ (grid.weights * f)
              for n in range(1, max_degree + 1)}
    trace = BoundaryTrace(grid.d, max_degree, mean, coeffs)
    residual = float(grid.weights @ (f - mean) ** 2) - trace.total_mass()
    return BoundaryTrace(grid.d, max_degree, mean, coeffs, parseval_residual=residual)


def expand_function(func, d: int, max_degree: int | None = None) -> BoundaryTrace:
    """Sample ``func`` (unit points -> values) on a default grid and expand."""
    N = DEFAULT_DEGREE[d] if max_degree is None else max_degree
    grid = sphere_grid(d, 2 * N)
    return expand_trace(grid, func(grid.points), N)


def mode_coefficients(d: int, n: int, r0: float) -> tuple[float, float]:
    """(A_n, B_n) solving A r0^n + B r0^(2-d-n) = 1 and n A + (2-d-n) B = 0."""
    denom = (n + d - 2) * r0 ** n + n * r0 ** (2 - d - n)
    return (n + d - 2) / denom, n / denom


@dataclass(frozen=True)
class AnnulusSolution:
    d: int
    r0: float
    trace: BoundaryTrace
    modes: dict

    def radial(self, n, r):
        A, B = self.modes[n]
        return A * r ** n + B * r ** (2 - self.d - n)

    def radial_derivative(self, n, r):
        A, B = self.modes[n]
        return n * A * r ** (n - 1) + (2 - self.d - n) * B * r ** (1 - self.d - n)

    def radial_residual(self, n, r):
        """R'' + (d-1)/r R' - n(n+d-2)/r^2 R, which vanishes for a harmonic mode."""
        A, B = self.modes[n]
        d = self.d
        r = np.asarray(r, dtype=float)
        second = (n * (n - 1) * A * r ** (n - 2)
                  + (2 - d - n) * (1 - d - n) * B * r ** (-d - n))
        return (second + (d - 1) / r * self.radial_derivative(n, r)
                - n * (n + d - 2) / r ** 2 * self.radial(n, r))

    def evaluate(self, r, points) -> np.ndarray:
        """v at radius ``r`` (scalar or broadcastable) and unit ``points``."""
        pts = np.asarray(points, dtype=float)
        out = np.full(np.broadcast_shapes(np.shape(r), pts.shape[:-1]), self.trace.mean)
        for n in self.modes:
            out = out + self.radial(n, r) * np.tensordot(
                self.trace.coeffs[n], sh_degree_values(self.d, n, pts), axes=1)
        return out

    def evaluate_cartesian(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        r = np.linalg.norm(X, axis=-1)
        return self.evaluate(r, X / r[..., None])


def solve_annulus(trace: BoundaryTrace, r0: float) -> AnnulusSolution:
    if not 0.0 < r0 < 1.0:
        raise PreconditionError(f"inner radius must lie in (0, 1), got {r0}")
    modes = {n: mode_coefficients(trace.d, n, r0)
             for n in range(1, trace.max_degree + 1) if trace.mass(n) > 0.0}
    return AnnulusSolution(trace.d, r0, trace, modes)


def mode_energy(d: int, n: int, A: float, B: float, r0: float) -> float:
    """Dirichlet energy of a unit-coefficient mode (A r^n + B r^(2-d-n)) Y^(n)."""
    return n * A * A * (1 - r0 ** (2 * n + d - 2)) + (n + d - 2) * B * B * (r0 ** (2 - d - 2 * n) - 1)


def wirtinger_lower_bound(trace: BoundaryTrace, r0: float) -> float:
    """(1/3) r0^(d-2) ||u0 - mean||^2, i.e. (1/3r0) times the L^2 mass on |x| = r0.

    Proven only for r0 < 1/2; larger radii still return the value and warn
    with :class:`OutsideHypothesisWarning`.
    """
    if r0 >= 0.5:
        warnings.warn(f"r0 = {r0} is outside the proven range r0 < 1/2",
                      OutsideHypothesisWarning, stacklevel=2)
    return r0 ** (trace.d - 2) * trace.total_mass() / 3.0


def off_center_lower_bound(trace: BoundaryTrace, r0: float, centre) -> float:
    """Same bound for a sphere |x - q| = r0 inside B(0,1), by re-centering.

    Requires r0 < dist(q, boundary of B(0,1)) / 2.
    """
    q = np.asarray(centre, dtype=float)
    gap = 1.0 - float(np.linalg.norm(q))
    if not 0.0 < r0 < 0.5 * gap:
        raise PreconditionError(
            f"need r0 < dist(q, boundary)/2 = {0.5 * gap:.6g}, got r0 = {r0}")
    return wirtinger_lower_bound(trace, r0)


@dataclass(frozen=True)
class EnergyReport:
    total: float
    per_mode: dict
    lower_bound_wirtinger: float
    slack: float
    within_hypothesis: bool

    def rows(self, solution: AnnulusSolution):
        """CSV rows (n, A_n, B_n, mode_energy, coeff_mass)."""
        return [(n, *solution.modes[n], self.per_mode[n], solution.trace.mass(n))
                for n in sorted(solution.modes)]


def total_energy(sol: AnnulusSolution) -> EnergyReport:
    per_mode = {n: mode_energy(sol.d, n, *sol.modes[n], sol.r0) for n in sorted(sol.modes)}
    total = float(sum(per_mode[n] * sol.trace.mass(n) for n in sorted(per_mode)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OutsideHypothesisWarning)
        bound = wirtinger_lower_bound(sol.trace, sol.r0)
    return EnergyReport(total, per_mode, bound, total - bound, sol.r0 < 0.5)


def _log_radial_nodes(r0, count):
    """Gauss-Legendre nodes in s = log r; returns r and weights for dr."""
    x, w = np.polynomial.legendre.leggauss(count)
    a, b = math.log(r0), 0.0
    s = 0.5 * (b - a) * x + 0.5 * (b + a)
    r = np.exp(s)
    return r, 0.5 * (b - a) * w * r


def quadrature_energy_oracle(sol: AnnulusSolution, radial_nodes: int = 96,
                             grid: SphereGrid | None = None, h: float = 1e-4) -> float:
    """Tensor-quadrature value of the Dirichlet energy of ``sol``.

    Works from the assembled field rather than the per-mode formula: the
    radial derivative is differentiated term by term, the angular gradient is
    exact for d = 2 and central differences along geodesics for d = 3, and the
    squared gradient of the full sum is integrated on a product grid.
    """
    degrees = sorted(sol.modes)
    if not degrees:
        return 0.0
    N = max(degrees)
    if grid is None:
        grid = sphere_grid(sol.d, 2 * N + 2)
    if grid.degree < 2 * N:
        raise PreconditionError("angular grid under-resolves the series")
    pts = grid.points
    ang = np.stack([np.tensordot(sol.trace.coeffs[n], sh_degree_values(sol.d, n, pts), axes=1)
                    for n in degrees])
    if sol.d == 2:
        (theta,) = _angles(pts)
        grad = np.stack([
            sum(c * sh_grad_d2(n, i + 1, theta) for i, c in enumerate(sol.trace.coeffs[n]))
            for n in degrees])[..., None]
    else:
        grad = np.stack([
            sphere_gradient_fd(lambda p, n=n: np.tensordot(
                sol.trace.coeffs[n], sh_degree_values(3, n, p), axes=1), pts, h)
            for n in degrees])
    r, wr = _log_radial_nodes(sol.r0, radial_nodes)
    R = np.stack([sol.radial(n, r) for n in degrees])
    dR = np.stack([sol.radial_derivative(n, r) for n in degrees])
    v_r = dR.T @ ang                                   # (radii, points)
    v_ang = np.einsum("nr,npk->rpk", R, grad) / r[:, None, None]
    density = v_r ** 2 + np.sum(v_ang ** 2, axis=-1)
    return float((wr * r ** (sol.d - 1)) @ density @ grid.weights)


def dirichlet_energy(func, d: int, r0: float, radial_nodes: int = 96,
                     grid: SphereGrid | None = None, h: float = 1e-5) -> float:
    """Energy of an arbitrary field ``func(r, points)`` on the annulus, by finite differences."""
    if grid is None:
        grid = sphere_grid(d, 2 * DEFAULT_DEGREE[d] + 2)
    r, wr = _log_radial_nodes(r0, radial_nodes)
    rr = r[:, None]
    pts = grid.points[None, :, :]
    v_r = (func(rr * (1 + h), pts) - func(rr * (1 - h), pts)) / (2 * h * rr)
    grad = sphere_gradient_fd(lambda p: func(rr, p), np.broadcast_to(pts, (r.size,) + grid.points.shape), h)
    density = v_r ** 2 + np.sum(grad ** 2, axis=-1) / rr ** 2
    return float((wr * r ** (d - 1)) @ density @ grid.weights)


def radial_constant(d: int) -> float:
    """c(d) = (d-2) s_{d-1} / log 4."""
    return (d - 2) * sphere_area(d) / math.log(4)


def radial_solution(d: int, r0: float, delta: float) -> tuple[float, float]:
    """Radial harmonic f = A r^(2-d) - A with f(r0) = delta r0, f(1) = 0.

    Returns (A, energy), energy = s_{d-1} (d-2) delta^2 r0^2 / (r0^(2-d) - 1).
    """
    if d < 3:
        raise PreconditionError("the radial lemma is implemented for d >= 3 only")
    if not 0.25 < r0 < 1.0:
        raise PreconditionError(f"need 1/4 < r0 < 1, got {r0}")
    gap = r0 ** (2 - d) - 1
    A = delta * r0 / gap
    # s * A^2 (d-2)^2 * int_{r0}^1 r^(1-d) dr
    energy = sphere_area(d) * A * A * (d - 2) * gap
    return A, energy


def level_constant(eps: float) -> float:
    """C(eps) = max(101, 2 / (1 - sqrt(eps))), so that (1 - 2/C)^2 >= eps and C > 100."""
    if not 0.0 < eps < 1.0:
        raise PreconditionError("eps must lie in (0, 1)")
    return max(101.0, 2.0 / (1.0 - math.sqrt(eps)))


def level_energy_bound(eps: float, d: int, delta: float, r0: float) -> float:
    """(1 - 2/C)^2 c(d) delta^2 r0^d with C = level_constant(eps); at least eps c(d) delta^2 r0^d."""
    C = level_constant(eps)
    return (1 - 2 / C) ** 2 * radial_constant(d) * delta ** 2 * r0 ** d
