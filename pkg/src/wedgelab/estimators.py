"""scikit-learn style wrappers for the two fit/predict shaped computations."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .annulus import DEFAULT_DEGREE, BoundaryTrace, sh_degree_values, sh_dim, solve_annulus, \
    total_energy
from .errors import PreconditionError
from .exterior import Frame
from .grassmann import PlaneFamily, frame_projection_sums, maximize_projection_sum


def _as_family(X) -> PlaneFamily:
    if isinstance(X, PlaneFamily):
        return X
    stack = np.asarray(X, dtype=float)
    if stack.ndim != 3:
        raise PreconditionError("expected a PlaneFamily or an (m, n, d) array of frames")
    return PlaneFamily(tuple(Frame(b) for b in stack))


class ProjectionSumMaximizer(BaseEstimator):
    """Maximise sum_i |p^i(xi)| over unit simple d-vectors.

    Parameters
    ----------
    budget : int
        Ascent iterations per restart.
    restarts : int
        Number of random starting frames.
    random_state : int
    n_jobs : int

    Attributes
    ----------
    best_blade_ : Multivector
    best_value_ : float
    restart_values_ : ndarray of shape (restarts,)
    """

    def __init__(self, budget=200, restarts=64, random_state=0, n_jobs=1):
        self.budget = budget
        self.restarts = restarts
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        family = _as_family(X)
        blade, value, values = maximize_projection_sum(
            family, budget=self.budget, seed=self.random_state, restarts=self.restarts,
            n_jobs=self.n_jobs)
        self.family_ = family
        self.best_blade_ = blade
        self.best_value_ = value
        self.restart_values_ = values
        return self

    def score_samples(self, frames):
        """Projection sums of (k, n, d) orthonormal frames against the fitted family."""
        check_is_fitted(self, "family_")
        return frame_projection_sums(self.family_, np.asarray(frames, dtype=float))


class HarmonicAnnulusExtension(BaseEstimator):
    """Least-squares boundary trace on the inner sphere, harmonic extension outward.

    ``fit(X, y)`` takes points ``X`` on the sphere |x| = r0 (or unit points,
    which are used as directions) with values ``y``; ``predict`` evaluates
    the extension at points of the annulus.
    """

    def __init__(self, r0=0.3, max_degree=None):
        self.r0 = r0
        self.max_degree = max_degree

    def _design(self, directions, N):
        d = directions.shape[1]
        cols = [np.ones(directions.shape[0])]
        for n in range(1, N + 1):
            cols.extend(sh_degree_values(d, n, directions))
        return np.column_stack(cols)

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float).reshape(-1)
        d = X.shape[1]
        if d not in DEFAULT_DEGREE:
            raise PreconditionError("angular bases exist for d in (2, 3)")
        N = DEFAULT_DEGREE[d] if self.max_degree is None else int(self.max_degree)
        ncoef = 1 + sum(sh_dim(d, n) for n in range(1, N + 1))
        if X.shape[0] < ncoef:
            raise PreconditionError(f"need at least {ncoef} samples for degree {N}")
        directions = X / np.linalg.norm(X, axis=1, keepdims=True)
        A = self._design(directions, N)
        c, *_ = np.linalg.lstsq(A, y, rcond=None)
        # the constant column is 1, not the normalised Y_0
        coeffs, k = {}, 1
        for n in range(1, N + 1):
            coeffs[n] = c[k:k + sh_dim(d, n)]
            k += sh_dim(d, n)
        self.trace_ = BoundaryTrace(d, N, float(c[0]), coeffs)
        self.solution_ = solve_annulus(self.trace_, self.r0)
        self.energy_ = total_energy(self.solution_)
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        X = check_array(X)
        r = np.linalg.norm(X, axis=1)
        if np.any(r < self.r0 - 1e-12) or np.any(r > 1 + 1e-12):
            raise PreconditionError("prediction points must lie in the closed annulus")
        return self.solution_.evaluate_cartesian(X)
