import math
import warnings

import numpy as np
import pytest

from wedgelab.annulus import (BoundaryTrace, dirichlet_energy, expand_function, expand_trace,
                              level_constant, level_energy_bound, mode_coefficients, mode_energy,
                              off_center_lower_bound, quadrature_energy_oracle, radial_constant,
                              radial_solution, sh_dim, sh_eval, solve_annulus, sphere_area,
                              sphere_grid, sphere_laplacian_fd, total_energy,
                              wirtinger_lower_bound)
from wedgelab.errors import OutsideHypothesisWarning, PreconditionError


def unit_points(rng, d, k):
    x = rng.standard_normal((k, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_trace(rng, d, N):
    coeffs = {n: rng.standard_normal(sh_dim(d, n)) / n ** 1.5 for n in range(1, N + 1)}
    return BoundaryTrace(d, N, float(rng.standard_normal()), coeffs)


def test_sh_dim():
    assert sh_dim(2, 0) == 1 and sh_dim(3, 0) == 1
    assert sh_dim(2, 3) == 2
    assert sh_dim(3, 2) == 5


def test_sh_eval_normalisation_on_circle():
    pts = np.array([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(sh_eval(2, 0, 1, pts), 1 / math.sqrt(2 * math.pi))
    assert sh_eval(2, 1, 1, pts)[0] == pytest.approx(1 / math.sqrt(math.pi))


@pytest.mark.parametrize("d,N", [(2, 6), (3, 4)])
def test_basis_is_orthonormal(d, N):
    grid = sphere_grid(d, 2 * N)
    rows = np.concatenate([np.stack([sh_eval(d, n, i, grid.points)
                                     for i in range(1, sh_dim(d, n) + 1)])
                           for n in range(0, N + 1)])
    gram = (rows * grid.weights) @ rows.T
    assert np.allclose(gram, np.eye(rows.shape[0]), atol=1e-12)


@pytest.mark.parametrize("i", range(1, 6))
def test_degree_two_eigenvalue(i, rng):
    pts = unit_points(rng, 3, 50)
    pts = pts[np.abs(pts[:, 2]) < 0.95]
    val = sh_eval(3, 2, i, pts)
    lap = sphere_laplacian_fd(lambda p: sh_eval(3, 2, i, p), pts)
    big = np.abs(val) > 0.05
    assert np.allclose(lap[big] / val[big], -6.0, rtol=1e-3)


def test_expand_examples():
    const = expand_function(lambda p: np.full(p.shape[0], 2.5), 2, 8)
    assert const.mean == pytest.approx(2.5)
    assert const.total_mass() < 1e-24
    y1 = expand_function(lambda p: sh_eval(3, 1, 1, p), 3, 6)
    assert y1.coeffs[1][0] == pytest.approx(1.0, abs=1e-12)
    rest = y1.total_mass() - y1.mass(1) + y1.coeffs[1][1] ** 2 + y1.coeffs[1][2] ** 2
    assert rest < 1e-20
    cos = expand_function(lambda p: p[:, 0], 2, 8)
    assert cos.coeffs[1][0] == pytest.approx(math.sqrt(math.pi), abs=1e-12)
    assert cos.total_mass() - cos.mass(1) < 1e-24


def test_parseval_residual_is_small(rng):
    grid = sphere_grid(3, 16)
    tr = random_trace(rng, 3, 8)
    back = expand_trace(grid, tr.evaluate(grid.points), 8)
    assert abs(back.parseval_residual) < 1e-10
    for n in range(1, 9):
        assert np.allclose(back.coeffs[n], tr.coeffs[n], atol=1e-12)


def test_expand_rejects_coarse_grid():
    with pytest.raises(PreconditionError):
        expand_trace(sphere_grid(2, 10), np.zeros(11), 8)


def test_mode_coefficients_examples():
    A, B = mode_coefficients(2, 1, 0.3)
    assert A == pytest.approx(1 / (0.3 + 1 / 0.3)) and B == pytest.approx(A)
    A, B = mode_coefficients(3, 1, 0.5)
    assert (A, B) == pytest.approx((0.4, 0.2))
    assert A * 0.5 + B * 0.5 ** -2 == pytest.approx(1.0)


def test_mode_energy_examples():
    assert mode_energy(2, 1, 0.0, 0.0, 0.3) == 0.0
    A, B = mode_coefficients(2, 1, 0.3)
    # (1 - r0^2) / (1 + r0^2) exactly
    assert mode_energy(2, 1, A, B, 0.3) == pytest.approx(0.91 / 1.09, rel=1e-14)


def test_constant_trace():
    tr = BoundaryTrace(3, 4, 1.7)
    sol = solve_annulus(tr, 0.3)
    assert sol.modes == {}
    assert np.allclose(sol.evaluate(0.6, unit_points(np.random.default_rng(0), 3, 5)), 1.7)
    rep = total_energy(sol)
    assert rep.total == 0.0 and rep.lower_bound_wirtinger == 0.0
    assert quadrature_energy_oracle(sol) == 0.0


def test_total_energy_for_first_mode():
    sol = solve_annulus(BoundaryTrace.single_mode(2, 1), 0.3)
    rep = total_energy(sol)
    assert rep.total == pytest.approx(0.8348623853211011, rel=1e-14)
    assert rep.lower_bound_wirtinger == pytest.approx(1 / 3)
    assert rep.slack > 0
    assert quadrature_energy_oracle(sol) == pytest.approx(rep.total, rel=1e-6)


@pytest.mark.parametrize("d", [2, 3])
def test_boundary_and_neumann_fidelity(d, rng):
    tr = random_trace(rng, d, 6)
    sol = solve_annulus(tr, 0.35)
    pts = unit_points(rng, d, 200)
    assert np.allclose(sol.evaluate(0.35, pts), tr.evaluate(pts), atol=1e-8)
    for n, (A, B) in sol.modes.items():
        assert A * 0.35 ** n + B * 0.35 ** (2 - d - n) == pytest.approx(1.0, abs=1e-10)
        assert abs(n * A + (2 - d - n) * B) < 1e-10
        r = np.linspace(0.35, 1.0, 7)
        scale = n * (n + d - 2) / r ** 2 * np.abs(sol.radial(n, r))
        assert np.all(np.abs(sol.radial_residual(n, r)) <= 1e-8 * np.maximum(scale, 1.0))


def test_total_is_weighted_sum_of_modes(rng):
    sol = solve_annulus(random_trace(rng, 3, 5), 0.2)
    rep = total_energy(sol)
    again = sum(rep.per_mode[n] * sol.trace.mass(n) for n in sol.modes)
    assert rep.total == pytest.approx(again, rel=1e-12)


def test_per_mode_lower_bound():
    for d in (2, 3, 4):
        for r0 in np.linspace(0.02, 0.49, 12):
            for n in range(1, 20):
                A, B = mode_coefficients(d, n, r0)
                assert mode_energy(d, n, A, B, r0) >= n / 3 * r0 ** (d - 2)


def test_wirtinger_bound_examples(rng):
    assert wirtinger_lower_bound(BoundaryTrace(3, 2, 4.0), 0.3) == 0.0
    tr = random_trace(rng, 2, 5)
    assert wirtinger_lower_bound(tr, 0.1) == wirtinger_lower_bound(tr, 0.4)
    four = BoundaryTrace.single_mode(3, 1, 1, value=2.0)
    assert wirtinger_lower_bound(four, 0.25) == pytest.approx(1 / 3)
    with pytest.warns(OutsideHypothesisWarning):
        wirtinger_lower_bound(four, 0.6)
    assert off_center_lower_bound(four, 0.25, [0.3, 0.0, 0.0]) == pytest.approx(1 / 3)
    with pytest.raises(PreconditionError):
        off_center_lower_bound(four, 0.4, [0.3, 0.0, 0.0])


def test_slack_is_nonnegative_near_half(rng):
    for d in (2, 3):
        for _ in range(10):
            rep = total_energy(solve_annulus(random_trace(rng, d, 8), 0.49))
            assert rep.slack >= -1e-12


def test_harmonic_extension_minimises_energy(rng):
    sol = solve_annulus(random_trace(rng, 2, 4), 0.3)
    grid = sphere_grid(2, 40)
    base = dirichlet_energy(sol.evaluate, 2, 0.3, grid=grid)
    assert base == pytest.approx(total_energy(sol).total, rel=1e-6)
    for _ in range(20):
        a, k, phase = rng.normal(0, 0.3), int(rng.integers(0, 5)), rng.uniform(0, 2 * np.pi)

        def field(r, p, a=a, k=k, phase=phase):
            theta = np.arctan2(p[..., 1], p[..., 0])
            return sol.evaluate(r, p) + a * (r - 0.3) * np.cos(k * theta + phase) * (2 - r)

        assert dirichlet_energy(field, 2, 0.3, grid=grid) >= base - 1e-8


def test_radial_solution_examples():
    A, energy = radial_solution(3, 0.5, 1.0)
    assert A == pytest.approx(0.5)
    assert energy == pytest.approx(math.pi, abs=1e-12)
    assert energy >= radial_constant(3) * 0.125
    assert radial_constant(3) * 0.125 == pytest.approx(4 * math.pi / math.log(4) * 0.125)
    assert radial_solution(4, 0.7, 0.0)[1] == 0.0
    with pytest.raises(PreconditionError):
        radial_solution(2, 0.5, 1.0)
    with pytest.raises(PreconditionError):
        radial_solution(3, 0.2, 1.0)


def test_radial_energy_matches_direct_integral():
    for d in (3, 4, 5):
        r0, delta = 0.6, 0.7
        A, energy = radial_solution(d, r0, delta)
        r, w = np.polynomial.legendre.leggauss(40)
        r = 0.5 * (1 - r0) * r + 0.5 * (1 + r0)
        w = 0.5 * (1 - r0) * w
        deriv = A * (2 - d) * r ** (1 - d)
        assert energy == pytest.approx(sphere_area(d) * np.sum(w * deriv ** 2 * r ** (d - 1)),
                                       rel=1e-12)


def test_level_constant():
    assert level_constant(1e-12) == 101
    assert level_constant(0.5) == 101
    assert level_constant(0.9999) == pytest.approx(2 / (1 - math.sqrt(0.9999)))
    for eps in (0.1, 0.5, 0.99):
        C = level_constant(eps)
        assert C > 100 and (1 - 2 / C) ** 2 >= eps
        assert level_energy_bound(eps, 3, 1.0, 0.5) >= eps * radial_constant(3) * 0.125


def test_oracle_matches_closed_form_in_3d(rng):
    sol = solve_annulus(random_trace(rng, 3, 6), 0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert quadrature_energy_oracle(sol) == pytest.approx(total_energy(sol).total, rel=1e-3)
