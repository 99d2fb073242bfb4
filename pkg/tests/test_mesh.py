import math

import numpy as np
import pytest

from wedgelab.errors import HypothesisViolation, PreconditionError
from wedgelab.exterior import Frame, Multivector, blade_of_frame
from wedgelab.grassmann import (blade_projection_norm, orthogonal_family, pair_family,
                                random_frames)
from wedgelab.mesh import (SimplicialSet, cube_parameters, default_cell, disc_mesh,
                           point_simplex_distance, projected_image_measure, projection_factors,
                           projection_inequality_report, random_graph_mesh, set_measure,
                           tangent_blade, union)

S2 = 1 / math.sqrt(2)
I4 = np.eye(4)


def square(n=3, lift=0.0, offset=(0.0, 0.0), k=8):
    P, T = cube_parameters((k, k), 0.0, 1.0)
    V = np.zeros((P.shape[0], n))
    V[:, :2] = P + np.asarray(offset)
    V[:, 2] = lift
    return SimplicialSet(n, 2, V, T)


def test_disc_area():
    S = disc_mesh(I4[:, :2], 1.0, rings=50, sectors=100)
    assert S.size >= 9900
    assert set_measure(S) == pytest.approx(math.pi, rel=0.01)


def test_simple_measures():
    tri = SimplicialSet(2, 2, [[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert set_measure(tri) == pytest.approx(0.5)
    two = union(square(offset=(0, 0)), square(offset=(3, 0)))
    assert set_measure(two) == pytest.approx(2.0)


def test_rejects_degenerate_and_bad_indices():
    with pytest.raises(PreconditionError):
        SimplicialSet(3, 2, [[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(PreconditionError):
        SimplicialSet(2, 2, [[0, 0], [1, 0], [0, 1]], [[0, 1, 3]])


def test_text_round_trip(tmp_path):
    S = disc_mesh(I4[:, 1:3], 0.5, rings=3, sectors=8)
    path = tmp_path / "disc.mesh"
    S.save(path)
    back = SimplicialSet.load(path)
    assert np.array_equal(back.vertices, S.vertices)
    assert np.array_equal(back.simplices, S.simplices)
    path.write_text("4 2 3 1\n0 0 0 0\n1 0 0\n")
    with pytest.raises(PreconditionError, match="cannot parse mesh"):
        SimplicialSet.load(path)


def test_tangent_blade_examples():
    tri = SimplicialSet(4, 2, [[0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0]], [[0, 1, 2]])
    xi = tangent_blade(tri, 0)
    assert abs(xi[(1, 2)]) == pytest.approx(1.0)
    u, v = np.array([S2, 0, S2, 0]), np.array([0, S2, 0, S2])
    tilted = SimplicialSet(4, 2, [np.zeros(4), u, u + v], [[0, 1, 2]])
    expected = blade_of_frame(Frame(np.stack([u, v], axis=1)))
    assert abs(tangent_blade(tilted, 0).coeffs @ expected.coeffs) == pytest.approx(1.0)


def test_image_of_disc_in_its_own_plane():
    S = disc_mesh(I4[:, :2], 1.0, rings=40, sectors=120)
    assert projected_image_measure(S, I4[:, :2]) == pytest.approx(set_measure(S), rel=0.01)


def test_image_of_orthogonal_disc_vanishes():
    S = disc_mesh(I4[:, :2], 1.0, rings=10, sectors=40)
    assert projected_image_measure(S, I4[:, 2:]) == 0.0


def test_stacked_squares_count_once():
    S = union(square(lift=0.0), square(lift=0.5))
    P = np.eye(3)[:, :2]
    assert projected_image_measure(S, P, cell=1 / 256) == pytest.approx(1.0, rel=0.02)
    assert float(projection_factors(S, P) @ S.volumes) == pytest.approx(2.0)


def test_grid_convergence_on_disc():
    S = disc_mesh(I4[:, :2], 1.0, rings=32, sectors=96)
    h = default_cell(S)
    a = projected_image_measure(S, I4[:, :2], h)
    b = projected_image_measure(S, I4[:, :2], h / 2)
    assert abs(a - b) / b < 0.02


def test_coarse_cell_is_flagged():
    S = disc_mesh(I4[:, :2], 1.0, rings=4, sectors=12)
    with pytest.warns(RuntimeWarning, match="exceeds the median"):
        projected_image_measure(S, I4[:, :2], cell=2.0)


def test_report_for_two_orthogonal_discs():
    fam = orthogonal_family(2, 2)
    S = union(*[disc_mesh(p, 1.0, rings=24, sectors=72) for p in fam.planes])
    rep = projection_inequality_report(S, fam, 1.0)
    assert rep.chain_holds
    assert rep.image_sum == pytest.approx(set_measure(S), rel=0.01)
    assert rep.image_sum <= rep.lambda_bound * 1.03


def test_report_for_tilted_graph(rng):
    fam = orthogonal_family(2, 2)
    S = random_graph_mesh(rng, fam.planes[0], fam.planes[1].basis, amplitude=0.15)
    rep = projection_inequality_report(S, fam, 1.0)
    assert rep.chain_holds
    assert rep.integrand_bound <= rep.lambda_bound
    # the image of a square on a grid overshoots by about perimeter * cell / 2
    assert rep.image_sum <= rep.lambda_bound * 1.03


def test_report_names_violating_simplex():
    # cos^2 a = 0.3 puts the second projection of P^1 at 0.3
    a = math.acos(math.sqrt(0.3))
    fam = pair_family([a, a])
    good = disc_mesh(orthogonal_family(2, 2).planes[1], 0.5, rings=2, sectors=6)
    bad = disc_mesh(fam.planes[0], 0.5, rings=2, sectors=6)
    S = union(good.translated([0, 0, 0, 0.1]), bad)
    with pytest.raises(HypothesisViolation, match="1.3") as info:
        projection_inequality_report(S, fam, 1.0)
    assert info.value.index == good.size


def test_lipschitz_images_do_not_grow(rng):
    S = random_graph_mesh(rng, I4[:, :2], I4[:, 2:], amplitude=0.4, shape=(10, 10))
    for _ in range(10):
        Q = random_frames(rng, 4, 3, 1)[0]
        image = S.transformed(lambda V: V @ Q @ Q.T)
        assert set_measure(image) <= set_measure(S) * (1 + 1e-9)


def test_images_never_exceed_multiplicity_integral(rng):
    S = random_graph_mesh(rng, I4[:, :2], I4[:, 2:], amplitude=0.6, shape=(12, 12))
    for P in random_frames(rng, 4, 2, 4):
        integral = float(projection_factors(S, P) @ S.volumes)
        assert projected_image_measure(S, P, default_cell(S) / 2) <= integral * 1.02


def test_integrand_identity(rng):
    S = random_graph_mesh(rng, I4[:, :2], I4[:, 2:], amplitude=0.5, shape=(4, 4))
    P = random_frames(rng, 4, 2, 1)[0]
    factors = projection_factors(S, P)
    for k in range(S.size):
        F = S.frames[k]
        jac = math.sqrt(max(np.linalg.det(F.T @ P @ P.T @ F), 0.0))
        assert jac == pytest.approx(factors[k], abs=1e-10)
        assert blade_projection_norm(P, tangent_blade(S, k)) == pytest.approx(factors[k], abs=1e-10)


def test_distance_against_dense_sampling(rng):
    S = random_graph_mesh(rng, I4[:, :2], I4[:, 2:], amplitude=0.3, shape=(6, 6))
    pts = rng.uniform(-1.2, 1.2, size=(40, 4))
    exact = S.distance(pts)
    # barycentric sampling of every simplex gives upper bounds
    w = np.array([(a, b, 30 - a - b) for a in range(31) for b in range(31 - a)]) / 30
    dense = np.einsum("kj,sjn->skn", w, S.vertices[S.simplices]).reshape(-1, 4)
    sampled = np.min(np.linalg.norm(pts[:, None, :] - dense[None], axis=-1), axis=1)
    assert np.all(exact <= sampled + 1e-12)
    assert np.all(sampled - exact < 0.02)


def test_point_simplex_distance_cases():
    tri = np.array([[[0.0, 0, 0], [1, 0, 0], [0, 1, 0]]] * 3)
    pts = np.array([[0.2, 0.2, 1.0], [2.0, 0.0, 0.0], [-1.0, -1.0, 0.0]])
    assert np.allclose(point_simplex_distance(pts, tri), [1.0, 1.0, math.sqrt(2)])
