import math

import numpy as np
import pytest

from wedgelab.deform import (PinchProfile, PlaneUnion, SearchSpec, angle_threshold_scan,
                             bump_height, bump_set, cone_mesh, epsilon_process, measure_delta,
                             measure_delta_with_error, pinch_map, relative_distance)
from wedgelab.errors import PreconditionError
from wedgelab.grassmann import orthogonal_family, rotated_family
from wedgelab.mesh import SimplicialSet, disc_mesh

FAM = orthogonal_family(2, 2)


def circle(radius, k=400):
    t = 2 * np.pi * np.arange(k) / k
    V = radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    return SimplicialSet(2, 1, V, np.stack([np.arange(k), (np.arange(k) + 1) % k], axis=1))


def test_relative_distance_of_a_set_to_itself():
    E = cone_mesh(FAM, rings=8, sectors=24)
    assert relative_distance(E, E, np.zeros(4), 0.5, family=FAM).value < 1e-15


def test_relative_distance_of_translate():
    E = disc_mesh(np.eye(3)[:, :2], 1.0, rings=16, sectors=48)
    v = np.array([0.01, -0.02, 0.03])
    d = relative_distance(E, E.translated(v), np.zeros(3), 0.5, region="ball")
    assert d.value <= np.linalg.norm(v) / 0.5 + 1e-3


@pytest.mark.parametrize("n", [4, 16, 64])
def test_concentric_circles_become_near(n):
    # only the inner circle meets the unit ball, at distance 2/n from the outer one
    E, F = circle(1 - 1 / n), circle(1 + 1 / n)
    d = relative_distance(E, F, np.zeros(2), 1.0, region="ball")
    assert d.value == pytest.approx(2 / n, rel=1e-3)
    assert not d.vacuous


def test_empty_region_is_flagged():
    E = circle(1.0)
    d = relative_distance(E, E.translated([0.1, 0.0]), np.array([5.0, 5.0]), 1.0, region="ball")
    assert d.value == 0.0 and d.vacuous


def test_plane_union_distance():
    cone = PlaneUnion(FAM).translated([0, 0, 0.5, 0])
    assert cone.distance([[0.3, 0.2, 0.5, 0.0]])[0] == pytest.approx(0.0, abs=1e-15)
    assert cone.distance([[0.0, 0.0, 0.0, 0.0]])[0] == pytest.approx(0.0, abs=1e-15)
    assert cone.distance([[1.0, 0.0, 1.5, 0.0]])[0] == pytest.approx(1.0)


def test_process_on_exact_cone_never_stops():
    trace = epsilon_process(cone_mesh(FAM, rings=16, sectors=64), FAM, 0.009, max_steps=3)
    assert trace.stopped_at == "exhausted"
    assert all(s.best_distance < 1e-12 for s in trace.steps[1:])
    # the polygonal rim is the only error at scale 1
    assert trace.steps[0].best_distance < 0.009


def test_process_follows_a_small_translation():
    eps = 0.009
    w = np.array([0.002, -0.002, 0.001, 0.0015])
    E = cone_mesh(FAM, rings=16, sectors=64).translated(w)
    trace = epsilon_process(E, FAM, eps, max_steps=2)
    assert trace.steps[0].best_distance <= eps
    assert trace.steps[1].witness is not None
    assert np.linalg.norm(trace.steps[1].witness - w) <= eps * 0.5 / 2
    trace.check_chain()


def test_process_stops_at_bump_scale():
    eps, h = 0.008, 0.005
    E = bump_set(FAM, h, 0.01)
    trace = epsilon_process(E, FAM, eps, max_steps=8)
    assert trace.stopped_at != "exhausted"
    assert 0.5 <= trace.r_k / (bump_height(E, FAM) / (2 * eps)) <= 2.0
    assert np.linalg.norm(trace.o_k) <= 12 * eps
    for s in trace.steps:
        if s.witness is not None:
            assert np.linalg.norm(s.witness - s.centre) <= 12 * s.scale * eps


def test_process_preconditions():
    E = cone_mesh(FAM, rings=4, sectors=12)
    with pytest.raises(PreconditionError):
        epsilon_process(E, FAM, 0.02)
    with pytest.raises(PreconditionError, match="coarser"):
        SearchSpec(pitch=2.0)


def test_trace_json_has_full_chain():
    trace = epsilon_process(cone_mesh(FAM, rings=8, sectors=32), FAM, 0.009, max_steps=1)
    obj = trace.to_json()
    assert obj["stopped_at"] == "exhausted"
    assert len(obj["steps"]) == 2 and obj["steps"][1]["scale"] == 0.5


def test_pinch_identity_cases(rng):
    fam = rotated_family(2, 2, 0.4)
    X = rng.uniform(-1, 1, size=(500, 4))
    assert np.array_equal(pinch_map(PinchProfile(0.5, 0.0), fam)(X), X)
    phi = pinch_map(PinchProfile(0.5, 0.8), fam)
    far = X[np.linalg.norm(X, axis=1) >= 0.5]
    assert np.array_equal(phi(far), far)
    assert np.array_equal(phi(np.zeros((1, 4))), np.zeros((1, 4)))


def test_full_pinch_merges_cores():
    fam = rotated_family(2, 2, 0.4)
    phi = pinch_map(PinchProfile(0.5, 1.0, core=0.5), fam)
    c = np.array([[0.1, -0.15], [0.2, 0.0]])
    a = phi(c @ fam.planes[0].basis.T)
    b = phi(c @ fam.planes[1].basis.T)
    assert np.allclose(a, b, atol=1e-14)


@pytest.mark.parametrize("theta", [0.2, 0.8, math.pi / 2])
def test_pinch_lipschitz_constant(theta, rng):
    fam = rotated_family(2, 2, theta)
    phi = pinch_map(PinchProfile(0.4, 0.9), fam)
    X = rng.uniform(-0.6, 0.6, size=(10_000, 4))
    Y = X + rng.normal(scale=rng.choice([1e-3, 1e-1], size=(10_000, 1)), size=(10_000, 4))
    ratio = np.linalg.norm(phi(X) - phi(Y), axis=1) / np.linalg.norm(X - Y, axis=1)
    assert ratio.max() <= phi.lipschitz + 1e-9


def test_pinch_needs_transversal_planes():
    with pytest.raises(PreconditionError):
        pinch_map(PinchProfile(0.3, 0.5), rotated_family(2, 2, 0.4, shared_dim=1))


def test_measure_delta_at_zero_pull_is_exact():
    for theta in (0.2, math.pi / 2):
        assert measure_delta(rotated_family(2, 2, theta), 0.5, PinchProfile(0.3, 0.0), 8) == 0.0


def test_measure_delta_requires_neck_inside_disc():
    with pytest.raises(PreconditionError):
        measure_delta(FAM, 0.3, PinchProfile(0.3, 0.5))


def test_orthogonal_pinch_does_not_gain():
    scan = angle_threshold_scan(2, 2, [math.pi / 2])
    assert all(r.delta >= -r.error_bar for r in scan.rows)
    assert scan.crossover == math.pi / 2


def test_small_angle_pinch_gains():
    delta, err = measure_delta_with_error(rotated_family(2, 2, math.radians(10)), 0.5,
                                          PinchProfile(0.3, 1.0))
    assert delta < -3 * err


def test_scan_examples_and_threads():
    angles = [0.05, 0.3, math.pi / 2]
    one = angle_threshold_scan(2, 2, angles, n_jobs=1)
    two = angle_threshold_scan(2, 2, angles, n_jobs=2)
    assert one == two
    best = one.minimum_by_angle()
    assert best[0.05].decreases
    assert not best[math.pi / 2].decreases
    assert one.crossover is not None and one.crossover > 0.05
    with pytest.raises(PreconditionError):
        angle_threshold_scan(2, 2, angles, profiles=[])


def test_three_dimensional_sheets():
    fam = rotated_family(2, 3, 0.2)
    assert measure_delta(fam, 0.5, PinchProfile(0.3, 0.0), 4) == 0.0
    delta = measure_delta(fam, 0.5, PinchProfile(0.3, 1.0), 6)
    assert np.isfinite(delta)
