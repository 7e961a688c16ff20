import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tugwar.geometry import (
    GeometryError,
    QuadratureRule,
    ball_quadrature,
    coupled_rotation,
    frame_for,
    frames_for,
    full_ball_quadrature,
    project,
    random_unit,
    rotate_in_plane,
    sample_ball,
    sample_flat_ball,
    sphere_directions,
    unit,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def _unit_vectors(n):
    return arrays(float, n, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3).map(
        lambda v: v / np.linalg.norm(v))


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("sign", [1, -1])
def test_frame_first_column_and_determinant(rng, n, sign):
    for nu in random_unit(rng, n, 50):
        P = frame_for(nu, sign)
        assert np.allclose(P[:, 0], nu, atol=0)
        assert np.abs(P.T @ P - np.eye(n)).max() < 1e-12
        assert round(np.linalg.det(P)) == sign


def test_batched_and_scalar_frames_agree(rng):
    nus = random_unit(rng, 4, 20)
    batch = frames_for(nus, 1)
    for k, nu in enumerate(nus):
        assert np.array_equal(batch[k], frame_for(nu, 1))


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 5).flatmap(lambda n: st.tuples(_unit_vectors(n), _unit_vectors(n), _unit_vectors(n),
                                                     st.floats(0, 1))))
def test_coupled_rotation_contracts_flat_ball(args):
    nu_x, nu_z, dirn, rad = args
    cr = coupled_rotation(nu_x, nu_z)
    n = len(nu_x)
    zeta = np.zeros(n)
    zeta[1:] = dirn[1:]
    nz = np.linalg.norm(zeta)
    if nz > 0:
        zeta *= rad / nz
    px, pz = cr.apply(zeta[None])
    assert np.linalg.norm(px - pz) <= np.linalg.norm(nu_x + nu_z) + 1e-10
    assert np.linalg.det(cr.p_x) > 0 > np.linalg.det(cr.p_z)
    assert abs(cr.rho_x @ cr.rho_z + nu_x @ nu_z) < 1e-10


def test_coupled_rotation_opposite_normals_give_identical_images(rng):
    nu = random_unit(rng, 3)
    cr = coupled_rotation(nu, -nu)
    zeta = sample_flat_ball(rng, 3, 100)
    px, pz = cr.apply(zeta)
    assert np.abs(px - pz).max() < 1e-12


def test_coupled_rotation_rejects_non_unit():
    with pytest.raises(GeometryError):
        coupled_rotation([1.0, 1.0], [1.0, 0.0])


@given(arrays(float, 3, elements=finite), _unit_vectors(3))
def test_projection_pythagoras(h, v):
    pr = project(h, v)
    assert math.isclose(pr.h_v ** 2 + pr.h_vperp ** 2, float(h @ h), rel_tol=1e-9, abs_tol=1e-9)
    assert pr.h_vperp >= 0


def test_rotate_in_plane_matches_angle():
    v = np.array([1.0, 0.0, 0.0])
    w = np.array([0.3, 1.0, 0.0])
    out = rotate_in_plane(v, w, 0.2)
    assert math.isclose(out @ v, math.cos(0.2), rel_tol=1e-14)
    assert math.isclose(np.linalg.norm(out), 1.0, rel_tol=1e-14)
    with pytest.raises(GeometryError):
        rotate_in_plane(v, 2 * v, 0.1)


@pytest.mark.parametrize("n,m", [(2, 16), (3, 64), (5, 40)])
def test_flat_rule_symmetric_and_normalized(n, m):
    q = ball_quadrature(n, m)
    assert q.kind == "flat"
    assert np.all(q.nodes[:, 0] == 0)
    assert np.all(np.linalg.norm(q.nodes, axis=1) <= 1)
    assert math.isclose(q.weights.sum(), 1.0, rel_tol=1e-14)
    assert np.abs(q.weights @ q.nodes).max() < 1e-15


@pytest.mark.parametrize("n,m", [(2, 64), (3, 128)])
def test_full_rule_symmetric_and_second_moment(n, m):
    q = full_ball_quadrature(n, m)
    assert np.abs(q.weights @ q.nodes).max() < 1e-15
    # uniform ball: E|y|^2 = n/(n+2)
    m2 = q.weights @ np.sum(q.nodes ** 2, axis=1)
    assert abs(m2 - n / (n + 2)) < 0.02


def test_planar_full_rule_kills_harmonic_quadratics():
    q = full_ball_quadrature(2, 64)
    y = q.nodes
    assert abs(q.integrate(y[:, 0] * y[:, 1])) < 1e-15
    assert abs(q.integrate(y[:, 0] ** 2 - y[:, 1] ** 2)) < 1e-15


def test_quadrature_json_roundtrip():
    q = ball_quadrature(3, 8)
    back = QuadratureRule.from_json(q.to_json())
    assert np.array_equal(back.nodes, q.nodes) and back.kind == "flat"


@pytest.mark.parametrize("bad", [0, 3, -2])
def test_quadrature_rejects_odd_counts(bad):
    with pytest.raises(GeometryError):
        ball_quadrature(2, bad)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sphere_directions_antipodal(n):
    d = sphere_directions(n, 32)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0, atol=1e-12)
    assert np.array_equal(d[0::2], -d[1::2])


def test_samplers_stay_in_their_sets(rng):
    f = sample_flat_ball(rng, 4, 2000)
    b = sample_ball(rng, 4, 2000)
    assert np.all(f[:, 0] == 0) and np.all(np.linalg.norm(f, axis=1) <= 1)
    assert np.all(np.linalg.norm(b, axis=1) <= 1)
    # radial law of the 3-ball: E|zeta|^2 = 3/5
    assert abs(np.mean(np.sum(f ** 2, axis=1)) - 0.6) < 0.03


def test_unit_rejects_long_vector():
    with pytest.raises(GeometryError):
        unit([1.0, 1.0])


def test_batched_coupled_rotations_match_scalar(rng):
    from tugwar.geometry import coupled_rotations

    nx = random_unit(rng, 4, 30)
    nz = random_unit(rng, 4, 30)
    nz[:3] = nx[:3]
    nz[3:6] = -nx[3:6]
    Px, Pz = coupled_rotations(nx, nz)
    for k in range(30):
        cr = coupled_rotation(nx[k], nz[k])
        assert np.array_equal(cr.p_x, Px[k]) and np.array_equal(cr.p_z, Pz[k])
