import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tugwar.coefficients import FULLBALL, ORTHOGONAL, alpha_field, constant_field, radial_holder_field
from tugwar.comparison import (
    ComparisonParams,
    F_eval,
    F_generic,
    F_terms,
    PreconditionError,
    annular_verify,
    annulus_index,
    case1_verify,
    case2_verify,
    constants_recipe,
    f1_increment,
    f2_units,
    f_eval,
    omega_eval,
    recipe_from_field,
    response_into_previous_annulus,
    sample_far_pairs,
    taylor_bound_check,
    taylor_margins,
    verify_suite,
)
from tugwar.dpp import default_quadrature
from tugwar.geometry import random_unit

mp.mp.dps = 50

HOLDER = radial_holder_field(2.5, 0.5, 0.5)


@pytest.fixture(scope="module")
def recipe():
    return recipe_from_field(HOLDER, ORTHOGONAL, r=0.4, sup_u=1.0, C_u=1.0)


def _small_params():
    # hand-sized constants so that f2 stays finite; not admissible, used only for algebra checks
    return ComparisonParams(s=0.5, omega0=2.0, C=3.0, M=0.5, N=40, r=0.4, c_alpha=0.1,
                            alpha_min=0.3, sup_u=1.0, C_u=1.0, delta=1.0)


def _mp_f1(p, x, z, hx=None, hz=None):
    """f1 at (x + hx, z + hz) with the shifts added in extended precision."""
    n = len(x)
    hx = [0.0] * n if hx is None else hx
    hz = [0.0] * n if hz is None else hz
    x = [mp.mpf(float(a)) + mp.mpf(float(b)) for a, b in zip(x, hx)]
    z = [mp.mpf(float(a)) + mp.mpf(float(b)) for a, b in zip(z, hz)]
    t = mp.sqrt(sum((a - b) ** 2 for a, b in zip(x, z)))
    w1 = (1 / (2 * mp.mpf(p.gamma) * p.omega0)) ** (1 / mp.mpf(p.s))
    if t <= w1:
        om = t - p.omega0 * t ** mp.mpf(p.gamma)
    else:
        om = w1 - p.omega0 * w1 ** mp.mpf(p.gamma) + (t - w1) / 2 + p.omega_offset
    return p.C * om + p.M * sum((a + b) ** 2 for a, b in zip(x, z))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.5, 5.0))
def test_omega_shape(s, scale):
    omega0 = scale * 0.5
    p = ComparisonParams(s=s, omega0=omega0, C=1.0, M=1.0, N=40, r=1.0, c_alpha=0.0, alpha_min=1.0, sup_u=1.0)
    t = np.linspace(0, p.omega1, 2001)
    _, d1, d2 = omega_eval(p, t)
    assert d1.min() >= 0.5 - 1e-12 and d1.max() <= 1 + 1e-12
    assert np.all(d2 < 0)
    assert abs(omega_eval(p, p.omega1)[1] - 0.5) < 1e-12


def test_omega_continuous_past_omega1(recipe):
    w1 = recipe.omega1
    lo, hi = omega_eval(recipe, w1)[0], omega_eval(recipe, w1 * (1 + 1e-12))[0]
    assert abs(hi - lo) < 1e-12 + recipe.omega_offset
    with pytest.raises(ValueError):
        omega_eval(recipe, -1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.0, 3.0), st.floats(0.05, 1.0), st.floats(0.05, 1.0),
       st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_recipe_is_admissible(s, c_alpha, alpha_min, r, sup_u, C_u):
    p = constants_recipe(s, c_alpha, alpha_min, r, sup_u, C_u)
    assert p.violations() == []
    assert p.N >= 40 and p.delta == 2 * s


def test_recipe_rejects_bad_inputs():
    with pytest.raises(ValueError):
        constants_recipe(1.0, 0.1, 0.5, 0.4, 1.0, 1.0)
    with pytest.raises(ValueError):
        constants_recipe(0.5, 0.1, 0.0, 0.4, 1.0, 1.0)


def test_annulus_index_edges():
    eps = 0.01
    t = np.array([0.0, 1e-12, 0.001, 0.0010000001, 0.04, 0.0400001])
    assert annulus_index(t, eps, 40).tolist() == [0, 1, 1, 2, 40, 41]


def test_f2_units_against_closed_form():
    p = _small_params()
    eps = 0.01
    t = np.array([0.0, 0.0005, 0.0035, 0.05])
    got = f2_units(p, t, eps, ref=p.N)
    expect = [p.C ** (2 * (p.N - i)) if i <= p.N else 0.0 for i in (0, 1, 4, 50)]
    assert np.allclose(got, expect, rtol=1e-13)
    f, f1, f2 = f_eval(p, [0.001, 0.0], [-0.0025, 0.0], eps)
    assert math.isclose(f2, p.C ** (2 * (p.N - 4)) * eps, rel_tol=1e-12)


def test_f1_increment_against_high_precision(recipe, rng):
    X, Z, eps = sample_far_pairs(recipe, rng, 3, 200)
    H = random_unit(rng, 3, 400) * np.concatenate([eps, eps])[:, None]
    HX, HZ = H[:200] * 0.7, H[200:] * 0.9
    got = f1_increment(recipe, X, Z, HX, HZ)
    for k in range(0, 200, 20):
        ref = _mp_f1(recipe, X[k], Z[k], HX[k], HZ[k]) - _mp_f1(recipe, X[k], Z[k])
        assert abs(got[k] - float(ref)) <= 1e-9 * abs(float(ref)) + 1e-24


def test_taylor_lhs_is_the_true_increment(recipe, rng):
    X, Z, eps = sample_far_pairs(recipe, rng, 2, 50)
    HX = random_unit(rng, 2, 50) * eps[:, None]
    HZ = random_unit(rng, 2, 50) * eps[:, None] * 0.5
    lhs, rhs, margin = taylor_margins(recipe, X, Z, HX, HZ, eps)
    for k in range(0, 50, 7):
        ref = _mp_f1(recipe, X[k], Z[k], HX[k], HZ[k]) - _mp_f1(recipe, X[k], Z[k])
        assert abs(lhs[k] - float(ref)) <= 1e-9 * abs(float(ref))
    assert np.all(margin >= -1e-10)
    assert np.allclose(rhs - lhs, margin, rtol=1e-6, atol=1e-20)


def test_taylor_preconditions(recipe):
    eps = recipe.omega1 / recipe.N
    with pytest.raises(PreconditionError):
        taylor_bound_check(recipe, [0, 0], [1e-9, 0], [0, 0], [0, 0], eps)
    with pytest.raises(PreconditionError):
        taylor_bound_check(recipe, [0, 0], [recipe.omega1 / 2, 0], [2 * eps, 0], [0, 0], eps)


@pytest.mark.parametrize("variant", [ORTHOGONAL, FULLBALL])
def test_F_of_one_is_exactly_one(variant, rng):
    quad = default_quadrature(3, variant)
    for _ in range(50):
        x, z = rng.uniform(-1, 1, (2, 3))
        nx, nz = random_unit(rng, 3, 2)
        a = sorted(rng.uniform(0, 1, 2))
        for al in (a, a[::-1]):
            val = F_generic(lambda X, Z: np.ones(len(X)), x, z, nx, nz, 0.1, al, variant, quad)
            assert val == 1.0


def _F_loop(p, x, z, nu_x, nu_z, eps, alphas, variant, quad):
    """Brute-force F from scalar f_eval on every quadrature node."""
    from tugwar.geometry import coupled_rotation

    ax, az = alphas
    if ax < az:
        x, z, nu_x, nu_z, ax, az = z, x, nu_z, nu_x, az, ax
    f = lambda a, b: f_eval(p, a, b, eps)[0]
    t1 = f(x + eps * nu_x, z + eps * nu_z)
    if variant == FULLBALL:
        px = pz = quad.nodes
    else:
        cr = coupled_rotation(nu_x, nu_z)
        px, pz = quad.nodes @ cr.p_x.T, quad.nodes @ cr.p_z.T
    t2 = sum(w * f(x + eps * a, z + eps * b) for w, a, b in zip(quad.weights, px, pz))
    t3 = sum(w * f(x + eps * nu_x, z + eps * b) for w, b in zip(quad.weights, pz))
    return az * t1 + (1 - ax) * t2 + (ax - az) * t3


@pytest.mark.parametrize("variant", [ORTHOGONAL, FULLBALL])
def test_F_eval_matches_brute_force(variant, rng):
    p = _small_params()
    quad = default_quadrature(2, variant)
    eps = 0.01
    for _ in range(20):
        c = rng.uniform(-0.2, 0.2, 2)
        v = random_unit(rng, 2)
        t = rng.uniform(0.0005, 0.006)
        x, z = c + t / 2 * v, c - t / 2 * v
        nx, nz = random_unit(rng, 2, 2)
        al = rng.uniform(0.2, 0.9, 2)
        got = F_eval(p, x, z, nx, nz, eps, al, variant, quad)
        want = _F_loop(p, x, z, nx, nz, eps, al, variant, quad)
        assert got == pytest.approx(want, rel=1e-10)
        terms = F_terms(p, x, z, nx, nz, eps, al, variant, quad)
        assert terms.minus_f(p, eps) == pytest.approx(want - f_eval(p, x, z, eps)[0], rel=1e-8, abs=1e-12)


def test_response_lands_in_previous_annulus():
    eps = 0.01
    for i in (1, 2, 7, 40):
        t = (i - 0.5) * eps / 10
        nx, nz = response_into_previous_annulus(t, eps)
        x, z = np.array([t / 2, 0.0]), np.array([-t / 2, 0.0])
        t_new = np.linalg.norm((x + eps * nx) - (z + eps * nz))
        assert annulus_index(t_new if t_new > 1e-15 else 0.0, eps, 100) == i - 1


def test_case_checks_with_recipe(recipe, rng):
    quad = default_quadrature(2, ORTHOGONAL)
    X, Z, eps = sample_far_pairs(recipe, rng, 2, 20)
    for x, z, e in zip(X, Z, eps):
        v = (x - z) / np.linalg.norm(x - z)
        al = alpha_field(HOLDER, np.stack([x, z]), ORTHOGONAL)
        assert case1_verify(recipe, x, z, v, -v, e, al, ORTHOGONAL, quad).ok
        with pytest.raises(PreconditionError):
            case1_verify(recipe, x, z, -v, v * 0 + np.array([-v[1], v[0]]), e, al, ORTHOGONAL, quad)
        w = np.array([-v[1], v[0]])
        rep = case2_verify(recipe, x, z, w, w, e, al, ORTHOGONAL, quad)
        assert rep.ok


def test_annular_subset_and_planarity(recipe):
    eps = recipe.omega1 / recipe.N
    quad = default_quadrature(2, ORTHOGONAL)
    rep = annular_verify(recipe, eps, HOLDER, ORTHOGONAL, quad, indices=np.array([1, 2, 3, 1000, recipe.N]))
    assert rep.ok, rep.failures()
    with pytest.raises(PreconditionError):
        annular_verify(recipe, eps, HOLDER, ORTHOGONAL, quad, indices=np.array([0]))
    with pytest.raises(ValueError):
        annular_verify(recipe, eps, radial_holder_field(2.5, 0.5, 0.5, n=3), ORTHOGONAL,
                       default_quadrature(3, ORTHOGONAL))


def test_verify_suite_small():
    fld = constant_field(4.0)
    p = recipe_from_field(fld, FULLBALL, 0.4, 1.0, 1.0)
    out = verify_suite(p, fld, FULLBALL, default_quadrature(2, FULLBALL), samples=100, seed=4, annuli=50)
    assert out["ok"], out
