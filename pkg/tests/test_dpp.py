import math

import numpy as np
import pytest

from tugwar import boundary
from tugwar.coefficients import FULLBALL, ORTHOGONAL, constant_field, radial_holder_field
from tugwar.dpp import (
    INTERIOR,
    STRIP,
    Domain,
    DPPOperator,
    Problem,
    StripTooThinError,
    avg_operator,
    default_quadrature,
    dpp_apply,
    make_grid,
    midrange,
    solve_fixed_point,
)
from tugwar.geometry import sphere_directions


def _affine_grid(n, eps, slope, c0=0.3):
    dom = Domain.box([-1.0] * n, [1.0] * n, eps)
    g = boundary.affine(c0, slope)
    u = make_grid(dom, eps / 2, g)
    exact = g(u.coords())
    return u.copy_with(exact), exact


def test_midrange():
    assert midrange([3.0, -1.0, 7.0]) == 3.0
    with pytest.raises(ValueError):
        midrange([])


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.unit_square(0.3)
    with pytest.raises(ValueError):
        Domain("torus", (0, 0), (1, 1), 0.1)
    d = Domain("ball", (0.0, 0.0), (1.0,), 0.1)
    assert d.contains([0.5, 0.5]) and not d.contains([0.8, 0.8])


def test_grid_regions_and_strip_width():
    dom = Domain.unit_square(0.1)
    u = make_grid(dom, 0.05, boundary.quadratic_harmonic())
    pts = u.coords()
    assert np.array_equal(u.region == INTERIOR, dom.contains(pts))
    strip = pts[u.region == STRIP]
    # the lattice covers the eps-strip around the closure
    assert strip.min() <= -0.1 + 1e-12 and strip.max() >= 1.1 - 1e-12


def test_interpolation_exact_for_affine(rng):
    u, _ = _affine_grid(2, 0.1, [0.7, -0.2])
    pts = rng.uniform(-1, 1, (500, 2))
    assert np.abs(u.interpolate(pts) - (0.3 + pts @ np.array([0.7, -0.2]))).max() < 1e-12


def test_interpolation_outside_hull_raises():
    u, _ = _affine_grid(2, 0.1, [1.0, 0.0])
    with pytest.raises(StripTooThinError):
        u.interpolate(np.array([5.0, 0.0]))


@pytest.mark.parametrize("variant", [ORTHOGONAL, FULLBALL])
@pytest.mark.parametrize("n", [2, 3])
def test_affine_fields_are_fixed(variant, n):
    eps = 0.25 if n == 3 else 0.1
    u, exact = _affine_grid(n, eps, np.linspace(0.4, -0.3, n))
    fld = radial_holder_field(3.0, 0.5, 0.5, n=n)
    op = DPPOperator(u, fld, variant, sphere_directions(n, 32 if n == 2 else 64),
                     default_quadrature(n, variant))
    out = dpp_apply(u, op)
    assert np.abs(out.values - exact).max() <= 1e-10


def test_variant_rule_mismatch_rejected():
    u, _ = _affine_grid(2, 0.1, [1.0, 0.0])
    with pytest.raises(ValueError):
        DPPOperator(u, constant_field(3.0), ORTHOGONAL, quad=default_quadrature(2, FULLBALL))


def test_avg_operator_on_affine():
    u, _ = _affine_grid(2, 0.1, [1.0, 2.0], c0=0.0)
    nu = np.array([0.6, 0.8])
    got = avg_operator(u, [0.1, 0.2], nu, 0.4, default_quadrature(2, ORTHOGONAL))
    # symmetric noise averages to the centre value
    assert math.isclose(got, 0.4 * (0.5 + 0.1 * 2.2) + 0.6 * 0.5, rel_tol=1e-12)


def test_solver_converges_and_respects_maximum_principle():
    prob = Problem(Domain.unit_square(0.1), constant_field(4.0), ORTHOGONAL, boundary.quadratic_harmonic(), 0.05)
    res = solve_fixed_point(prob, tol=1e-10)
    assert res.converged
    g = res.field.strip_values()
    inner = res.field.interior_values()
    assert inner.max() <= g.max() + 1e-12 and inner.min() >= g.min() - 1e-12
    assert res.residual_history[-1] <= 1e-10


def test_solver_shift_and_constant_data():
    dom = Domain.unit_square(0.1)
    fld = constant_field(3.0)
    lo = solve_fixed_point(Problem(dom, fld, ORTHOGONAL, boundary.quadratic_harmonic(), 0.05), tol=1e-10)
    const = solve_fixed_point(Problem(dom, fld, ORTHOGONAL, boundary.constant(-0.7), 0.05), tol=1e-10)
    shifted = boundary.BoundaryDatum(lambda x: boundary.quadratic_harmonic()(x) + 0.25)
    up = solve_fixed_point(Problem(dom, fld, ORTHOGONAL, shifted, 0.05), tol=1e-10)
    assert np.all(const.field.values == -0.7)
    # adding a constant to g adds it to the solution
    assert np.abs(up.field.values - lo.field.values - 0.25).max() < 1e-8


def test_solver_reports_non_convergence():
    prob = Problem(Domain.unit_square(0.1), constant_field(4.0), ORTHOGONAL, boundary.quadratic_harmonic(), 0.05)
    res = solve_fixed_point(prob, tol=1e-14, max_iter=3)
    assert not res.converged and res.iterations == 3 and not res.field.meta["converged"]


def test_problem_to_dict_roundtrip_keys():
    prob = Problem(Domain.unit_square(0.1), constant_field(2.0), FULLBALL, boundary.constant(1.0), 0.05)
    d = prob.to_dict()
    assert d["variant"] == FULLBALL and d["boundary"] == {"kind": "constant", "value": 1.0}


def test_boundary_table_nearest():
    g = boundary.datum_from_spec({"kind": "table", "points": [[0, 0], [1, 1]], "values": [2.0, 5.0]})
    assert np.array_equal(g(np.array([[0.1, 0.0], [0.9, 1.2]])), [2.0, 5.0])
