import math

import numpy as np
import pytest

from tugwar import boundary
from tugwar.coefficients import ORTHOGONAL, constant_field
from tugwar.comparison import ComparisonParams, recipe_from_field
from tugwar.dpp import Domain, Problem, make_grid
from tugwar.regularity import RegionError, gap_K, lipschitz_modulus, scale_sweep, scatter_rows


def _affine_field(eps=0.1, slope=(0.6, -0.8)):
    dom = Domain.box([-1, -1], [1, 1], eps)
    g = boundary.affine(0.0, slope)
    u = make_grid(dom, eps / 2, g)
    return u.copy_with(g(u.coords()))


def test_modulus_of_affine_field_below_slope():
    u = _affine_field()
    rep = lipschitz_modulus(u, [0, 0], 0.4, pairs=1000, seed=1)
    # |a.(x-z)| / (|x-z| + eps) < |a| = 1, approached by the longest aligned pairs
    assert rep.L_eps < 1.0
    assert rep.L_eps > 0.8 * 0.8 / (0.8 + 0.1)
    assert rep.pair_count > 1000
    assert abs(rep.delta_fit - 1.0) < 0.3


def test_modulus_needs_enough_pairs_and_room():
    u = _affine_field()
    with pytest.raises(ValueError):
        lipschitz_modulus(u, [0, 0], 0.4, pairs=10)
    with pytest.raises(RegionError):
        lipschitz_modulus(u, [0.8, 0], 0.4, pairs=1000)


def test_modulus_is_seed_deterministic():
    u = _affine_field()
    a = lipschitz_modulus(u, [0, 0], 0.3, pairs=1500, seed=9)
    b = lipschitz_modulus(u, [0, 0], 0.3, pairs=1500, seed=9)
    assert a.to_dict() == b.to_dict()


def test_scatter_rows_shapes():
    d, du = scatter_rows(_affine_field(), [0, 0], 0.3, pairs=1000)
    assert d.shape == du.shape and np.all(du <= d + 1e-12)


def test_gap_zero_field_passes():
    u = _affine_field(slope=(0.0, 0.0))
    p = recipe_from_field(constant_field(4.0), ORTHOGONAL, 0.4, 1.0, 1.0)
    rep = gap_K(u, p, [0, 0], 0.4)
    assert rep.passed and rep.excess <= 0 and rep.witness_annulus == 0
    assert math.isinf(rep.K) and rep.to_dict()["K"] is None


def test_gap_detects_a_violating_field():
    # small constants keep T = C^(2N) eps finite (about 1.5e37), so a larger jump breaks the bound
    u = _affine_field(slope=(0.0, 0.0))
    p = ComparisonParams(s=0.5, omega0=2.0, C=3.0, M=0.5, N=40, r=0.4, c_alpha=0.1,
                         alpha_min=0.3, sup_u=1.0)
    vals = u.values.copy()
    pts = u.coords()
    vals[pts[..., 0] > 0.01] = 1e40
    rep = gap_K(u.copy_with(vals), p, [0, 0], 0.4)
    assert not rep.passed and rep.excess > 0


def test_scale_sweep_small():
    prob = Problem(Domain.box([-1, -1], [1, 1], 0.2), constant_field(4.0), ORTHOGONAL,
                   boundary.quadratic_harmonic(), 0.1)
    sw = scale_sweep(prob, [0.2, 0.1], [0, 0], 0.4, pairs=1000)
    assert len(sw.ratios) == 1 and sw.ratios[0] > 0
    assert sw.table()[1]["ratio_to_previous"] == sw.ratios[0]
    with pytest.raises(ValueError):
        scale_sweep(prob, [0.1, 0.2], [0, 0], 0.4)
