import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncstokes.analysis import (
    broken_h1_seminorm,
    convergence_rate,
    costabel_dauge_beta,
    costabel_dauge_simplified,
    discrete_infsup,
    l2_norm,
    l2_velocity_error,
    named_domain_beta,
    stability_constants,
    successive_rates,
)
from ncstokes.errors import ConfigurationError
from ncstokes.fe_spaces import DiscreteFunction, build_dofmap
from ncstokes.interp import interpolate_cr, interpolate_fs
from ncstokes.mesh import Mesh, build_structured_unit_square

from conftest import perturbed_mesh

H = [5e-2, 2.5e-2, 1.25e-2, 6.25e-3]
TABLE_CR_NONE = [5.66e-1, 1.33e-1, 3.88e-2, 8.40e-3]
TABLE_FS_RT = [2.06e-4, 2.59e-5, 3.40e-6, 4.15e-7]

smooth_u = lambda x: np.stack([np.sin(3 * x[..., 0]) * x[..., 1], np.cos(2 * x[..., 1])], -1)


def _fs_function(mesh, field):
    return DiscreteFunction(build_dofmap(mesh, "FS", ncomp=2), interpolate_fs(field, mesh))


# -- error metrics ------------------------------------------------------------

def test_eps0_zero_exact_branch():
    m = perturbed_mesh(3, 1)
    uh = _fs_function(m, smooth_u)
    err = l2_velocity_error(uh)
    assert err.exact_is_zero
    assert err.eps0 == pytest.approx(l2_norm(uh), rel=1e-14)
    assert err.broken_h1_error == pytest.approx(broken_h1_seminorm(uh), rel=1e-14)
    zero = l2_velocity_error(_fs_function(m, lambda x: np.zeros(x.shape)))
    assert zero.eps0 == 0.0


def test_eps0_against_itself():
    m = perturbed_mesh(3, 2)
    q = lambda x: np.stack([x[..., 0] ** 2, x[..., 0] * x[..., 1] - 1], -1)
    uh = _fs_function(m, q)
    err = l2_velocity_error(uh, exact_u=q)
    assert not err.exact_is_zero
    assert err.eps0 < 1e-13
    assert math.isnan(err.broken_h1_error)
    assert err.eps0 >= 0 and err.l2_pressure_error != err.l2_pressure_error  # no pressure: NaN


def test_eps0_relative_value():
    m = build_structured_unit_square(4)
    uh = _fs_function(m, lambda x: np.zeros(x.shape))
    one = lambda x: np.broadcast_to([1.0, 0.0], x.shape)
    # ||0 - u|| / ||u|| = 1 for any nonzero u
    assert l2_velocity_error(uh, exact_u=one).eps0 == pytest.approx(1.0, rel=1e-14)


def _renumbered(base, rng, full):
    vperm = rng.permutation(base.n_vertices)
    inv = np.argsort(vperm)
    if not full:
        return Mesh(base.vertices[vperm], inv[base.cells])
    cells = inv[base.cells[rng.permutation(base.n_cells)]]
    cells = np.roll(cells, int(rng.integers(3)), axis=1)  # rotates local order, keeps orientation
    return Mesh(base.vertices[vperm], cells)


@given(st.integers(0, 2**31 - 1))
def test_eps0_invariant_under_renumbering(seed):
    base = perturbed_mesh(3, seed)
    rng = np.random.default_rng(seed)
    # a vertex permutation renumbers every vertex and facet dof; cell order and local
    # vertex order enter the FS interpolant itself (Scott-Zhang cell, bubble weights)
    other = _renumbered(base, rng, full=False)
    a = l2_velocity_error(_fs_function(base, smooth_u), exact_u=smooth_u)
    b = l2_velocity_error(_fs_function(other, smooth_u), exact_u=smooth_u)
    assert b.eps0 == pytest.approx(a.eps0, rel=1e-12)
    other = _renumbered(base, rng, full=True)
    cr = lambda m: DiscreteFunction(build_dofmap(m, "CR", ncomp=2), interpolate_cr(smooth_u, m))
    a = l2_velocity_error(cr(base), exact_u=smooth_u)
    b = l2_velocity_error(cr(other), exact_u=smooth_u)
    assert b.eps0 == pytest.approx(a.eps0, rel=1e-12)


# -- rates --------------------------------------------------------------------

def test_rate_synthetic():
    h = np.array(H)
    assert convergence_rate(h, 7 * h**2) == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(successive_rates(h, 7 * h**3), 3.0, atol=1e-12)


def _closed_form_slope(h, e):
    x, y = np.log(h), np.log(e)
    return ((x - x.mean()) * (y - y.mean())).sum() / ((x - x.mean()) ** 2).sum()


def test_rate_published_columns():
    for col, printed in ((TABLE_CR_NONE, 2.05), (TABLE_FS_RT, 2.98)):
        r = convergence_rate(H, col)
        assert r == pytest.approx(_closed_form_slope(np.array(H), np.array(col)), abs=1e-12)
        assert abs(r - printed) <= 0.1
    assert convergence_rate(H, TABLE_CR_NONE) == pytest.approx(2.0000104, abs=1e-6)


def test_single_ratio_rate():
    assert successive_rates(H[:2], TABLE_CR_NONE[:2])[0] == pytest.approx(
        math.log2(5.66e-1 / 1.33e-1), rel=1e-12)


@pytest.mark.parametrize("h,e", [([0.1, 0.0], [1, 2]), ([0.1, 0.05], [1, -2]), ([0.1], [1])])
def test_rate_domain_errors(h, e):
    with pytest.raises(ValueError):
        convergence_rate(h, e)


# -- discrete inf-sup ------------------------------------------------------------

ANCHORS = {
    "CR": (0.780776406404415, 0.6698374784586072, 0.5855438083169883),
    "FS": (0.5, 0.495094751664319, 0.4803972313472369),
}


@pytest.mark.parametrize("fam", ["CR", "FS"])
def test_infsup_anchors_and_trend(fam):
    betas = [discrete_infsup(build_structured_unit_square(n), fam) for n in (2, 4, 8)]
    np.testing.assert_allclose(betas, ANCHORS[fam], rtol=1e-9)
    for a, b in zip(betas, betas[1:]):
        assert abs(a - b) / a < 0.2
    assert all(0 < b <= math.sqrt(2) for b in betas)


def test_infsup_nu_invariant():
    m = build_structured_unit_square(4)
    for fam in ("CR", "FS"):
        assert discrete_infsup(m, fam, nu=1.0) == pytest.approx(discrete_infsup(m, fam, nu=1e-3), rel=1e-9)


def test_infsup_dense_limit():
    with pytest.raises(ConfigurationError):
        discrete_infsup(build_structured_unit_square(40), "CR")


# -- stability constants ---------------------------------------------------------

def test_stability_examples():
    assert stability_constants(1.0, 1.0).c_stab == pytest.approx(1 / 8, rel=1e-15)
    c = 2 * math.sqrt(2)
    expected = 0.25 * (1 / c) / (1 + c) * (1 / 1.0)
    r = stability_constants(c, 1.0)
    assert r.c_stab == pytest.approx(0.25 / (c * (1 + c)), rel=1e-14)
    assert r.c_stab == pytest.approx(expected * 1.0, rel=1e-14)
    assert r.c_stab == pytest.approx(0.02310, abs=5e-5)


@given(st.floats(0.01, 100), st.floats(1e-6, 10))
def test_stability_formulas(c_div, nu):
    r = stability_constants(c_div, nu)
    assert r.c_min == pytest.approx(0.5 * min(c_div**2, 1.0), rel=1e-15)
    assert r.c_max == pytest.approx(c_div * (1 + c_div), rel=1e-15)
    assert r.c_stab == pytest.approx(0.5 * nu * r.c_min / r.c_max, rel=1e-15)
    same = stability_constants(c_div, nu, c_nc=1.0)
    assert same.c_stab == r.c_stab and same.c_div_nc == c_div


@given(st.floats(0.01, 10), st.floats(1, 10))
def test_stability_discrete_uses_product(c_div, c_nc):
    r = stability_constants(c_div, 1.0, c_nc=c_nc)
    assert r.c_stab == pytest.approx(stability_constants(c_div * c_nc, 1.0).c_stab, rel=1e-14)


def test_stability_branch_continuity():
    lo = stability_constants(1 - 1e-12, 1.0).c_stab
    hi = stability_constants(1 + 1e-12, 1.0).c_stab
    assert lo == pytest.approx(hi, rel=1e-10)
    # the two closed forms nu C / (4 (1 + C)) and nu / (4 C (1 + C)) meet at C = 1
    assert 1 / (4 * 2) == pytest.approx(stability_constants(1.0, 1.0).c_stab)


@pytest.mark.parametrize("args", [(0, 1), (1, 0), (-1, 1), (1, 1, 0.5)])
def test_stability_domain_errors(args):
    with pytest.raises(ValueError):
        stability_constants(*args)


def test_named_domains():
    assert named_domain_beta("ball") == 0.5
    assert named_domain_beta("square") == pytest.approx(0.35355, abs=1e-5)
    assert named_domain_beta("l-shape", 2) == pytest.approx(1 / (4 * math.sqrt(2)), rel=1e-15)
    assert costabel_dauge_simplified(1.0, 1.0) == 0.5
    with pytest.raises(ValueError):
        named_domain_beta("torus")
    with pytest.raises(ValueError):
        named_domain_beta("stretched", 0.5)


@given(st.floats(1e-6, 1.0), st.floats(0.1, 10))
def test_costabel_dauge_chain(t, R):
    rho = t * R
    assert costabel_dauge_beta(rho, R) >= costabel_dauge_simplified(rho, R) * (1 - 1e-14)


def test_costabel_dauge_errors():
    with pytest.raises(ValueError):
        costabel_dauge_beta(2.0, 1.0)
    with pytest.raises(ValueError):
        costabel_dauge_simplified(0.0, 1.0)
