import math

import numpy as np
import pytest

from ringscft.basis import eval_basis
from ringscft.observables import (
    COLUMNS,
    density_on_grid,
    energy_report,
    kinetic_energy,
    potential_components,
    sample_pairs,
)
from ringscft.quadrature import GridBasis, QuadGrid


def test_grid_integrates_basis_squares(desk):
    grid = QuadGrid.for_basis(desk.basis, n_theta=12, n_phi=24)
    gb = GridBasis(desk.basis, grid)
    b = desk.basis
    # functions whose extent fits on the grid
    idx = np.nonzero((b.c > 1e-2) & (b.c < 1e5))[0]
    for i in idx[:: max(1, len(idx) // 25)]:
        v = np.zeros(b.size)
        v[i] = 1.0
        assert grid.integrate(gb.orbital(v) ** 2) == pytest.approx(1.0, rel=1e-8)


def test_grid_gradient_by_differences(desk):
    grid = QuadGrid.build(n_r=5, r_min=0.3, r_max=2.0, n_theta=3, n_phi=4)
    gb = GridBasis(desk.basis, grid, derivatives=True)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(desk.size) * (desk.basis.c < 30) * (desk.basis.c > 0.05)
    dr, dt, dp = gb.gradient(v)
    r, th, ph = (a.reshape(grid.n_radial, grid.n_angular) for a in grid.points())
    h = 1e-6

    def f(rr, tt, pp):
        return eval_basis(desk.basis, rr, tt, pp) @ v

    np.testing.assert_allclose(dr, (f(r + h, th, ph) - f(r - h, th, ph)) / (2 * h), atol=1e-6)
    np.testing.assert_allclose(dt, (f(r, th + h, ph) - f(r, th - h, ph)) / (2 * h) / r, atol=1e-6)
    np.testing.assert_allclose(dp, (f(r, th, ph + h) - f(r, th, ph - h)) / (2 * h) / (r * np.sin(th)), atol=1e-6)


def test_hydrogen_decomposition(hydrogen):
    pot = potential_components(hydrogen)
    assert pot["U_ee"][0] + pot["U_sic"][0] == pytest.approx(0.0, abs=1e-12)
    assert pot["U_P"][0] == 0.0
    assert kinetic_energy(hydrogen) == pytest.approx(0.5, abs=1e-5)
    assert pot["U_en"][0] == pytest.approx(-1.0, abs=1e-5)


def test_helium_virial(helium):
    rep = energy_report(helium)
    K, U = rep.total("K"), rep.total("U")
    assert abs(2 * K + U) / K < 1e-3


@pytest.mark.parametrize("fixture", ["hydrogen", "helium", "lithium_sph"])
def test_report_identity_and_sums(fixture, request):
    res = request.getfixturevalue(fixture)
    rep = energy_report(res)
    assert rep.decomposition_residual < 1e-5
    assert rep.F_spectral == pytest.approx(res.free_energy, abs=1e-7)
    for name in COLUMNS:
        assert abs(sum(rep.columns[name]) - rep.total(name)) < 1e-8
    for mu, nm in enumerate(rep.pair_sizes):
        assert rep.pair_norms[mu] == pytest.approx(nm, abs=1e-6)
    d = rep.to_dict()
    assert d["total"]["F"] == pytest.approx(rep.F)
    assert len(d["pairs"]) == len(res.pairs)
    rows = list(rep.rows())
    assert rows[-1][0] == "total"


def test_constraint_ratios(hydrogen, helium):
    for res in (hydrogen, helium):
        rep = energy_report(res)
        assert rep.ratio1 <= 1.0
        assert 0.999 <= rep.ratio2 <= 1.0 + 1e-6


def test_entropy_columns_finite(hydrogen):
    rep = energy_report(hydrogen)
    assert math.isfinite(rep.total("minus_Sc_over_beta"))
    assert math.isfinite(rep.total("minus_St_over_beta"))
    assert rep.floored_nodes >= 0


def test_density_routes_agree_in_shape(helium):
    r = np.array([0.1, 0.5, 1.0, 2.0])
    per, tot = density_on_grid(helium, r, np.full(4, 1.0), np.zeros(4))
    assert per.shape == (1, 4)
    np.testing.assert_allclose(tot, per.sum(axis=0))
    coef, _ = density_on_grid(helium, r, np.full(4, 1.0), np.zeros(4), route="coefficients")
    # the coefficient route carries the projection error of S+ Gamma q
    np.testing.assert_allclose(coef, per, rtol=1e-4, atol=2e-5)
    with pytest.raises(ValueError):
        density_on_grid(helium, r, r, r, route="other")


def test_density_chunking_invariant(lithium_sph):
    rng = np.random.default_rng(5)
    r = rng.uniform(0.01, 6, 101)
    a, _ = density_on_grid(lithium_sph, r, np.full_like(r, 1.0), np.zeros_like(r))
    b, _ = density_on_grid(lithium_sph, r, np.full_like(r, 1.0), np.zeros_like(r), chunk=7)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-300)
    assert a.min() >= 0.0


def test_samples_match_pointwise_density(helium):
    grid = QuadGrid.build(n_r=6, r_min=0.1, r_max=3.0, n_theta=2, n_phi=3)
    s = sample_pairs(helium, grid)[0]
    r, th, ph = grid.points()
    per, _ = density_on_grid(helium, r, th, ph)
    np.testing.assert_allclose(s.density.ravel(), per[0], rtol=1e-12)


def test_default_grid_spans_the_basis(desk):
    b = desk.basis
    grid = QuadGrid.for_basis(b, n_theta=4, n_phi=8)
    assert grid.r[0] <= 1e-2 / np.sqrt(b.c.max()) * (1 + 1e-12)
    assert grid.r[-1] >= 8.0 / np.sqrt(b.c.min()) * (1 - 1e-12)
    gb = GridBasis(b, grid)
    for i in (int(np.argmin(b.c)), int(np.argmax(b.c))):
        v = np.zeros(b.size)
        v[i] = 1.0
        assert grid.integrate(gb.orbital(v) ** 2) == pytest.approx(1.0, rel=1e-8)
