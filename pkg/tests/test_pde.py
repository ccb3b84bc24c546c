import math

import numpy as np
import pytest

from gexp.core import ScalarTestFunction, VolatilityBand, terminal_functional
from gexp.lattice import SpatialGrid, StepFamily, WalkSpec, grid_walk_value
from gexp.pde import PdeGrid, gnormal_pair, gnormal_value, negate_test_function, solve_gheat

from oracles import gauss_hermite_normal_expectation


def _stf(fn, lip, order=0, bounded=True, name=""):
    return ScalarTestFunction(fn, lipschitz_const=lip, growth_order=order,
                              bounded_flag=bounded, name=name)


SMALL_GRID = PdeGrid(half_width=8.0, points=401, horizon=1.0)


class TestSolveGheat:
    def test_linear_is_steady(self, band):
        phi = _stf(lambda x: x, 1.0, order=1, bounded=False)
        field = solve_gheat(phi, band, SMALL_GRID)
        assert np.max(np.abs(field.values - field.x)) <= 1e-10

    def test_constant_preserved_exactly(self, band):
        phi = _stf(lambda x: np.full_like(x, 2.5), 0.0)
        field = solve_gheat(phi, band, SMALL_GRID)
        assert np.array_equal(field.values, np.full_like(field.x, 2.5))

    def test_quadratic_band_moments(self, band):
        up = solve_gheat(_stf(lambda x: x**2, 16.0, order=1, bounded=False), band, SMALL_GRID)
        assert up.value_at(0.0) == pytest.approx(band.sigma_hi**2, abs=1e-3)
        dn = solve_gheat(_stf(lambda x: -(x**2), 16.0, order=1, bounded=False), band, SMALL_GRID)
        assert dn.value_at(0.0) == pytest.approx(-band.sigma_lo**2, abs=1e-3)
        assert up.truncated_domain  # growing initial data is flagged

    def test_stability_refusal_names_ratio(self, band):
        bad = PdeGrid(half_width=8.0, points=401, horizon=1.0, time_steps=10)
        with pytest.raises(ValueError, match="ratio"):
            solve_gheat(_stf(np.sin, 1.0), band, bad)

    def test_domain_requirement(self, band):
        small = PdeGrid(half_width=3.0, points=401, horizon=1.0)
        with pytest.raises(ValueError, match="half_width"):
            solve_gheat(_stf(np.sin, 1.0), band, small)

    def test_nonfinite_initial_data(self, band):
        phi = _stf(lambda x: np.where(np.abs(x) < 1, np.nan, x), 1.0)
        with pytest.raises(ValueError, match="finite"):
            solve_gheat(phi, band, SMALL_GRID)

    def test_comparison_principle(self, band):
        lo = solve_gheat(_stf(np.sin, 1.0), band, SMALL_GRID)
        hi = solve_gheat(_stf(lambda x: np.sin(x) + 0.05 * np.cos(3 * x) + 0.05, 1.2), band, SMALL_GRID)
        assert np.all(lo.values <= hi.values + 1e-12)

    def test_translation_covariance(self, band):
        a = 16 * SMALL_GRID.spacing  # integer multiple keeps nodes aligned
        base = solve_gheat(_stf(np.sin, 1.0), band, SMALL_GRID)
        shifted = solve_gheat(_stf(lambda x: np.sin(x + a), 1.0), band, SMALL_GRID)
        x = base.x
        interior = np.abs(x) <= 2.0
        want = np.array([base.value_at(xi + a) for xi in x[interior]])
        got = shifted.values[interior]
        assert np.max(np.abs(got - want)) <= 1e-7


class TestGNormalPair:
    def test_quadratic_pair(self, band):
        pair = gnormal_pair(_stf(lambda x: x**2, 16.0, order=1, bounded=False), band, SMALL_GRID)
        assert pair.upper == pytest.approx(1.0, abs=1e-3)
        assert pair.lower == pytest.approx(0.25, abs=1e-3)

    def test_degenerate_band_matches_quadrature(self, unit_band):
        for fn, lip in ((np.sin, 1.0), (lambda x: 1.0 / (1.0 + x**2), 0.7)):
            pv = gnormal_value(_stf(fn, lip), unit_band, PdeGrid())
            want = gauss_hermite_normal_expectation(fn, 1.0)
            assert pv.pair.upper == pytest.approx(want, abs=1e-4)
            assert pv.pair.lower == pytest.approx(want, abs=1e-4)

    def test_convex_collapse_vs_quadrature(self, band):
        # Convex data sees the upper volatility, concave the lower one; cosh
        # is smooth so the quadrature oracle carries full accuracy, and it
        # cross-checks against the closed form exp(sigma^2/2).
        conv = gnormal_pair(_stf(np.cosh, 30.0, order=1, bounded=False), band, PdeGrid())
        want_up = gauss_hermite_normal_expectation(np.cosh, band.sigma_hi)
        want_lo = gauss_hermite_normal_expectation(np.cosh, band.sigma_lo)
        assert want_up == pytest.approx(math.exp(band.sigma_hi**2 / 2), rel=1e-12)
        assert want_lo == pytest.approx(math.exp(band.sigma_lo**2 / 2), rel=1e-12)
        assert conv.upper == pytest.approx(want_up, abs=1e-3)
        assert conv.lower == pytest.approx(want_lo, abs=1e-3)

    def test_advertised_tolerance_positive(self, band):
        pv = gnormal_value(_stf(np.sin, 1.0), band, SMALL_GRID)
        assert pv.backend_tol > 0
        assert pv.refinement_info["grid_points_pair"] == (401, 801)

    def test_negate_test_function(self):
        phi = _stf(np.sin, 1.0, name="sin")
        neg = negate_test_function(phi)
        x = np.linspace(-2, 2, 11)
        assert np.allclose(neg(x), -np.sin(x))
        assert neg.lipschitz_const == phi.lipschitz_const

    def test_sin_vs_lattice_large_n(self, band):
        # The walk backend at n = 4096 is the independent oracle here.
        phi = _stf(np.sin, 1.0)
        pv = gnormal_value(phi, band)
        fam = StepFamily.from_band(band, 16)
        spec = WalkSpec(n=4096, family=fam, scale="sqrt_n")
        grid = SpatialGrid.for_walk(spec, points_per_step=2)
        dp = grid_walk_value(spec, grid, terminal_functional(np.sin))
        tol = pv.backend_tol + dp.backend_tol
        assert dp.pair.upper == pytest.approx(pv.pair.upper, abs=tol)
        assert dp.pair.lower == pytest.approx(pv.pair.lower, abs=tol)
