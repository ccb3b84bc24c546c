import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gexp.core import (
    AxiomSample,
    CapacityPair,
    ScalarTestFunction,
    UpperLowerPair,
    VolatilityBand,
    axiom_report,
    conjugate,
    g_eval,
    mollified_indicator,
    running_max_abs_functional,
    terminal_functional,
)
from gexp.lattice import StepFamily, WalkSpec, exact_walk_value


class TestVolatilityBand:
    def test_valid_and_degenerate(self):
        b = VolatilityBand(0.5, 1.0)
        assert not b.is_degenerate and b.width == 0.5
        assert VolatilityBand(1.0, 1.0).is_degenerate
        assert VolatilityBand(0.0, 0.0).is_degenerate

    @pytest.mark.parametrize("lo,hi", [(-0.1, 1.0), (1.0, 0.5), (0.5, math.inf), (math.nan, 1.0)])
    def test_invalid(self, lo, hi):
        with pytest.raises(ValueError):
            VolatilityBand(lo, hi)


class TestPairs:
    def test_upper_lower_check(self):
        p = UpperLowerPair(upper=1.0, lower=0.25)
        assert p.check(0.0) and p.spread == 0.75
        assert (-p) == UpperLowerPair(upper=-0.25, lower=-1.0)
        assert not UpperLowerPair(upper=0.0, lower=0.1).check(1e-3)
        assert UpperLowerPair(upper=0.0, lower=1e-4).check(1e-3)

    def test_capacity_pair_bounds(self):
        CapacityPair(upper_cap=0.7, lower_cap=0.2)
        with pytest.raises(ValueError):
            CapacityPair(upper_cap=1.1, lower_cap=0.2)
        with pytest.raises(ValueError):
            CapacityPair(upper_cap=0.5, lower_cap=0.6)
        clamped = CapacityPair.from_backend(1.0 + 1e-13, -1e-13, tol=1e-9)
        assert clamped.upper_cap == 1.0 and clamped.lower_cap == 0.0
        with pytest.raises(ValueError):
            CapacityPair.from_backend(1.5, 0.0, tol=1e-9)


class TestGEval:
    def test_examples(self, band):
        assert g_eval(band, 2.0) == pytest.approx(1.0, abs=1e-15)
        assert g_eval(band, -2.0) == pytest.approx(-0.25, abs=1e-15)
        assert g_eval(band, 0.0) == 0.0
        assert g_eval(VolatilityBand(0.2, 3.0), 0.0) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(
        alpha=st.floats(-1e6, 1e6, allow_nan=False),
        lam=st.floats(0.0, 1e3, allow_nan=False),
    )
    def test_positive_homogeneity(self, alpha, lam):
        band = VolatilityBand(0.5, 1.0)
        assert g_eval(band, lam * alpha) == pytest.approx(lam * g_eval(band, alpha), rel=1e-12, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(a=st.floats(-1e3, 1e3), b=st.floats(-1e3, 1e3))
    def test_monotone(self, a, b):
        band = VolatilityBand(0.3, 0.9)
        lo, hi = min(a, b), max(a, b)
        assert g_eval(band, lo) <= g_eval(band, hi) + 1e-12

    def test_vectorized(self, band):
        out = g_eval(band, np.array([2.0, -2.0, 0.0]))
        assert np.allclose(out, [1.0, -0.25, 0.0])


class TestConjugate:
    def test_sign_flip(self):
        assert conjugate(0.3) == -0.3

    def test_one_step_walk(self, band):
        fam = StepFamily.from_band(band, 2)
        spec = WalkSpec(n=1, family=fam, scale="raw")
        # phi(x) = x: symmetric family, both sides zero.
        up_x = exact_walk_value(spec, terminal_functional(lambda x: x)).pair
        up_negx = exact_walk_value(spec, terminal_functional(lambda x: -x)).pair
        assert up_x.upper == pytest.approx(0.0, abs=1e-15)
        assert conjugate(up_negx.upper) == pytest.approx(0.0, abs=1e-15)
        # phi(x) = x^2: sup/inf of sigma^2 over the band.
        sq = exact_walk_value(spec, terminal_functional(lambda x: x**2)).pair
        assert sq.upper == pytest.approx(1.0, abs=1e-15)
        assert sq.lower == pytest.approx(0.25, abs=1e-15)
        neg_sq_upper = exact_walk_value(spec, terminal_functional(lambda x: -(x**2))).pair.upper
        assert conjugate(neg_sq_upper) == pytest.approx(sq.lower, abs=1e-15)


class TestMollifiedIndicator:
    def test_above_ramp_endpoints(self):
        outer, inner = mollified_indicator(1.0, "above", 0.5)
        assert outer(0.5) == 0.0 and outer(1.0) == 1.0
        assert inner(1.0) == 0.0 and inner(1.5) == 1.0
        assert outer.lipschitz_const == pytest.approx(1.0 / 0.5)

    def test_below_ramp_endpoints(self):
        outer, inner = mollified_indicator(1.0, "below", 0.5)
        assert outer(1.0) == 1.0 and outer(1.5) == 0.0
        assert inner(0.5) == 1.0 and inner(1.0) == 0.0

    @pytest.mark.parametrize("direction", ["above", "below"])
    @pytest.mark.parametrize("threshold,delta", [(1.0, 0.5), (2.0, 0.1), (0.7, 0.25), (-1.0, 0.5)])
    def test_pointwise_ordering(self, direction, threshold, delta):
        outer, inner = mollified_indicator(threshold, direction, delta)
        y = np.linspace(threshold - 3, threshold + 3, 1000)
        if direction == "above":
            event = (y >= threshold).astype(float)
        else:
            event = (y <= threshold).astype(float)
        assert np.all(inner(y) <= event + 1e-15)
        assert np.all(event <= outer(y) + 1e-15)
        assert np.all(inner(y) <= outer(y) + 1e-15)

    def test_zero_threshold_requires_absolute(self):
        with pytest.raises(ValueError, match="absolute"):
            mollified_indicator(0.0, "above", 0.1)
        outer, inner = mollified_indicator(0.0, "above", 0.1, absolute=True)
        assert outer(-0.1) == 0.0 and outer(0.0) == 1.0 and inner(0.1) == 1.0

    def test_bad_args(self):
        with pytest.raises(ValueError):
            mollified_indicator(1.0, "above", 0.0)
        with pytest.raises(ValueError):
            mollified_indicator(1.0, "sideways", 0.1)

    @settings(max_examples=100, deadline=None)
    @given(
        threshold=st.floats(0.05, 5.0),
        delta=st.floats(0.01, 0.9),
        y=st.floats(-10.0, 10.0),
    )
    def test_ordering_property(self, threshold, delta, y):
        outer, inner = mollified_indicator(threshold, "above", delta)
        event = 1.0 if y >= threshold else 0.0
        assert inner(y) <= event + 1e-12
        assert event <= outer(y) + 1e-12


class TestScalarTestFunction:
    def test_growth_spot_check(self):
        f = ScalarTestFunction(lambda x: x**2, lipschitz_const=2.5, growth_order=1, bounded_flag=False)
        rng = np.random.default_rng(0)
        xs, ys = rng.uniform(-5, 5, 200), rng.uniform(-5, 5, 200)
        assert f.check_growth(xs, ys)
        # A too-small constant fails the spot check.
        g = ScalarTestFunction(lambda x: x**2, lipschitz_const=0.01, growth_order=1, bounded_flag=False)
        assert not g.check_growth(xs, ys)


class TestPathFunctional:
    def test_deterministic_path_value(self):
        f = running_max_abs_functional(lambda m, x: m + 0.1 * x)
        path = np.array([0.0, 0.5, -1.0, 0.25])
        assert f.value_of_path(path) == f.value_of_path(path.copy())
        assert f.value_of_path(path) == pytest.approx(1.0 + 0.1 * 0.25)

    def test_dimension_validation(self):
        from gexp.core import PathFunctional

        with pytest.raises(ValueError):
            PathFunctional(init_summary=0.0, update=None, terminal=lambda s, x: x,
                           summary_dimension=3)


class TestAxiomReport:
    def test_empty_errors(self):
        with pytest.raises(ValueError):
            axiom_report([], tol=1e-9)

    def test_constant_preserving_exact(self, band):
        fam = StepFamily.from_band(band, 2)
        spec = WalkSpec(n=4, family=fam, scale="raw")
        up = exact_walk_value(spec, terminal_functional(lambda x: np.full_like(x, 3.0))).pair.upper
        assert up == 3.0

    def test_homogeneity_at_zero(self, band):
        fam = StepFamily.from_band(band, 2)
        spec = WalkSpec(n=3, family=fam, scale="raw")
        up = exact_walk_value(spec, terminal_functional(lambda x: 0.0 * x)).pair.upper
        assert up == 0.0

    def test_report_flags_violations(self):
        good = AxiomSample(upper_phi=1.0, upper_psi=0.5, upper_sum=1.4, lam=2.0,
                           upper_scaled=2.0, shift=1.0, upper_shifted=2.0, phi_dominates=True)
        bad = AxiomSample(upper_phi=0.4, upper_psi=0.5, upper_sum=1.4, lam=2.0,
                          upper_scaled=0.8, shift=1.0, upper_shifted=1.4, phi_dominates=True)
        rep = axiom_report([good], tol=1e-9)
        assert rep.all_ok and rep.n_dominated_pairs == 1
        rep2 = axiom_report([good, bad], tol=1e-9)
        assert not rep2.monotonicity_ok
        assert rep2.worst_monotonicity == pytest.approx(0.1)
        assert not rep2.subadditivity_ok  # 1.4 > 0.4 + 0.5

    def test_negative_lambda_rejected(self):
        s = AxiomSample(upper_phi=1.0, upper_psi=0.5, upper_sum=1.4, lam=-1.0,
                        upper_scaled=-1.0, shift=0.0, upper_shifted=1.0)
        with pytest.raises(ValueError):
            axiom_report([s], tol=1e-9)
