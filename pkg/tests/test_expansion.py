"""Small-separation series, critical quantities, and regime tables."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scene_for
from pairsep.expansion import (
    RegimeSpec,
    coeffs_general,
    coeffs_identical,
    critical_quantities,
    gaussian_width_family,
    general_dt,
    hd_series,
    perturbed_family,
    regime_ratio,
    regime_verify,
    validate_exponents,
)
from pairsep.fisher import hd_exact_general, hd_exact_identical
from pairsep.psf import make_gaussian, make_perturbed, mismatch, moment_set


class TestIdenticalSeries:
    def test_balanced_limit_recovers_optimum(self, unit_gaussian):
        coeffs = coeffs_identical(unit_gaussian, 0.0)
        assert coeffs.d1 == 0.0
        assert hd_series(coeffs, 0.3) == pytest.approx(0.25, rel=1e-10)

    def test_imbalance_coefficient_value(self, unit_gaussian):
        coeffs = coeffs_identical(unit_gaussian, 0.3)
        assert coeffs.d1 == pytest.approx(12 * 0.09 * 0.25, rel=1e-10)

    def test_extreme_imbalance_kills_numerator(self, unit_gaussian):
        coeffs = coeffs_identical(unit_gaussian, 1.0 - 1e-12)
        assert abs(coeffs.c2) < 1e-11

    def test_common_quadratic_cancels(self, unit_gaussian):
        coeffs = coeffs_identical(unit_gaussian, 0.0)
        values = [hd_series(coeffs, d) for d in (0.01, 0.1, 0.5)]
        assert np.ptp(values) < 1e-14

    def test_ratio_bound_when_imbalanced(self, unit_gaussian):
        # D2 d^2 / (D1 + D2 d^2) < 1 whenever D1 > 0
        for eps in (0.1, 0.4, 0.8):
            coeffs = coeffs_identical(unit_gaussian, eps)
            assert coeffs.d1 > 0
            for d in (0.05, 0.2, 0.5):
                bound = coeffs.d2 * d * d / (coeffs.d1 + coeffs.d2 * d * d)
                assert bound < 1.0

    def test_small_d_form_matches_rescaled_ratio(self, unit_gaussian):
        # c2 d^2/(d1 + d2 d^2) tracks (1-eps^2) dt^2/(8 eps^2 + dt^2) * n/4 within 1%
        eps, d = 0.1, 0.2
        coeffs = coeffs_identical(unit_gaussian, eps)
        dt = d / 1.0
        expected = (1 - eps**2) * dt**2 / (8 * eps**2 + dt**2) * 0.25
        assert hd_series(coeffs, d) == pytest.approx(expected, rel=0.01)


class TestGeneralSeries:
    def test_reduces_to_identical_ledger(self, unit_gaussian):
        # identical PSFs: (a0, a2, a4) = -2 (0, 0, c2) and (b0, b2, b4) = -2 (0, d1, d2)
        for eps in (0.0, 0.3):
            gen = coeffs_general(unit_gaussian, unit_gaussian, eps)
            ide = coeffs_identical(unit_gaussian, eps)
            scale = abs(gen.b4)
            assert abs(gen.a0) <= 1e-12 * scale
            assert abs(gen.b0) <= 1e-12 * scale
            assert abs(gen.a2) <= 1e-12 * scale
            assert gen.a4 == pytest.approx(-2.0 * ide.c2, rel=1e-10)
            assert gen.b2 == pytest.approx(-2.0 * ide.d1, rel=1e-10, abs=1e-12)
            assert gen.b4 == pytest.approx(-2.0 * ide.d2, rel=1e-10)

    def test_proportional_to_width_difference_ledger(self, unit_gaussian, wide_gaussian):
        # Gaussian pair: the quartic ledger is a common multiple of the
        # width-parameterized one whose leading entry is
        # 8 (1-eps^2) (s1-s2)^2 (s1^2+s2^2)^2 per photon.
        s1, s2, eps = 1.0, 1.2, 0.0
        ssum = s1 * s1 + s2 * s2
        prod = s1 * s2
        bracket = s1 * s1 * (1 + eps) + s2 * s2 * (1 - eps)
        width_ledger = np.array(
            [
                8 * (1 - eps**2) * (s1 - s2) ** 2 * ssum**2,
                16 * (s1 - s2) ** 2 * ssum**2 * bracket,
                4 * (1 - eps**2) * (ssum**2 - 2 * prod * bracket),
                8 * (ssum**2 * bracket - 8 * prod**3 * (1 - eps**2)),
                ssum * (1 - eps**2),
                2 * ssum * bracket,
            ]
        )
        gen = coeffs_general(unit_gaussian, wide_gaussian, eps)
        ours = np.array([gen.a0, gen.b0, gen.a2, gen.b2, gen.a4, gen.b4])
        ratios = ours / width_ledger
        assert np.ptp(ratios) <= 1e-8 * abs(ratios.mean())
        assert gen.a0 / gen.b0 == pytest.approx(width_ledger[0] / width_ledger[1], rel=1e-10)

    def test_leading_coefficients_scale_with_mismatch(self, unit_gaussian):
        # a0 and b0 are both proportional to 1 - <psi1|psi2>^2
        ratios = []
        for s2 in (1.05, 1.1, 1.2):
            other = make_gaussian(s2)
            gen = coeffs_general(unit_gaussian, other, 0.2)
            u = mismatch(unit_gaussian, other)
            ratios.append((gen.a0 / (u * (2 - u)), gen.b0 / (u * (2 - u))))
        a_r = [r[0] for r in ratios]
        b_r = [r[1] for r in ratios]
        assert np.ptp(a_r) / abs(np.mean(a_r)) < 0.02
        assert np.ptp(b_r) / abs(np.mean(b_r)) < 0.01

    def test_zero_separation_limit_matches_exact(self, unit_gaussian, wide_gaussian):
        eps = 0.3
        gen = coeffs_general(unit_gaussian, wide_gaussian, eps)
        sc = scene_for(0.0, eps)
        exact = hd_exact_general(unit_gaussian, wide_gaussian, sc).h_d
        assert gen.a0 / gen.b0 == pytest.approx(exact, rel=1e-10)

    def test_series_remainder_is_sixth_order(self, unit_gaussian, wide_gaussian):
        # at order-one PSF mismatch the series/exact relative error is O(d^6)
        eps = 0.3
        gen = coeffs_general(unit_gaussian, wide_gaussian, eps)
        kt = moment_set(unit_gaussian, wide_gaussian, 0.0).kappa_tot
        dts = np.array([0.2, 0.1, 0.05])
        errs = []
        for dt in dts:
            d = dt / math.sqrt(0.5 * kt)
            sc = scene_for(d, eps)
            exact = hd_exact_general(unit_gaussian, wide_gaussian, sc).h_d
            errs.append(abs(hd_series(gen, d) / exact - 1.0))
        slopes = np.diff(np.log(errs)) / np.diff(np.log(dts))
        assert np.all(np.abs(slopes - 6.0) < 0.6)

    def test_series_both_terms_vanishing_is_an_error(self, unit_gaussian):
        gen = coeffs_general(unit_gaussian, unit_gaussian, 0.0)
        with pytest.raises(ZeroDivisionError):
            hd_series(gen, 0.0)


class TestCriticalQuantities:
    def test_identical_pair_vanishes(self, unit_gaussian):
        cq = critical_quantities(unit_gaussian, unit_gaussian)
        assert (cq.u, cq.chi, cq.xi_gap) == (0.0, pytest.approx(0.0, abs=1e-14), pytest.approx(0.0, abs=1e-14))
        assert cq.scale == pytest.approx(2.0, rel=1e-10)

    def test_width_mismatch_scales_quadratically(self):
        etas = np.array([0.01, 0.02, 0.04])
        us = []
        for eta in etas:
            s2 = 1.0 + 2 * eta / (1 - eta)  # makes (s2-s1)/(s2+s1) = eta for s1=1
            us.append(critical_quantities(make_gaussian(1.0), make_gaussian(s2)).u)
        slopes = np.diff(np.log(us)) / np.diff(np.log(etas))
        assert np.all(np.abs(slopes - 2.0) < 0.05)

    def test_perturbed_mismatch_exact(self, unit_gaussian):
        psf = make_perturbed(unit_gaussian, 0.1, {2: 1.0})
        cq = critical_quantities(unit_gaussian, psf)
        assert cq.u == pytest.approx(1.0 - math.cos(0.1), rel=1e-10)

    def test_exponent_order_bounds_along_sweep(self, unit_gaussian):
        # chi ~ u^p with p in [1/2, 1]; xi_gap ~ u^q with q in [1, 2]
        for mode, expect_chi in ((2, 0.5), (4, 1.0)):
            thetas = [0.1, 0.05, 0.025]
            us, chis, gaps = [], [], []
            for th in thetas:
                psf = make_perturbed(unit_gaussian, th, {mode: 1.0})
                cq = critical_quantities(unit_gaussian, psf)
                us.append(cq.u)
                chis.append(abs(cq.chi))
                gaps.append(abs(cq.xi_gap))
            chi_slope = np.diff(np.log(chis)) / np.diff(np.log(us))
            gap_slope = np.diff(np.log(gaps)) / np.diff(np.log(us))
            assert np.all((chi_slope > 0.45) & (chi_slope < 1.05))
            assert np.all((gap_slope > 0.95) & (gap_slope < 2.05))
            assert np.all(np.abs(chi_slope - expect_chi) < 0.1)


class TestRegimeSpec:
    def test_exponent_constraint_examples(self):
        ok, _ = validate_exponents(RegimeSpec(table="general", h=4, e=2, f=6, s=1))
        assert ok
        bad1 = validate_exponents(RegimeSpec(table="general", h=4, e=1, f=6, s=1))
        assert bad1 == (False, "e < h/2 (e=1, h=4)")
        bad2 = validate_exponents(RegimeSpec(table="general", h=3, e=3, f=7, s=1))
        assert bad2 == (False, "f > 2h (f=7, h=3)")

    @settings(max_examples=40, deadline=None)
    @given(
        h=st.integers(min_value=0, max_value=6),
        e=st.integers(min_value=0, max_value=12),
        f=st.integers(min_value=0, max_value=12),
        s=st.integers(min_value=0, max_value=3),
    )
    def test_validation_matches_inequalities(self, h, e, f, s):
        ok, detail = validate_exponents(RegimeSpec(table="general", h=h, e=e, f=f, s=s))
        assert ok == (h / 2 <= e <= h <= f <= 2 * h)
        assert ok == (detail == "")

    @settings(max_examples=25, deadline=None)
    @given(
        t=st.integers(min_value=0, max_value=4),
        s=st.integers(min_value=0, max_value=3),
        y=st.floats(min_value=-1, max_value=1),
        z=st.floats(min_value=-1, max_value=1),
    )
    def test_json_roundtrip(self, t, s, y, z):
        spec = RegimeSpec(table="gaussian", t=t, s=s, y=y, z=z)
        assert RegimeSpec.from_json(spec.to_json()) == spec

    def test_rejects_bad_exponents(self):
        with pytest.raises(ValueError):
            RegimeSpec(table="gaussian", t=-1, s=0)
        with pytest.raises(ValueError):
            RegimeSpec(table="nonsense", h=1, s=0)


class TestRegimeRatio:
    def test_gaussian_strong_decay_cell(self):
        out = regime_ratio(RegimeSpec(table="gaussian", t=3, s=1, y=1.0))
        assert out.value == pytest.approx(1.0 / 9.0, rel=1e-14)

    def test_general_strong_decay_cell(self, unit_gaussian):
        ms = moment_set(unit_gaussian, unit_gaussian, 0.0)
        out = regime_ratio(RegimeSpec(table="general", h=5, e=3, f=5, s=1, y=1.0), ms)
        assert out.value == pytest.approx(1.0 / 3.0, rel=1e-9)

    def test_unclassified_when_coefficient_missing(self, unit_gaussian):
        ms = moment_set(unit_gaussian, unit_gaussian, 0.0)
        out = regime_ratio(RegimeSpec(table="general", h=2, e=1, f=2, s=0), ms)
        assert out.kind == "unclassified"
        with pytest.raises(ValueError):
            out.ratio

    def test_invalid_exponents_rejected(self):
        with pytest.raises(ValueError, match="constraint"):
            regime_ratio(RegimeSpec(table="general", h=4, e=1, f=6, s=1, y=0.5))

    @settings(max_examples=25, deadline=None)
    @given(
        y=st.floats(min_value=0.1, max_value=1.0),
        z=st.floats(min_value=0.1, max_value=1.0),
    )
    def test_table_conventions_agree(self, y, z, unit_gaussian):
        # the two dimensionless-separation conventions differ by a factor 2,
        # so matching cells agree when y_general = 2 y_gaussian, b = 4^t z^2
        ms = moment_set(unit_gaussian, unit_gaussian, 0.0)
        gau = regime_ratio(RegimeSpec(table="gaussian", t=3, s=1, y=y)).ratio
        gen = regime_ratio(
            RegimeSpec(table="general", h=6, e=3, f=6, s=1, y=2 * y), ms
        ).ratio
        assert gen == pytest.approx(gau, rel=1e-12)
        gau2 = regime_ratio(RegimeSpec(table="gaussian", t=2, s=1, y=y, z=z)).ratio
        gen2 = regime_ratio(
            RegimeSpec(table="general", h=4, e=2, f=4, s=1, y=2 * y, b=16 * z * z), ms
        ).ratio
        assert gen2 == pytest.approx(gau2, rel=1e-12)
        gau3 = regime_ratio(RegimeSpec(table="gaussian", t=1, s=0, y=y, z=z)).ratio
        gen3 = regime_ratio(
            RegimeSpec(table="general", h=2, e=1, f=2, s=0, y=y, b=4 * z * z), ms
        ).ratio
        assert gen3 == pytest.approx(gau3, rel=1e-12)

    def test_curse_and_optimal_cells(self):
        assert regime_ratio(RegimeSpec(table="gaussian", t=2, s=0, y=0.3)).kind == "curse"
        assert regime_ratio(RegimeSpec(table="gaussian", t=1, s=2)).kind == "optimal"
        assert regime_ratio(RegimeSpec(table="general", h=3, e=2, f=4, s=0, y=1.0)).kind == "curse"
        assert (
            regime_ratio(RegimeSpec(table="general", h=2, e=1, f=3, s=2)).kind == "optimal"
        )


class TestRegimeVerify:
    def test_gaussian_finite_width_cell(self):
        spec = RegimeSpec(table="gaussian", t=0, s=0, z=0.3, y=0.2)
        out = regime_verify(spec)
        assert out.limit == pytest.approx(regime_ratio(spec).ratio, abs=1e-3)

    def test_perturbed_family_cell(self, unit_gaussian):
        spec = RegimeSpec(table="general", h=4, e=4, f=4, s=1, b=0.4, y=0.5)
        ms = moment_set(unit_gaussian, unit_gaussian, 0.0)
        out = regime_verify(spec, perturbed_family(spec, mode=4))
        assert out.limit == pytest.approx(regime_ratio(spec, ms).ratio, abs=1e-3)

    def test_schedule_must_decrease(self):
        spec = RegimeSpec(table="gaussian", t=0, s=0, z=0.3, y=0.2)
        with pytest.raises(ValueError, match="decreasing"):
            regime_verify(spec, schedule=(0.1, 0.2))


class TestSeriesQuality:
    def test_identical_scene_accuracy_and_order(self, unit_gaussian):
        # rel err <= 1% at dt = 0.1 and ~4x error growth per dt doubling
        eps = 0.3
        coeffs = coeffs_identical(unit_gaussian, eps)
        errs = {}
        for dt in (0.1, 0.05):
            d = dt / math.sqrt(0.25)
            exact = hd_exact_identical(unit_gaussian, scene_for(d, eps)).h_d
            errs[dt] = abs(hd_series(coeffs, d) / exact - 1.0)
        assert errs[0.1] <= 0.01
        assert 3.0 <= errs[0.1] / errs[0.05] <= 5.0

    def test_nearly_identical_general_scene(self, unit_gaussian):
        other = make_gaussian(1.0005)
        for eps in (0.0, 0.3):
            gen = coeffs_general(unit_gaussian, other, eps)
            kt = moment_set(unit_gaussian, other, 0.0).kappa_tot
            errs = {}
            for dt in (0.1, 0.05):
                d = dt / math.sqrt(0.5 * kt)
                exact = hd_exact_general(unit_gaussian, other, scene_for(d, eps)).h_d
                errs[dt] = abs(hd_series(gen, d) / exact - 1.0)
            assert errs[0.1] <= 0.01
            if errs[0.05] > 0:
                assert 3.0 <= errs[0.1] / errs[0.05] <= 5.0
