"""Point-spread amplitudes, overlaps, and moment integrals."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairsep.psf import (
    GridPsf,
    PsfError,
    amplitude_callable,
    cross_moments,
    direct_integrals,
    grid_psf_from_file,
    grid_psf_from_samples,
    hermite_gauss_mode,
    l2_norm_sq,
    make_gaussian,
    make_perturbed,
    mismatch,
    moment_set,
    momentum_moment,
    overlap_delta,
    overlap_gamma,
    pair_statics,
)

# Gaussian-pair closed forms used as oracles throughout this file.


def gauss_delta(s1, s2, d):
    s = s1 * s1 + s2 * s2
    return math.sqrt(2 * s1 * s2 / s) * math.exp(-d * d / (4 * s))


def gauss_gamma(s1, s2, d):
    s = s1 * s1 + s2 * s2
    return d * math.sqrt(s1 * s2 / (2 * s**3)) * math.exp(-d * d / (4 * s))


class TestMakeGaussian:
    def test_normalized_by_construction(self, unit_gaussian):
        assert abs(l2_norm_sq(unit_gaussian) - 1.0) < 1e-12

    def test_peak_amplitude_sigma1(self, unit_gaussian):
        assert amplitude_callable(unit_gaussian)(0.0) == pytest.approx(
            0.6316187777460647, rel=1e-13
        )

    def test_peak_amplitude_sigma2(self):
        psf = make_gaussian(2.0)
        assert amplitude_callable(psf)(0.0) == pytest.approx(0.44662192086900117, rel=1e-13)

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
    def test_rejects_bad_width(self, bad):
        with pytest.raises(PsfError):
            make_gaussian(bad)


class TestMakePerturbed:
    def test_zero_rotation_is_identity(self, unit_gaussian):
        psf = make_perturbed(unit_gaussian, 0.0, {2: 1.0})
        assert mismatch(unit_gaussian, psf) == pytest.approx(0.0, abs=1e-13)

    def test_overlap_deficit_is_one_minus_cos(self, unit_gaussian):
        psf = make_perturbed(unit_gaussian, 0.1, {2: 1.0})
        assert mismatch(unit_gaussian, psf) == pytest.approx(
            0.0049958347219742339, rel=1e-10
        )

    def test_mode4_variance_asymmetry_is_second_order(self, unit_gaussian):
        # chi ~ theta^2 for the mode-4 perturbation: slope 2 in log-log.
        thetas = [0.2, 0.1, 0.05]
        chis = []
        for th in thetas:
            psf = make_perturbed(unit_gaussian, th, {4: 1.0})
            chis.append(abs(moment_set(unit_gaussian, psf, 0.0).chi))
        slopes = np.diff(np.log(chis)) / np.diff(np.log(thetas))
        assert np.all(np.abs(slopes - 2.0) < 0.2)

    def test_mode2_variance_asymmetry_is_first_order(self, unit_gaussian):
        thetas = [0.08, 0.04, 0.02]
        chis = []
        for th in thetas:
            psf = make_perturbed(unit_gaussian, th, {2: 1.0})
            chis.append(abs(moment_set(unit_gaussian, psf, 0.0).chi))
        slopes = np.diff(np.log(chis)) / np.diff(np.log(thetas))
        assert np.all(np.abs(slopes - 1.0) < 0.15)

    @settings(max_examples=20, deadline=None)
    @given(
        theta=st.floats(min_value=0.0, max_value=1.5),
        w2=st.floats(min_value=-1.0, max_value=1.0),
        w4=st.floats(min_value=-1.0, max_value=1.0),
    )
    def test_normalization_preserved(self, theta, w2, w4):
        if abs(w2) + abs(w4) < 1e-3:
            w2 = 1.0
        psf = make_perturbed(make_gaussian(1.0), theta, {2: w2, 4: w4})
        assert abs(l2_norm_sq(psf) - 1.0) <= 1e-10

    def test_rejects_bad_rotation_angle(self, unit_gaussian):
        with pytest.raises(PsfError):
            make_perturbed(unit_gaussian, math.pi / 2, {2: 1.0})
        with pytest.raises(PsfError):
            make_perturbed(unit_gaussian, -0.1, {2: 1.0})

    def test_rejects_unsupported_mode(self, unit_gaussian):
        with pytest.raises(PsfError):
            make_perturbed(unit_gaussian, 0.1, {3: 1.0})

    def test_hermite_modes_orthonormal(self, unit_gaussian):
        from scipy.integrate import quad

        m2 = hermite_gauss_mode(2, 1.0)
        m4 = hermite_gauss_mode(4, 1.0)
        base = lambda x: amplitude_callable(unit_gaussian)(x)
        assert quad(lambda x: m2.value(x) ** 2, -13, 13)[0] == pytest.approx(1.0, abs=1e-12)
        assert quad(lambda x: m4.value(x) ** 2, -13, 13)[0] == pytest.approx(1.0, abs=1e-12)
        assert quad(lambda x: m2.value(x) * m4.value(x), -13, 13)[0] == pytest.approx(
            0.0, abs=1e-12
        )
        assert quad(lambda x: float(base(x)) * m2.value(x), -13, 13)[0] == pytest.approx(
            0.0, abs=1e-12
        )


class TestOverlaps:
    def test_delta_at_zero_is_one(self, unit_gaussian):
        assert overlap_delta(unit_gaussian, unit_gaussian, 0.0) == pytest.approx(1.0, rel=1e-12)

    def test_delta_identical_at_two(self, unit_gaussian):
        assert overlap_delta(unit_gaussian, unit_gaussian, 2.0) == pytest.approx(
            0.60653065971263342, rel=1e-12
        )

    def test_delta_mixed_widths_at_zero(self, unit_gaussian):
        psf2 = make_gaussian(2.0)
        assert overlap_delta(unit_gaussian, psf2, 0.0) == pytest.approx(
            0.89442719099991588, rel=1e-12
        )

    def test_gamma_vanishes_at_zero(self, unit_gaussian, wide_gaussian):
        assert overlap_gamma(unit_gaussian, wide_gaussian, 0.0) == pytest.approx(0.0, abs=1e-13)

    def test_gamma_identical_at_one(self, unit_gaussian):
        assert overlap_gamma(unit_gaussian, unit_gaussian, 1.0) == pytest.approx(
            0.22062422564614885, rel=1e-12
        )

    def test_gamma_small_d_slope_is_kappa(self, unit_gaussian):
        d = 1e-4
        assert overlap_gamma(unit_gaussian, unit_gaussian, d) / d == pytest.approx(
            0.25, rel=1e-6
        )

    @settings(max_examples=25, deadline=None)
    @given(
        s1=st.floats(min_value=0.5, max_value=2.0),
        s2=st.floats(min_value=0.5, max_value=2.0),
        d=st.floats(min_value=-4.0, max_value=4.0),
    )
    def test_delta_swap_symmetry(self, s1, s2, d):
        p1, p2 = make_gaussian(s1), make_gaussian(s2)
        assert abs(overlap_delta(p1, p2, d) - overlap_delta(p2, p1, -d)) <= 1e-12

    @settings(max_examples=15, deadline=None)
    @given(
        s1=st.floats(min_value=0.5, max_value=2.0),
        s2=st.floats(min_value=0.5, max_value=2.0),
        d=st.floats(min_value=0.0, max_value=5.0),
    )
    def test_gaussian_closed_forms(self, s1, s2, d):
        p1, p2 = make_gaussian(s1), make_gaussian(s2)
        assert overlap_delta(p1, p2, d) == pytest.approx(gauss_delta(s1, s2, d), rel=1e-8)
        if d > 1e-3:
            assert overlap_gamma(p1, p2, d) == pytest.approx(gauss_gamma(s1, s2, d), rel=1e-8)
        assert momentum_moment(p1, 2) == pytest.approx(1.0 / (4 * s1 * s1), rel=1e-8)

    def test_small_d_series_remainders(self, unit_gaussian, wide_gaussian):
        # delta minus its 4th-order series is O(d^6); gamma's remainder O(d^5).
        st_pair = pair_statics(unit_gaussian, wide_gaussian)
        q = 1.0 - st_pair.u
        ds = np.array([0.2, 0.1, 0.05])
        rdelta, rgamma = [], []
        for d in ds:
            series_d = q - 0.5 * st_pair.p2_12 * d * d + st_pair.p4_12 * d**4 / 24.0
            series_g = st_pair.p2_12 * d - st_pair.p4_12 * d**3 / 6.0
            rdelta.append(abs(overlap_delta(unit_gaussian, wide_gaussian, d) - series_d))
            rgamma.append(abs(overlap_gamma(unit_gaussian, wide_gaussian, d) - series_g))
        slope_d = np.diff(np.log(rdelta)) / np.diff(np.log(ds))
        slope_g = np.diff(np.log(rgamma)) / np.diff(np.log(ds))
        assert np.all(np.abs(slope_d - 6.0) < 0.35)
        assert np.all(np.abs(slope_g - 5.0) < 0.35)


class TestMoments:
    def test_gaussian_second_moment(self, unit_gaussian):
        assert momentum_moment(unit_gaussian, 2) == pytest.approx(0.25, rel=1e-12)

    def test_gaussian_fourth_moment(self, unit_gaussian):
        assert momentum_moment(unit_gaussian, 4) == pytest.approx(0.1875, rel=1e-11)

    def test_gaussian_momentum_variance(self, unit_gaussian):
        var = momentum_moment(unit_gaussian, 4) - momentum_moment(unit_gaussian, 2) ** 2
        assert var == pytest.approx(0.125, rel=1e-10)

    def test_unsupported_order(self, unit_gaussian):
        with pytest.raises(PsfError):
            momentum_moment(unit_gaussian, 3)

    def test_cross_moments_identical(self, unit_gaussian):
        p2, p4 = cross_moments(unit_gaussian, unit_gaussian)
        assert p2 == pytest.approx(0.25, rel=1e-12)
        assert p4 == pytest.approx(0.1875, rel=1e-11)

    def test_cross_moment_matches_mpmath_oracle(self, unit_gaussian, wide_gaussian):
        p2, p4 = cross_moments(unit_gaussian, wide_gaussian)
        assert p2 == pytest.approx(0.2032314359346167, rel=1e-12)
        assert p4 == pytest.approx(0.12493735815652666, rel=1e-11)

    def test_cross_moment_matches_displacement_curvature(self, unit_gaussian, wide_gaussian):
        # delta(d) ~ delta(0) - 0.5 <P^2>_12 d^2: fit the quadratic coefficient.
        ds = np.array([0.01, 0.02, 0.04])
        deltas = [overlap_delta(unit_gaussian, wide_gaussian, d) for d in ds]
        coef = np.polyfit(ds**2, deltas, 2)
        p2_fit = -2.0 * coef[1]
        p2, _ = cross_moments(unit_gaussian, wide_gaussian)
        assert p2_fit == pytest.approx(p2, rel=1e-6)

    @settings(max_examples=12, deadline=None)
    @given(sigma=st.floats(min_value=0.5, max_value=2.0), theta=st.floats(min_value=0.0, max_value=0.8))
    def test_momentum_variance_nonnegative(self, sigma, theta):
        psf = make_perturbed(make_gaussian(sigma), theta, {2: 0.6, 4: 0.8})
        assert momentum_moment(psf, 4) >= momentum_moment(psf, 2) ** 2 - 1e-12


class TestMomentSet:
    def test_identical_at_zero_displacement(self, unit_gaussian):
        ms = moment_set(unit_gaussian, unit_gaussian, 0.0)
        assert ms.kappa1 == pytest.approx(0.25, rel=1e-12)
        assert ms.kappa2 == pytest.approx(0.25, rel=1e-12)
        assert ms.chi == pytest.approx(0.0, abs=1e-14)
        assert ms.delta == pytest.approx(1.0, rel=1e-12)
        assert ms.gamma == 0.0
        assert ms.xi == pytest.approx(0.5, rel=1e-12)

    def test_variance_asymmetry_mixed_widths(self, unit_gaussian):
        ms = moment_set(unit_gaussian, make_gaussian(2.0), 0.0)
        assert ms.chi == pytest.approx(-0.6, rel=1e-10)

    def test_full_set_against_closed_forms(self, unit_gaussian, wide_gaussian):
        s1, s2, d = 1.0, 1.2, 0.5
        ms = moment_set(unit_gaussian, wide_gaussian, d)
        s = s1 * s1 + s2 * s2
        q = math.sqrt(2 * s1 * s2 / s)
        assert ms.kappa1 == pytest.approx(0.25, rel=1e-8)
        assert ms.kappa2 == pytest.approx(1 / (4 * s2 * s2), rel=1e-8)
        assert ms.delta == pytest.approx(gauss_delta(s1, s2, d), rel=1e-8)
        assert ms.gamma == pytest.approx(gauss_gamma(s1, s2, d), rel=1e-8)
        assert ms.xi == pytest.approx((q / (2 * s)) / ms.kappa_tot, rel=1e-8)
        assert ms.u == pytest.approx(1.0 - q, rel=1e-8)
        assert abs(ms.delta) <= 1.0
        assert ms.p4_12 >= 0.0

    def test_mismatch_stable_for_tiny_width_difference(self):
        # u ~ eta^2 down to eta = 1e-6 without catastrophic cancellation
        for eta in (1e-3, 1e-6):
            p1 = make_gaussian(1.0 - eta)
            p2 = make_gaussian(1.0 + eta)
            assert mismatch(p1, p2) == pytest.approx(eta * eta, rel=1e-4)


class TestDirectIntegrals:
    def test_gaussian_alpha1(self, unit_gaussian):
        assert direct_integrals(unit_gaussian).alpha1 == pytest.approx(1.0, rel=1e-9)

    def test_gaussian_alpha2(self, unit_gaussian):
        assert direct_integrals(unit_gaussian).alpha2 == pytest.approx(2.0, rel=1e-9)

    def test_alpha2_width_scaling(self):
        assert direct_integrals(make_gaussian(2.0)).alpha2 == pytest.approx(0.125, rel=1e-9)

    def test_all_positive(self, wide_gaussian):
        di = direct_integrals(wide_gaussian)
        assert di.alpha1 > 0 and di.alpha2 > 0 and di.beta > 0

    def test_interior_zero_rejected(self):
        # A pure Hermite-Gauss mode has interior zeros: the 1/I integrand is singular.
        mode = hermite_gauss_mode(2, 1.0)
        x = np.linspace(-14, 14, 2801)
        psf = GridPsf(origin=-14.0, spacing=x[1] - x[0], samples=mode.value(x))
        with pytest.raises(PsfError):
            direct_integrals(psf)


class TestGridIngestion:
    def _samples(self, sigma=1.0, n=1201, half=13.0):
        x = np.linspace(-half, half, n)
        a = (2 * math.pi * sigma**2) ** -0.25 * np.exp(-(x**2) / (4 * sigma**2))
        return x, a

    def test_roundtrip_through_file(self, tmp_path, unit_gaussian):
        x, a = self._samples()
        path = tmp_path / "psf.txt"
        np.savetxt(path, np.column_stack([x, a]))
        psf = grid_psf_from_file(path, renormalize=True)
        assert overlap_delta(psf, unit_gaussian, 0.0) == pytest.approx(1.0, abs=1e-7)
        assert momentum_moment(psf, 2) == pytest.approx(0.25, rel=1e-5)

    def test_nonuniform_spacing_rejected(self):
        x, a = self._samples()
        x = x.copy()
        x[100] += 1e-6
        with pytest.raises(PsfError, match="uniform"):
            grid_psf_from_samples(x, a)

    def test_truncated_support_rejected(self):
        x, a = self._samples(half=3.0)
        with pytest.raises(PsfError, match="decay"):
            grid_psf_from_samples(x, a)

    def test_unnormalized_rejected_without_flag(self):
        x, a = self._samples()
        with pytest.raises(PsfError, match="normalized"):
            grid_psf_from_samples(x, 1.1 * a)
