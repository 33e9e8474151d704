"""Point-spread amplitudes and the scalar integrals the precision formulas consume.

A point-spread function (PSF) here is a real, L2-normalized amplitude psi(x)
on a 1-D image plane; the photon intensity is I(x) = psi(x)^2.  Two kinds are
supported:

* ``GaussianPsf`` -- the analytic Gaussian psi(x) = (2 pi s^2)^(-1/4)
  exp(-x^2 / 4 s^2), width ``sigma = s``.
* ``GridPsf`` -- amplitude samples on a uniform grid (e.g. loaded from a
  measured-PSF file).  Grid PSFs built by :func:`make_perturbed` also carry an
  exact polynomial-times-Gaussian form used to keep moment integrals at full
  precision.

All integrals are done with adaptive Gauss-Kronrod quadrature
(``scipy.integrate.quad``) on analytic amplitudes, and with trapezoid sums /
finite differences on raw grids.  Every function is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial import hermite as nherm
from numpy.polynomial import polynomial as npoly
from scipy import integrate

__all__ = [
    "PsfError",
    "GaussianPsf",
    "GridPsf",
    "Psf",
    "MomentSet",
    "DirectImagingIntegrals",
    "make_gaussian",
    "make_perturbed",
    "hermite_gauss_mode",
    "grid_psf_from_samples",
    "grid_psf_from_file",
    "overlap_delta",
    "overlap_gamma",
    "momentum_moment",
    "cross_moments",
    "mismatch",
    "moment_set",
    "direct_integrals",
]

# Quadrature/validation tolerances shared across the package.
QUAD_ABS_TOL = 1e-12
QUAD_REL_TOL = 1e-10
NORM_TOL = 1e-10
END_DECAY = 1e-12
INTENSITY_FLOOR_REL = 1e-14
GRID_SPACING_FRACTION = 50  # spacing <= width / 50 for generated grids
SUPPORTED_PERTURBATION_MODES = (2, 4)


class PsfError(ValueError):
    """Invalid PSF construction or an operation outside its domain."""


# ---------------------------------------------------------------------------
# Amplitude representations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolyGaussian:
    """Amplitude of the form (2 pi sigma^2)^(-1/4) * p(u) * exp(-u^2/2), u = x/(sigma*sqrt(2)).

    ``coeffs`` are the power-basis coefficients of p(u).  Derivatives stay in
    the family, so moments of Hermite-Gauss superpositions are exact up to
    quadrature error.  ``unit_norm`` marks amplitudes known to be exactly
    L2-normalized by construction.
    """

    sigma: float
    coeffs: tuple[float, ...]
    unit_norm: bool = False

    def value(self, x):
        u = np.asarray(x, dtype=float) / (self.sigma * math.sqrt(2.0))
        norm = (2.0 * math.pi * self.sigma**2) ** (-0.25)
        return norm * npoly.polyval(u, self.coeffs) * np.exp(-0.5 * u * u)

    def derivative(self) -> "PolyGaussian":
        # d/dx [p(u) e^{-u^2/2}] = (p'(u) - u p(u)) e^{-u^2/2} / (sigma sqrt(2))
        c = np.asarray(self.coeffs, dtype=float)
        dc = npoly.polyder(c) if len(c) > 1 else np.zeros(1)
        shifted = npoly.polymulx(c)
        new = npoly.polysub(dc, shifted) / (self.sigma * math.sqrt(2.0))
        return PolyGaussian(self.sigma, tuple(np.atleast_1d(new)), unit_norm=False)

    def nth_derivative(self, order: int) -> "PolyGaussian":
        out = self
        for _ in range(order):
            out = out.derivative()
        return out

    def support_halfwidth(self) -> float:
        peak = (2.0 * math.pi * self.sigma**2) ** (-0.25) * max(
            1.0, float(np.max(np.abs(self.coeffs)))
        )
        r = 12.0 * self.sigma
        while abs(float(self.value(r))) > 1e-13 * peak and r < 25.0 * self.sigma:
            r += self.sigma
        return r


@dataclass(frozen=True)
class GaussianPsf:
    """Analytic Gaussian amplitude of width ``sigma``."""

    sigma: float

    def __post_init__(self):
        if not (isinstance(self.sigma, (int, float)) and math.isfinite(self.sigma) and self.sigma > 0):
            raise PsfError(f"sigma must be a positive finite number, got {self.sigma!r}")


@dataclass(frozen=True, eq=False)
class GridPsf:
    """Real amplitude sampled on a uniform grid x_i = origin + i*spacing."""

    origin: float
    spacing: float
    samples: np.ndarray
    analytic: PolyGaussian | None = field(default=None, repr=False)

    @property
    def positions(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.samples.size)


Psf = GaussianPsf | GridPsf


def _as_polygauss(psf: Psf) -> PolyGaussian | None:
    if isinstance(psf, GaussianPsf):
        return PolyGaussian(psf.sigma, (1.0,), unit_norm=True)
    return psf.analytic


def support_halfwidth(psf: Psf) -> float:
    if isinstance(psf, GaussianPsf):
        return 12.0 * psf.sigma
    if psf.analytic is not None:
        return psf.analytic.support_halfwidth()
    return max(abs(psf.origin), abs(psf.positions[-1]))


def amplitude_callable(psf: Psf, order: int = 0) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized psi^(order)(x); grid kind falls back to spline interpolation."""
    pg = _as_polygauss(psf)
    if pg is not None:
        return pg.nth_derivative(order).value
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(psf.positions, psf.samples, bc_type="natural")
    dspline = spline.derivative(order) if order else spline
    lo, hi = psf.positions[0], psf.positions[-1]

    def f(x):
        x = np.asarray(x, dtype=float)
        out = dspline(np.clip(x, lo, hi))
        return np.where((x < lo) | (x > hi), 0.0, out)

    return f


# ---------------------------------------------------------------------------
# Quadrature plumbing
# ---------------------------------------------------------------------------


def _quad(f: Callable[[float], float], lo: float, hi: float, points=None) -> float:
    val, _err = integrate.quad(
        f, lo, hi, epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=400, points=points
    )
    return val


def _pair_interval(psf1: Psf, psf2: Psf, d: float) -> tuple[float, float]:
    r1 = support_halfwidth(psf1)
    r2 = support_halfwidth(psf2)
    return (-max(r1, r2 + abs(d)), max(r1, r2 + abs(d)))


def _grid_pair(psf1: Psf, psf2: Psf, d: float):
    """Common evaluation grid for pairs involving a raw-grid PSF."""
    spacings = [p.spacing for p in (psf1, psf2) if isinstance(p, GridPsf)]
    widths = []
    for p in (psf1, psf2):
        if isinstance(p, GaussianPsf):
            widths.append(p.sigma)
        elif p.analytic is not None:
            widths.append(p.analytic.sigma)
    dx = min(spacings) if spacings else min(widths) / GRID_SPACING_FRACTION
    lo, hi = _pair_interval(psf1, psf2, d)
    n = int(math.ceil((hi - lo) / dx)) + 1
    return np.linspace(lo, hi, n)


def l2_norm_sq(psf: Psf) -> float:
    if isinstance(psf, GridPsf) and psf.analytic is None:
        return float(np.trapezoid(psf.samples**2, dx=psf.spacing))
    f = amplitude_callable(psf)
    r = support_halfwidth(psf)
    return _quad(lambda x: float(f(x)) ** 2, -r, r)


def _exactly_normalized(psf: Psf) -> bool:
    if isinstance(psf, GaussianPsf):
        return True
    pg = _as_polygauss(psf)
    return pg is not None and pg.unit_norm


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def make_gaussian(sigma: float) -> GaussianPsf:
    """Analytic Gaussian PSF, normalized by construction."""
    return GaussianPsf(float(sigma))


def hermite_gauss_mode(mode: int, sigma: float) -> PolyGaussian:
    """Orthonormal Hermite-Gauss amplitude of the given mode index."""
    herm = np.zeros(mode + 1)
    herm[mode] = 1.0
    coeffs = nherm.herm2poly(herm) / math.sqrt(float(2**mode) * math.factorial(mode))
    return PolyGaussian(float(sigma), tuple(coeffs), unit_norm=True)


def make_perturbed(base: Psf, theta: float, mix: Mapping[int, float]) -> GridPsf:
    """Rotate ``base`` by ``theta`` towards a Hermite-Gauss superposition.

    Returns the normalized amplitude cos(theta)*psi + sin(theta)*phi sampled
    on a uniform grid, where phi is the unit-norm mix of the requested modes
    (orthogonal to the Gaussian base).  The overlap with the base is exactly
    cos(theta).  Mode 2 gives a nonzero <psi|P^2|phi> cross term; mode 4 gives
    a zero one, so the two modes probe different variance-asymmetry scalings.
    """
    if not isinstance(base, GaussianPsf):
        raise PsfError("perturbed PSFs are built from an analytic Gaussian base")
    if not (0.0 <= theta < math.pi / 2):
        raise PsfError(f"theta must lie in [0, pi/2), got {theta}")
    if not mix:
        raise PsfError("mix must contain at least one mode weight")
    for mode in mix:
        if mode not in SUPPORTED_PERTURBATION_MODES:
            raise PsfError(f"unsupported Hermite-Gauss mode index {mode}")
    weights = np.array([float(mix.get(m, 0.0)) for m in SUPPORTED_PERTURBATION_MODES])
    wnorm = float(np.linalg.norm(weights))
    if wnorm == 0.0:
        raise PsfError("mix weights are all zero")
    weights = weights / wnorm

    sigma = base.sigma
    coeffs = npoly.polyzero
    for w, mode in zip(weights, SUPPORTED_PERTURBATION_MODES):
        if w != 0.0:
            coeffs = npoly.polyadd(coeffs, w * np.asarray(hermite_gauss_mode(mode, sigma).coeffs))
    mixed = npoly.polyadd(
        math.cos(theta) * np.asarray([1.0]), math.sin(theta) * np.asarray(coeffs)
    )
    pg = PolyGaussian(sigma, tuple(np.atleast_1d(mixed)), unit_norm=True)

    half = pg.support_halfwidth()
    dx = sigma / GRID_SPACING_FRACTION
    n = int(math.ceil(half / dx))
    x = dx * np.arange(-n, n + 1)
    return GridPsf(origin=float(x[0]), spacing=dx, samples=pg.value(x), analytic=pg)


def grid_psf_from_samples(
    x: np.ndarray, amplitude: np.ndarray, renormalize: bool = False
) -> GridPsf:
    """Build a grid PSF from sampled positions/amplitudes, enforcing the type invariants."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(amplitude, dtype=float)
    if x.ndim != 1 or x.size < 8 or a.shape != x.shape:
        raise PsfError("expected two equal-length 1-D columns with at least 8 samples")
    steps = np.diff(x)
    dx = float(np.mean(steps))
    if dx <= 0 or np.max(np.abs(steps - dx)) > 1e-9 * abs(dx):
        raise PsfError("grid spacing must be uniform to 1e-9 relative")
    peak = float(np.max(np.abs(a)))
    if peak == 0.0:
        raise PsfError("amplitude is identically zero")
    if abs(a[0]) > END_DECAY * peak or abs(a[-1]) > END_DECAY * peak:
        raise PsfError("amplitude must decay below 1e-12 of peak at both grid ends")
    norm = float(np.trapezoid(a * a, dx=dx))
    if renormalize:
        a = a / math.sqrt(norm)
    elif abs(norm - 1.0) > NORM_TOL:
        raise PsfError(f"samples are not L2-normalized: integral = {norm!r}")
    return GridPsf(origin=float(x[0]), spacing=dx, samples=a)


def grid_psf_from_file(path, renormalize: bool = False) -> GridPsf:
    """Read a two-column text file (position, amplitude) into a grid PSF."""
    data = np.loadtxt(path)
    if data.ndim != 2 or data.shape[1] != 2:
        raise PsfError("PSF file must have exactly two columns (x, amplitude)")
    return grid_psf_from_samples(data[:, 0], data[:, 1], renormalize=renormalize)


# ---------------------------------------------------------------------------
# Finite differences for raw grids (4th order)
# ---------------------------------------------------------------------------

_FD_STENCILS = {
    1: (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 1),
    2: (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, 2),
    3: (np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0, 3),
    4: (np.array([-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0]) / 6.0, 4),
}


def fd_derivative(samples: np.ndarray, dx: float, order: int) -> np.ndarray:
    """4th-order central-difference derivative; amplitudes decay at the ends,
    so zero-padding costs less than the end-decay tolerance."""
    stencil, power = _FD_STENCILS[order]
    pad = (len(stencil) - 1) // 2
    padded = np.pad(np.asarray(samples, dtype=float), pad)
    return np.convolve(padded, stencil[::-1], mode="valid") / dx**power


def _grid_samples_and_derivs(psf: Psf, x: np.ndarray, max_order: int) -> list[np.ndarray]:
    """Amplitude and derivatives evaluated on ``x`` (analytic when possible)."""
    pg = _as_polygauss(psf)
    if pg is not None:
        return [pg.nth_derivative(k).value(x) for k in range(max_order + 1)]
    vals = amplitude_callable(psf)(x)
    dx = float(x[1] - x[0])
    return [vals] + [fd_derivative(vals, dx, k) for k in range(1, max_order + 1)]


# ---------------------------------------------------------------------------
# Overlap and moment integrals
# ---------------------------------------------------------------------------


def overlap_delta(psf1: Psf, psf2: Psf, d: float) -> float:
    """Displaced amplitude overlap: integral of psi1(x) psi2(x - d)."""
    p1, p2 = _as_polygauss(psf1), _as_polygauss(psf2)
    if p1 is not None and p2 is not None:
        lo, hi = _pair_interval(psf1, psf2, d)
        return _quad(lambda x: float(p1.value(x)) * float(p2.value(x - d)), lo, hi)
    x = _grid_pair(psf1, psf2, d)
    f1 = amplitude_callable(psf1)(x)
    f2 = amplitude_callable(psf2)(x - d)
    return float(np.trapezoid(f1 * f2, dx=float(x[1] - x[0])))


def overlap_gamma(psf1: Psf, psf2: Psf, d: float) -> float:
    """Displacement-derivative coupling: integral of psi1(x) psi2'(x - d).

    The sign convention makes the result positive for identical PSFs at d > 0
    (it approaches d * <P^2> for small d).
    """
    p1 = _as_polygauss(psf1)
    p2 = _as_polygauss(psf2)
    if p1 is not None and p2 is not None:
        dp2 = p2.derivative()
        lo, hi = _pair_interval(psf1, psf2, d)
        return _quad(lambda x: float(p1.value(x)) * float(dp2.value(x - d)), lo, hi)
    x = _grid_pair(psf1, psf2, d)
    f1 = amplitude_callable(psf1)(x)
    df2 = amplitude_callable(psf2, order=1)(x - d)
    return float(np.trapezoid(f1 * df2, dx=float(x[1] - x[0])))


def _momentum_moment_half(psf: Psf, half_order: int) -> float:
    """<P^(2k)> via the k-th amplitude derivative (real psi, parts integration)."""
    pg = _as_polygauss(psf)
    if pg is not None:
        g = pg.nth_derivative(half_order)
        r = support_halfwidth(psf)
        return _quad(lambda x: float(g.value(x)) ** 2, -r, r)
    dpsi = _grid_samples_and_derivs(psf, psf.positions, half_order)[half_order]
    return float(np.trapezoid(dpsi**2, dx=psf.spacing))


def momentum_moment(psf: Psf, order: int) -> float:
    """Spatial-frequency moment <P^order> for order 2 or 4."""
    if order not in (2, 4):
        raise PsfError(f"unsupported momentum-moment order {order}")
    return _momentum_moment_half(psf, order // 2)


def _cross_moment_half(psf1: Psf, psf2: Psf, half_order: int) -> float:
    p1, p2 = _as_polygauss(psf1), _as_polygauss(psf2)
    if p1 is not None and p2 is not None:
        g1 = p1.nth_derivative(half_order)
        g2 = p2.nth_derivative(half_order)
        lo, hi = _pair_interval(psf1, psf2, 0.0)
        return _quad(lambda x: float(g1.value(x)) * float(g2.value(x)), lo, hi)
    x = _grid_pair(psf1, psf2, 0.0)
    d1 = _grid_samples_and_derivs(psf1, x, half_order)[half_order]
    d2 = _grid_samples_and_derivs(psf2, x, half_order)[half_order]
    return float(np.trapezoid(d1 * d2, dx=float(x[1] - x[0])))


def cross_moments(psf1: Psf, psf2: Psf) -> tuple[float, float]:
    """(<P^2>_12, <P^4>_12) at zero displacement."""
    return (
        _cross_moment_half(psf1, psf2, 1),
        _cross_moment_half(psf1, psf2, 2),
    )


def mismatch(psf1: Psf, psf2: Psf) -> float:
    """1 - <psi1|psi2> at zero displacement, computed without cancellation.

    Uses 1 - <psi1|psi2> = 0.5*||psi1 - psi2||^2 for exactly normalized
    amplitudes, which stays accurate down to mismatches ~1e-30.
    """
    p1, p2 = _as_polygauss(psf1), _as_polygauss(psf2)
    if p1 is not None and p2 is not None:
        lo, hi = _pair_interval(psf1, psf2, 0.0)
        diff_sq = _quad(lambda x: (float(p1.value(x)) - float(p2.value(x))) ** 2, lo, hi)
        u = 0.5 * diff_sq
        if not (_exactly_normalized(psf1) and _exactly_normalized(psf2)):
            u += 0.5 * (l2_norm_sq(psf1) - 1.0) + 0.5 * (l2_norm_sq(psf2) - 1.0)
        return u
    return 1.0 - overlap_delta(psf1, psf2, 0.0)


@dataclass(frozen=True)
class MomentSet:
    """Overlap/moment scalars for a PSF pair at displacement ``d``.

    ``kappa1``/``kappa2`` are the spatial-frequency variances <P^2>_i,
    ``chi`` their relative difference, ``delta``/``gamma`` the displaced
    overlap and its derivative coupling, ``xi`` the cross-variance ratio
    <P^2>_12 / kappa_tot, and ``u`` the zero-displacement mismatch
    1 - <psi1|psi2>.
    """

    kappa1: float
    kappa2: float
    kappa_tot: float
    chi: float
    delta: float
    gamma: float
    xi: float
    p2_12: float
    p4_12: float
    p6_12: float
    p8_12: float
    u: float
    d: float

    @property
    def overlap0(self) -> float:
        """Zero-displacement overlap <psi1|psi2>."""
        return 1.0 - self.u


@dataclass(frozen=True)
class PairStatics:
    """Displacement-independent part of a MomentSet (cacheable per PSF pair)."""

    kappa1: float
    kappa2: float
    p2_12: float
    p4_12: float
    p6_12: float
    p8_12: float
    u: float


def pair_statics(psf1: Psf, psf2: Psf) -> PairStatics:
    return PairStatics(
        kappa1=_momentum_moment_half(psf1, 1),
        kappa2=_momentum_moment_half(psf2, 1),
        p2_12=_cross_moment_half(psf1, psf2, 1),
        p4_12=_cross_moment_half(psf1, psf2, 2),
        p6_12=_cross_moment_half(psf1, psf2, 3),
        p8_12=_cross_moment_half(psf1, psf2, 4),
        u=mismatch(psf1, psf2),
    )


def moment_set(psf1: Psf, psf2: Psf, d: float, statics: PairStatics | None = None) -> MomentSet:
    """Bundle every moment scalar the Fisher formulas need at displacement d."""
    st = statics or pair_statics(psf1, psf2)
    kappa_tot = st.kappa1 + st.kappa2
    return MomentSet(
        kappa1=st.kappa1,
        kappa2=st.kappa2,
        kappa_tot=kappa_tot,
        chi=(st.kappa2 - st.kappa1) / kappa_tot,
        delta=overlap_delta(psf1, psf2, d) if d != 0.0 else 1.0 - st.u,
        gamma=overlap_gamma(psf1, psf2, d) if d != 0.0 else 0.0,
        xi=st.p2_12 / kappa_tot,
        p2_12=st.p2_12,
        p4_12=st.p4_12,
        p6_12=st.p6_12,
        p8_12=st.p8_12,
        u=st.u,
        d=float(d),
    )


# ---------------------------------------------------------------------------
# Direct-imaging intensity integrals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectImagingIntegrals:
    """Intensity-derivative integrals entering the direct-imaging Fisher matrix."""

    alpha1: float  # int (I')^2 / I
    alpha2: float  # int (I'')^2 / I
    beta: float    # int (I')^4 / I^3


def _intensity_support(psf: Psf) -> tuple[float, float]:
    """Interval where I(x) >= floor * max(I); rejects interior zeros."""
    r = support_halfwidth(psf)
    f = amplitude_callable(psf)
    x = np.linspace(-r, r, 4001)
    amp = np.asarray(f(x))
    intensity = amp**2
    peak = float(np.max(intensity))
    above = intensity >= INTENSITY_FLOOR_REL * peak
    idx = np.flatnonzero(above)
    interior = slice(idx[0], idx[-1] + 1)
    sign_changes = np.any(amp[interior][:-1] * amp[interior][1:] < 0.0)
    if sign_changes or not above[interior].all():
        raise PsfError("intensity has zeros interior to its support; integrand is singular")
    return float(x[idx[0]]), float(x[idx[-1]])


def direct_integrals(psf: Psf) -> DirectImagingIntegrals:
    lo, hi = _intensity_support(psf)
    f0 = amplitude_callable(psf, 0)
    f1 = amplitude_callable(psf, 1)
    f2 = amplitude_callable(psf, 2)

    def terms(x: float) -> tuple[float, float, float]:
        a = float(f0(x))
        da = float(f1(x))
        d2a = float(f2(x))
        intensity = a * a
        di = 2.0 * a * da
        d2i = 2.0 * (da * da + a * d2a)
        return intensity, di, d2i

    def g1(x):
        intensity, di, _ = terms(x)
        return di * di / intensity

    def g2(x):
        intensity, _, d2i = terms(x)
        return d2i * d2i / intensity

    def g3(x):
        intensity, di, _ = terms(x)
        return di**4 / intensity**3

    return DirectImagingIntegrals(
        alpha1=_quad(g1, lo, hi),
        alpha2=_quad(g2, lo, hi),
        beta=_quad(g3, lo, hi),
    )
