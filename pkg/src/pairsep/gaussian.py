"""Closed-form precision ratios for Gaussian PSF pairs.

Everything here is expressed through three dimensionless numbers: the photon
imbalance eps, the relative width difference eta = (s2 - s1)/(s1 + s2), and
the dimensionless separation dt = d / sigma_bar with sigma_bar = (s1 + s2)/2.
Ratios are relative to the equal-width optimum

    H_opt = N_tot / (4 sigma_bar^2),

the value the exact precision attains at eps = 0.  (An alternative reference
differing by a factor 4 floats around; this one is the only choice for which
the equal-photon-number ratio reaches exactly 1.)

The exact ratio is a rational-exponential expression that becomes 0/0 as both
eta and dt shrink; it is evaluated here in a rearranged form whose terms are
individually small, so the ratio stays accurate to ~1e-13 even at
eta ~ 1e-8, dt ~ 1e-8.  That matters because the eta -> 0 and dt -> 0 limits
genuinely do not commute when eps != 0: the precision is discontinuous at the
origin of the (eta, dt) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "GaussianScene",
    "AmbiguousLimitError",
    "ratio_samewidth",
    "ratio_general",
    "lambert_w0",
    "extreme_points",
    "ExtremePoints",
    "classify_extrema",
    "ratio_at_maximum",
    "ratio_at_minimum",
    "limit_large_separation",
    "discontinuity_probe",
]


class AmbiguousLimitError(ArithmeticError):
    """Requested the ratio exactly at (eta=0, dt=0) with eps != 0, where the
    iterated limits disagree; see :func:`discontinuity_probe`."""


@dataclass(frozen=True)
class GaussianScene:
    """Two Gaussian sources: widths sigma1, sigma2 and photon imbalance eps."""

    sigma1: float
    sigma2: float
    eps: float = 0.0

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("widths must be positive")
        if not -1.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (-1, 1)")

    @property
    def eta(self) -> float:
        return (self.sigma2 - self.sigma1) / (self.sigma1 + self.sigma2)

    @property
    def sigma_bar(self) -> float:
        return 0.5 * (self.sigma1 + self.sigma2)

    @property
    def sigma_tot(self) -> float:
        return self.sigma1 + self.sigma2

    def d_tilde(self, d: float) -> float:
        return d / self.sigma_bar

    def h_opt(self, n_tot: float) -> float:
        """Reference optimum N_tot / (4 sigma_bar^2)."""
        return n_tot / (4.0 * self.sigma_bar**2)


def _expm1_minus_x(x: float) -> float:
    """e^x - 1 - x to full relative precision (the quantity is ~x^2/2)."""
    if abs(x) > 0.01:
        return math.expm1(x) - x
    total = 0.0
    term = x * x / 2.0
    for k in range(3, 14):
        total += term
        term *= x / k
    return total + term


def ratio_samewidth(eps: float, d_tilde: float, small_d: bool = False) -> float:
    """H_d/H_opt for equal widths; ``small_d`` selects the quadratic-over-quadratic form.

    At dt = 0 the ratio is the eps -> 0 limit value 1 when eps = 0 and the
    vanished (cursed) value 0 otherwise.
    """
    if not -1.0 < eps < 1.0:
        raise ValueError("eps must lie in (-1, 1)")
    dt2 = d_tilde * d_tilde
    if d_tilde == 0.0:
        return 1.0 if eps == 0.0 else 0.0
    if small_d:
        return (1.0 - eps * eps) * dt2 / (8.0 * eps * eps + dt2)
    f4 = 4.0 * _expm1_minus_x(0.25 * dt2)  # = 4 e^{dt^2/4} - dt^2 - 4
    return (1.0 - eps * eps) * f4 / (f4 + eps * eps * dt2)


def _ratio_general_parts(eta: float, eps: float, d_tilde: float) -> tuple[float, float]:
    e2 = eta * eta
    one = 1.0 + e2
    quad = e2 - 2.0 * eta * eps + 1.0
    dt2 = d_tilde * d_tilde
    fw = _expm1_minus_x(dt2 / (4.0 * one))
    # g = (1+eta^2)^2 (eta^2 - 2 eta eps + 1) - (1-eta^2)^3 (1-eps^2), expanded
    # into monomials so nothing catastrophic cancels as eta, eps -> 0.
    g = (
        eps * eps
        - 2.0 * eta * eps
        + 6.0 * e2
        - 3.0 * e2 * eps * eps
        - 4.0 * eta * e2 * eps
        + 3.0 * e2 * e2 * eps * eps
        - 2.0 * eta * e2 * e2 * eps
        + 2.0 * e2 * e2 * e2
        - e2 * e2 * e2 * eps * eps
    )
    num = 4.0 * one**3 * fw + 8.0 * e2 * one**2 + 2.0 * dt2 * (e2 * one + eta * eps * (1.0 - e2))
    den = 4.0 * one**3 * quad * fw + 8.0 * e2 * one**2 * quad + dt2 * g
    return num, den


def ratio_general(scene: GaussianScene, d_tilde: float) -> float:
    """Exact H_d/H_opt for arbitrary Gaussian widths at dimensionless separation dt."""
    eta, eps = scene.eta, scene.eps
    if d_tilde == 0.0 and eta == 0.0:
        if eps == 0.0:
            return 1.0
        raise AmbiguousLimitError(
            "H_d is discontinuous at eta = dt = 0 for eps != 0; "
            "the iterated limits are given by discontinuity_probe(eps)"
        )
    num, den = _ratio_general_parts(eta, eps, d_tilde)
    return (1.0 - eps * eps) * num / den


# ---------------------------------------------------------------------------
# Lambert W and the extreme points of the precision curve
# ---------------------------------------------------------------------------

_BRANCH_POINT = -1.0 / math.e


def lambert_w0(x: float) -> float:
    """Principal branch of w e^w = x for x >= -1/e, by Halley iteration.

    Seeded with log1p(x) away from the branch point and with the branch-point
    series -1 + p - p^2/3 + 11 p^3/72 (p = sqrt(2(e x + 1))) near it; the
    residual |w e^w - x| is driven below 1e-14 * max(1, |x|).
    """
    if math.isnan(x) or x < _BRANCH_POINT * (1.0 + 1e-12) - 1e-300:
        raise ValueError(f"lambert_w0 requires x >= -1/e, got {x}")
    if x <= _BRANCH_POINT:
        return -1.0
    if x - _BRANCH_POINT < 0.05:
        p = math.sqrt(2.0 * (math.e * x + 1.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
    else:
        w = math.log1p(x)
    tol = 1e-14 * max(1.0, abs(x))
    for _ in range(60):
        ew = math.exp(w)
        resid = w * ew - x
        if abs(resid) <= tol:
            return w
        wp1 = w + 1.0
        denom = ew * wp1 - (w + 2.0) * resid / (2.0 * wp1)
        w -= resid / denom
    raise ArithmeticError(f"lambert_w0 failed to reach residual {tol} at x={x}")


@dataclass(frozen=True)
class ExtremePoints:
    """Stationary points of the ratio in dt for fixed eta != 0."""

    maximum: float          # dt = 0
    minimum: float          # dt_2 = 2 sqrt(eta^2+1) sqrt(w0+1)
    minimum_small_eta: float  # leading-order 2 sqrt(2|eta|)


def extreme_points(eta: float) -> ExtremePoints:
    if eta == 0.0 or not -1.0 < eta < 1.0:
        raise ValueError("extreme_points requires 0 < |eta| < 1; "
                         "for equal widths the only extremum is dt = 0")
    e2 = eta * eta
    w0 = lambert_w0((e2 - 1.0) / (math.e * (e2 + 1.0)))
    return ExtremePoints(
        maximum=0.0,
        minimum=2.0 * math.sqrt(e2 + 1.0) * math.sqrt(w0 + 1.0),
        minimum_small_eta=2.0 * math.sqrt(2.0 * abs(eta)),
    )


def classify_extrema(eta: float, eps: float) -> dict[float, str]:
    """Label the stationary points: for eta != 0 the origin is the maximum and
    dt_2 the minimum; for eta = 0 (eps != 0) the origin is the only extremum,
    a minimum."""
    if not -1.0 < eps < 1.0:
        raise ValueError("eps must lie in (-1, 1)")
    if eta == 0.0:
        if eps == 0.0:
            raise ValueError("for eta = 0, eps = 0 the ratio is constant; no extrema to classify")
        return {0.0: "min"}
    pts = extreme_points(eta)
    return {pts.maximum: "max", pts.minimum: "min"}


def ratio_at_maximum(eta: float, eps: float) -> float:
    """Ratio value at dt = 0 (equals the dt -> infinity limit)."""
    return (1.0 - eps * eps) / (eta * eta - 2.0 * eta * eps + 1.0)


def ratio_at_minimum(eta: float, eps: float) -> float:
    """Closed-form ratio value at the interior minimum dt_2."""
    e2 = eta * eta
    w0 = lambert_w0((e2 - 1.0) / (math.e * (e2 + 1.0)))
    quad = e2 - 2.0 * eta * eps + 1.0
    num = (1.0 - eps * eps) * (e2 + w0 * quad + 1.0)
    den = (1.0 - e2) ** 2 * (1.0 - eps * eps) * w0 + (1.0 + e2) * quad
    return num / den


def limit_large_separation(eta: float, eps: float) -> float:
    """dt -> infinity limit of the ratio; coincides with the dt = 0 value."""
    return ratio_at_maximum(eta, eps)


def discontinuity_probe(eps: float) -> tuple[float, float]:
    """The two iterated limits of the ratio at the origin of the (eta, dt) plane.

    Returns (lim_{dt->0} lim_{eta->0}, lim_{eta->0} lim_{dt->0}); they are
    (0, 1 - eps^2) whenever eps != 0 and coincide at 1 for eps = 0.
    """
    if not -1.0 < eps < 1.0:
        raise ValueError("eps must lie in (-1, 1)")
    if eps == 0.0:
        return (1.0, 1.0)
    return (0.0, 1.0 - eps * eps)
