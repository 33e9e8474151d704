"""Small-separation machinery: series coefficients, critical quantities, regime tables.

For separations d much smaller than the PSF width the exact precision H_d is
a ratio of two quartic polynomials in d,

    H_d = (A0 + A2 d^2 + A4 d^4) / (B0 + B2 d^2 + B4 d^4),

whose coefficients are built from zero-displacement scalars only.  The limit
d -> 0 of H_d / H_opt is then governed by how fast four small quantities decay
with the dimensionless separation dt:

    1 - <psi1|psi2> = b dt^h,   1/2 - xi = a dt^f,
    chi = c dt^e,               eps = y dt^s,

with integer exponents constrained by h/2 <= e <= h <= f <= 2h.  The regime
tables map (exponents, coefficients) to the limiting ratio; `regime_verify`
confirms a table cell numerically by evaluating the exact precision along a
shrinking schedule of dt and Richardson-extrapolating to dt -> 0.

Two dimensionless-separation conventions coexist and are never mixed
silently: the general analysis uses dt = d * sqrt(<P^2>), the Gaussian-width
analysis uses dt = d / sigma_bar with sigma_bar the mean width.  The
conversion for a Gaussian base is dt_general = dt_gaussian / 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from typing import Callable

from .fisher import SourceScene, hd_exact_general
from .psf import (
    GaussianPsf,
    MomentSet,
    Psf,
    make_gaussian,
    make_perturbed,
    mismatch,
    moment_set,
    pair_statics,
)

__all__ = [
    "IdenticalSeries",
    "GeneralSeries",
    "SeriesCoefficients",
    "CriticalQuantities",
    "RegimeSpec",
    "RegimeOutcome",
    "RegimeVerification",
    "coeffs_identical",
    "coeffs_general",
    "hd_series",
    "critical_quantities",
    "validate_exponents",
    "regime_ratio",
    "regime_verify",
    "gaussian_width_family",
    "perturbed_family",
    "general_dt",
    "gaussian_dt",
]

DEFAULT_SCHEDULE = tuple(0.1 * 0.5**k for k in range(7))


# ---------------------------------------------------------------------------
# Series coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdenticalSeries:
    """H_d ~= c2 d^2 / (d1 + d2 d^2) for identical PSFs (per unit N_tot)."""

    c2: float
    d1: float
    d2: float
    eps: float


@dataclass(frozen=True)
class GeneralSeries:
    """Quartic numerator/denominator coefficients of H_d (per unit N_tot)."""

    a0: float
    a2: float
    a4: float
    b0: float
    b2: float
    b4: float
    eps: float


SeriesCoefficients = IdenticalSeries | GeneralSeries


def coeffs_identical(psf: Psf, eps: float) -> IdenticalSeries:
    """Series coefficients for identical PSFs: c2 = 3(1-eps^2)<P^2>Var(P^2), etc."""
    st = pair_statics(psf, psf)
    p2 = st.p2_12
    p4 = st.p4_12
    var = p4 - p2 * p2
    return IdenticalSeries(
        c2=3.0 * (1.0 - eps**2) * p2 * var,
        d1=12.0 * eps**2 * p2,
        d2=3.0 * var - 4.0 * eps**2 * p4,
        eps=eps,
    )


def coeffs_general(psf1: Psf, psf2: Psf, eps: float) -> GeneralSeries:
    """Quartic expansion coefficients for arbitrary PSF pairs (per unit N_tot)."""
    ms = moment_set(psf1, psf2, 0.0)
    q = ms.overlap0
    kt = ms.kappa_tot
    xi = ms.xi
    chi = ms.chi
    m4 = ms.p4_12
    one_minus_q2 = ms.u * (2.0 - ms.u)  # 1 - |<psi1|psi2>|^2, cancellation-free
    two_xi_minus_q = (2.0 * xi - 1.0) + ms.u
    core = 3.0 * xi**2 * kt**2 - 8.0 * xi * m4 + q * m4
    cross = q * m4 + 3.0 * xi**2 * kt**2
    return GeneralSeries(
        a0=-12.0 * (1.0 - chi**2) * (1.0 - eps**2) * one_minus_q2 * kt,
        b0=-24.0 * (1.0 + chi * eps) * one_minus_q2,
        a2=12.0
        * kt**2
        * xi
        * (1.0 - eps**2)
        * (two_xi_minus_q + chi**2 * q + 2.0 * xi * chi * eps),
        b2=24.0 * xi * kt * (two_xi_minus_q - chi * eps * q - 2.0 * xi * eps**2),
        a4=(1.0 - eps**2) * kt * (core - 8.0 * xi * chi * eps * m4 - chi**2 * cross),
        b4=2.0 * (core + 8.0 * xi * eps**2 * m4 + chi * eps * cross),
        eps=eps,
    )


def hd_series(coeffs: SeriesCoefficients, d: float, n_tot: float = 1.0) -> float:
    """Evaluate the small-separation series for H_d at separation d."""
    d2 = d * d
    if isinstance(coeffs, IdenticalSeries):
        num = coeffs.c2 * d2
        den = coeffs.d1 + coeffs.d2 * d2
    else:
        num = coeffs.a0 + (coeffs.a2 + coeffs.a4 * d2) * d2
        den = coeffs.b0 + (coeffs.b2 + coeffs.b4 * d2) * d2
    if abs(num) < 1e-300 and abs(den) < 1e-300:
        raise ZeroDivisionError("series numerator and denominator both vanish")
    return n_tot * num / den


# ---------------------------------------------------------------------------
# Critical quantities and exponent bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalQuantities:
    """The three PSF-difference scalars that decide the small-d regime, plus the length scale."""

    u: float        # 1 - <psi1|psi2>
    chi: float      # relative variance difference
    xi_gap: float   # 1/2 - <P^2>_12 / kappa_tot
    scale: float    # V = 1 / sqrt(<P^2>), the width unit for dt


def critical_quantities(psf1: Psf, psf2: Psf) -> CriticalQuantities:
    ms = moment_set(psf1, psf2, 0.0)
    p2_mean = 0.5 * ms.kappa_tot
    return CriticalQuantities(
        u=ms.u,
        chi=ms.chi,
        xi_gap=0.5 - ms.xi,
        scale=1.0 / math.sqrt(p2_mean),
    )


def general_dt(d: float, p2: float) -> float:
    """Dimensionless separation of the general analysis: d * sqrt(<P^2>)."""
    return d * math.sqrt(p2)


def gaussian_dt(d: float, sigma_bar: float) -> float:
    """Dimensionless separation of the Gaussian-width analysis: d / sigma_bar."""
    return d / sigma_bar


@dataclass(frozen=True)
class RegimeSpec:
    """Exponents and coefficients locating a cell of the regime tables."""

    table: str  # "general" or "gaussian"
    h: int | None = None
    f: int | None = None
    e: int | None = None
    s: int | None = None
    t: int | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None
    y: float | None = None
    z: float | None = None

    def __post_init__(self):
        if self.table not in ("general", "gaussian"):
            raise ValueError(f"unknown table {self.table!r}")
        needed = ("h", "s") if self.table == "general" else ("t", "s")
        for name in needed:
            value = getattr(self, name)
            if value is None or int(value) != value or value < 0:
                raise ValueError(f"exponent {name} must be a nonnegative integer")

    def to_json(self) -> str:
        payload = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RegimeSpec":
        return cls(**json.loads(text))


def validate_exponents(spec: RegimeSpec) -> tuple[bool, str]:
    """Check h/2 <= e <= h <= f <= 2h for a general-table spec."""
    if spec.table != "general":
        return True, ""
    h, e, f = spec.h, spec.e, spec.f
    if e is not None:
        if 2 * e < h:
            return False, f"e < h/2 (e={e}, h={h})"
        if e > h:
            return False, f"e > h (e={e}, h={h})"
    if f is not None:
        if f < h:
            return False, f"f < h (f={f}, h={h})"
        if f > 2 * h:
            return False, f"f > 2h (f={f}, h={h})"
    return True, ""


@dataclass(frozen=True)
class RegimeOutcome:
    """Limiting ratio H_d/H_opt for a table cell: a formula value, 1, 0, or unclassified."""

    kind: str  # "ratio" | "optimal" | "curse" | "unclassified"
    value: float | None

    @property
    def ratio(self) -> float:
        if self.value is None:
            raise ValueError("unclassified regime cell has no ratio")
        return self.value


def _need(spec: RegimeSpec, *names: str) -> list[float] | None:
    vals = [getattr(spec, n) for n in names]
    return None if any(v is None for v in vals) else vals


def regime_ratio(spec: RegimeSpec, moments: MomentSet | None = None) -> RegimeOutcome:
    """Table-cell value of lim_{d->0} H_d/H_opt for the given exponents/coefficients.

    General-table cells that involve moments use <P^2> and Var(P^2) from
    ``moments`` (taken at the coincident-PSF limit).  Cells outside the
    enumerated tables, or with missing coefficients, come back unclassified.
    """
    if spec.table == "general":
        ok, detail = validate_exponents(spec)
        if not ok:
            raise ValueError(f"exponents violate the constraint relation: {detail}")
        h, s = spec.h, spec.s
        if h == 0:
            if s == 0:
                vals = _need(spec, "c", "y")
                if vals is None:
                    return RegimeOutcome("unclassified", None)
                c, y = vals
                return RegimeOutcome(
                    "ratio", (1.0 - c * c) * (1.0 - y * y) / (1.0 + c * y)
                )
            vals = _need(spec, "c")
            if vals is None:
                return RegimeOutcome("unclassified", None)
            return RegimeOutcome("ratio", 1.0 - vals[0] ** 2)
        if s == 0:
            if h == 1:
                vals = _need(spec, "y")
                return (
                    RegimeOutcome("ratio", 1.0 - vals[0] ** 2)
                    if vals
                    else RegimeOutcome("unclassified", None)
                )
            if h == 2:
                vals = _need(spec, "b", "y")
                if vals is None:
                    return RegimeOutcome("unclassified", None)
                b, y = vals
                return RegimeOutcome(
                    "ratio", 2.0 * b * (1.0 - y * y) / (2.0 * b + y * y)
                )
            return RegimeOutcome("curse", 0.0)
        if s == 1:
            if h >= 5 or h == 4:
                if moments is None:
                    return RegimeOutcome("unclassified", None)
                p2 = 0.5 * moments.kappa_tot
                var = moments.p4_12 - p2 * p2
                if h >= 5:
                    vals = _need(spec, "y")
                    if vals is None:
                        return RegimeOutcome("unclassified", None)
                    y = vals[0]
                    return RegimeOutcome("ratio", var / (4.0 * y * y * p2 * p2 + var))
                vals = _need(spec, "b", "y")
                if vals is None:
                    return RegimeOutcome("unclassified", None)
                b, y = vals
                return RegimeOutcome(
                    "ratio",
                    (8.0 * b * p2 * p2 + var)
                    / (4.0 * (2.0 * b + y * y) * p2 * p2 + var),
                )
            return RegimeOutcome("optimal", 1.0)
        return RegimeOutcome("optimal", 1.0)  # s >= 2, h >= 1

    t, s = spec.t, spec.s
    if t == 0:
        if s == 0:
            vals = _need(spec, "y", "z")
            if vals is None:
                return RegimeOutcome("unclassified", None)
            y, z = vals
            return RegimeOutcome(
                "ratio", (1.0 - y * y) / (1.0 - 2.0 * y * z + z * z)
            )
        vals = _need(spec, "z")
        if vals is None:
            return RegimeOutcome("unclassified", None)
        return RegimeOutcome("ratio", 1.0 / (1.0 + vals[0] ** 2))
    if t == 1:
        if s == 0:
            vals = _need(spec, "y", "z")
            if vals is None:
                return RegimeOutcome("unclassified", None)
            y, z = vals
            return RegimeOutcome(
                "ratio", 8.0 * (1.0 - y * y) * z * z / (y * y + 8.0 * z * z)
            )
        return RegimeOutcome("optimal", 1.0)
    # t >= 2
    if s == 0:
        return RegimeOutcome("curse", 0.0)
    if s == 1:
        if t == 2:
            vals = _need(spec, "y", "z")
            if vals is None:
                return RegimeOutcome("unclassified", None)
            y, z = vals
            z2 = 64.0 * z * z
            return RegimeOutcome("ratio", (1.0 + z2) / (1.0 + z2 + 8.0 * y * y))
        vals = _need(spec, "y")
        if vals is None:
            return RegimeOutcome("unclassified", None)
        return RegimeOutcome("ratio", 1.0 / (1.0 + 8.0 * vals[0] ** 2))
    return RegimeOutcome("optimal", 1.0)


# ---------------------------------------------------------------------------
# Numerical confirmation of table cells
# ---------------------------------------------------------------------------

RegimePoint = Callable[[float], tuple[Psf, Psf, SourceScene, float]]


def _scene_from_eps(d: float, eps: float, n_tot: float = 1.0) -> SourceScene:
    return SourceScene(separation=d, n1=0.5 * n_tot * (1.0 - eps), n2=0.5 * n_tot * (1.0 + eps))


def gaussian_width_family(spec: RegimeSpec, sigma_bar: float = 1.0, n_tot: float = 1.0) -> RegimePoint:
    """Gaussian pair with width split eta = z*dt^t and imbalance eps = y*dt^s.

    Ratios are taken against the fixed equal-width reference n_tot/(4 sigma_bar^2),
    matching the Gaussian-table normalization.
    """
    if spec.table != "gaussian":
        raise ValueError("gaussian_width_family requires a gaussian-table spec")
    z = spec.z if spec.z is not None else 0.0
    y = spec.y if spec.y is not None else 0.0
    h_opt = n_tot / (4.0 * sigma_bar**2)

    def make(dt: float):
        eta = z * dt**spec.t
        eps = y * dt**spec.s
        psf1 = make_gaussian(sigma_bar * (1.0 - eta))
        psf2 = make_gaussian(sigma_bar * (1.0 + eta))
        return psf1, psf2, _scene_from_eps(dt * sigma_bar, eps, n_tot), h_opt

    return make


def perturbed_family(
    spec: RegimeSpec, mode: int | None = None, sigma: float = 1.0, n_tot: float = 1.0
) -> RegimePoint:
    """Hermite-Gauss perturbation family realizing u = b*dt^h and eps = y*dt^s.

    ``mode`` 2 realizes the steepest allowed variance-asymmetry scaling
    (e = h/2); mode 4 the shallowest (e = h).  Ratios are taken against the
    per-point reference 0.5 * n_tot * kappa_tot of the general analysis.
    """
    if spec.table != "general":
        raise ValueError("perturbed_family requires a general-table spec")
    if mode is None:
        mode = 4 if spec.e == spec.h else 2
    b = spec.b if spec.b is not None else 0.0
    y = spec.y if spec.y is not None else 0.0
    base = make_gaussian(sigma)
    kappa = 1.0 / (4.0 * sigma**2)
    scale = 1.0 / math.sqrt(kappa)  # dt = d * sqrt(<P^2>)

    def make(dt: float):
        u = b * dt**spec.h
        theta = 2.0 * math.asin(math.sqrt(0.5 * u))
        psf2: Psf = make_perturbed(base, theta, {mode: 1.0}) if theta > 0 else base
        eps = y * dt**spec.s
        scene = _scene_from_eps(dt * scale, eps, n_tot)
        ms = moment_set(base, psf2, scene.separation)
        return base, psf2, scene, 0.5 * n_tot * ms.kappa_tot

    return make


def _romberg_limit(values: list[float]) -> float:
    """Extrapolate a sequence sampled at dt0/2^k to dt -> 0, stripping
    successive integer powers of dt."""
    t = list(values)
    for j in range(1, len(values)):
        f = 2.0**j
        t = [(f * t[i + 1] - t[i]) / (f - 1.0) for i in range(len(t) - 1)]
    return t[0]


@dataclass(frozen=True)
class RegimeVerification:
    """Measured d->0 limit of H_d/H_opt along a shrinking-dt schedule."""

    limit: float
    schedule: tuple[float, ...]
    ratios: tuple[float, ...]


def regime_verify(
    spec: RegimeSpec,
    family: RegimePoint | None = None,
    schedule: tuple[float, ...] | None = None,
) -> RegimeVerification:
    """Evaluate the exact precision along the schedule and extrapolate to dt -> 0."""
    sched = tuple(schedule) if schedule is not None else DEFAULT_SCHEDULE
    if any(b >= a for a, b in zip(sched, sched[1:])):
        raise ValueError("schedule must be strictly decreasing")
    if family is None:
        family = (
            gaussian_width_family(spec)
            if spec.table == "gaussian"
            else perturbed_family(spec)
        )
    ratios = []
    for dt in sched:
        psf1, psf2, scene, h_opt = family(dt)
        report = hd_exact_general(psf1, psf2, scene)
        ratios.append(report.h_d / h_opt)
    return RegimeVerification(
        limit=_romberg_limit(ratios), schedule=sched, ratios=tuple(ratios)
    )
