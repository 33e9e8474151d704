"""Precision limits for resolving the separation of two incoherent point sources.

The package computes, expands, and empirically verifies the classical and
quantum Cramer-Rao bounds on estimating the separation of two incoherent
optical sources, for identical and differing point-spread functions and for
known or unknown photon-number imbalance.
"""

__version__ = "0.1.0"

from .fisher import (
    ConditioningError,
    FisherMatrix,
    PrecisionReport,
    SingularFisherError,
    SourceScene,
    classical_fisher_direct,
    hd_exact_general,
    hd_exact_identical,
    hd_known,
    qfi_known,
    qfi_unknown_general,
    qfi_unknown_identical,
    saturation_check_inputs,
    separation_precision,
)
from .expansion import (
    CriticalQuantities,
    RegimeOutcome,
    RegimeSpec,
    coeffs_general,
    coeffs_identical,
    critical_quantities,
    hd_series,
    regime_ratio,
    regime_verify,
    validate_exponents,
)
from .gaussian import (
    GaussianScene,
    classify_extrema,
    discontinuity_probe,
    extreme_points,
    lambert_w0,
    limit_large_separation,
    ratio_general,
    ratio_samewidth,
)
from .psf import (
    DirectImagingIntegrals,
    GaussianPsf,
    GridPsf,
    MomentSet,
    Psf,
    PsfError,
    cross_moments,
    direct_integrals,
    grid_psf_from_file,
    grid_psf_from_samples,
    make_gaussian,
    make_perturbed,
    mismatch,
    moment_set,
    momentum_moment,
    overlap_delta,
    overlap_gamma,
)

__all__ = [name for name in dir() if not name.startswith("_")]
