"""Command-line front end: single-point precision, curve/surface scans, regime
checks, oracle verification, and Monte-Carlo simulation.

Output conventions: single evaluations print JSON (with a schema_version
field), scans and trial tables write CSV with one row per grid point.  The
default output directory honours the PAIRSEP_OUTDIR environment variable.
Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .expansion import (
    RegimeSpec,
    gaussian_width_family,
    perturbed_family,
    regime_ratio,
    regime_verify,
    validate_exponents,
)
from .fisher import (
    ConditioningError,
    SingularFisherError,
    SourceScene,
    classical_fisher_direct,
    hd_exact_general,
    hd_exact_identical,
    hd_known,
    separation_precision,
)
from .gaussian import GaussianScene, ratio_general
from .mle import crb_experiment, trial_report_to_csv
from .oracle import build_rho, qfi_numeric, sld_commutator_check
from .psf import Psf, grid_psf_from_file, make_gaussian, moment_set
from .fisher import qfi_unknown_general

SCHEMA_VERSION = 1
SIMULATION_BUDGET = 1e9


def _out_path(arg: str | None, default_name: str) -> Path:
    base = Path(os.environ.get("PAIRSEP_OUTDIR", "."))
    if arg is None:
        return base / default_name
    p = Path(arg)
    return p if p.is_absolute() or p.parent != Path(".") else base / p


def _emit_json(payload: dict, path: Path | None) -> None:
    payload = {"schema_version": SCHEMA_VERSION, **payload}
    text = json.dumps(payload, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n")
        print(text)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_psfs(args) -> tuple[Psf, Psf]:
    if args.psf == "gaussian":
        psf1 = make_gaussian(args.sigma)
        psf2 = make_gaussian(args.sigma2) if args.sigma2 is not None else psf1
    else:
        if not args.psf_file:
            raise SystemExit2("--psf-file is required for grid PSFs")
        psf1 = grid_psf_from_file(args.psf_file)
        psf2 = grid_psf_from_file(args.psf_file2) if args.psf_file2 else psf1
    return psf1, psf2


class SystemExit2(SystemExit):
    def __init__(self, message: str):
        print(f"error: {message}", file=sys.stderr)
        super().__init__(2)


def _scene(args) -> SourceScene:
    eps = args.eps
    n_tot = args.ntot
    return SourceScene(
        separation=args.d,
        n1=0.5 * n_tot * (1.0 - eps),
        n2=0.5 * n_tot * (1.0 + eps),
        centroid=args.xbar,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_precision(args) -> int:
    psf1, psf2 = _load_psfs(args)
    scene = _scene(args)
    identical = psf1 is psf2
    if args.model in ("known-n", "unknown-identical") and not identical:
        raise SystemExit2(f"model {args.model} requires a single shared PSF")
    if args.model == "direct":
        fisher = classical_fisher_direct(psf1, psf2, scene)
        ms = moment_set(psf1, psf2, scene.separation)
        report = separation_precision(
            fisher, scene.n_tot, h_d_opt=0.5 * scene.n_tot * ms.kappa_tot, model="direct"
        )
    elif args.model == "known-n":
        report = hd_known(psf1, scene)
    elif args.model == "unknown-identical":
        report = hd_exact_identical(psf1, scene)
    else:
        report = hd_exact_general(psf1, psf2, scene)
    _emit_json(
        {
            "model": report.model,
            "h_d": report.h_d,
            "h_d_opt": report.h_d_opt,
            "ratio": report.ratio,
            "flags": list(report.flags),
            "n_tot": scene.n_tot,
            "separation": scene.separation,
            "eps": scene.eps,
        },
        _out_path(args.output, "precision.json") if args.output else None,
    )
    return 0


def _axis_values(start: float, stop: float, num: int, name: str) -> np.ndarray:
    if num < 2:
        raise SystemExit2(f"{name}: need at least 2 points")
    if not stop > start:
        raise SystemExit2(f"{name}: range must be strictly increasing")
    return np.linspace(start, stop, num)


def cmd_scan(args) -> int:
    if args.axis2 == args.axis:
        raise SystemExit2("--axis2 must differ from --axis")
    primary = _axis_values(args.start, args.stop, args.num, "--axis")
    if args.axis2:
        if None in (args.start2, args.stop2, args.num2):
            raise SystemExit2("--axis2 requires --start2/--stop2/--num2")
        secondary = _axis_values(args.start2, args.stop2, args.num2, "--axis2")
    else:
        secondary = [None]

    fixed = {"eps": args.eps, "eta": args.eta, "dtilde": args.dtilde}
    rows = []
    for v2 in secondary:
        for v1 in primary:
            values = dict(fixed)
            values[args.axis] = float(v1)
            if args.axis2:
                values[args.axis2] = float(v2)
            scene = GaussianScene(
                sigma1=args.sigma_bar * (1.0 - values["eta"]),
                sigma2=args.sigma_bar * (1.0 + values["eta"]),
                eps=values["eps"],
            )
            rows.append(
                (
                    values["eps"],
                    values["eta"],
                    values["dtilde"],
                    ratio_general(scene, values["dtilde"]),
                )
            )

    def tag(name: str) -> str:
        if name == args.axis:
            return f"{name}:axis"
        if name == args.axis2:
            return f"{name}:axis2"
        return f"{name}:fixed={fixed[name]}"

    path = _out_path(args.output, "scan.csv")
    _write_csv(path, [tag("eps"), tag("eta"), tag("dtilde"), "ratio"], rows)
    print(f"wrote {len(rows)} rows to {path}")
    return 0


def cmd_regime(args) -> int:
    spec_kwargs = dict(table=args.table, s=args.s)
    for name in ("h", "f", "e", "t"):
        val = getattr(args, name)
        if val is not None:
            spec_kwargs[name] = val
    for name in ("a", "b", "c", "y", "z"):
        val = getattr(args, name)
        if val is not None:
            spec_kwargs[name] = val
    try:
        spec = RegimeSpec(**spec_kwargs)
    except ValueError as exc:
        raise SystemExit2(str(exc))
    ok, detail = validate_exponents(spec)
    if not ok:
        raise SystemExit2(f"exponent constraint violated: {detail}")

    moments = None
    if spec.table == "general":
        base = make_gaussian(args.sigma)
        moments = moment_set(base, base, 0.0)
    outcome = regime_ratio(spec, moments)
    payload = {
        "table": spec.table,
        "spec": json.loads(spec.to_json()),
        "predicted_kind": outcome.kind,
        "predicted_ratio": outcome.value,
    }
    if args.verify:
        if outcome.kind == "unclassified":
            raise SystemExit2("cannot verify an unclassified regime cell")
        family = (
            gaussian_width_family(spec, sigma_bar=args.sigma)
            if spec.table == "gaussian"
            else perturbed_family(spec, sigma=args.sigma)
        )
        verification = regime_verify(spec, family)
        payload["verified_limit"] = verification.limit
        payload["schedule"] = list(verification.schedule)
        payload["agreement"] = abs(verification.limit - outcome.ratio)
    _emit_json(payload, _out_path(args.output, "regime.json") if args.output else None)
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle import default_grid

    results = []
    scenes = [
        (1.0, 1.0, 1.0, 0.3),
        (1.0, 1.2, 0.5, 0.3),
        (1.0, 2.0, 2.0, 0.8),
    ]
    for s1, s2, d, eps in scenes:
        psf1, psf2 = make_gaussian(s1), make_gaussian(s2)
        scene = SourceScene(separation=d, n1=0.5 * (1 - eps), n2=0.5 * (1 + eps))
        grid = default_grid(psf1, psf2, scene, spacing_fraction=args.spacing_fraction)
        op = build_rho(psf1, psf2, scene, grid)
        numeric = qfi_numeric(op).matrix
        closed = qfi_unknown_general(psf1, psf2, scene).matrix
        scale = np.max(np.abs(closed))
        err = float(np.max(np.abs(numeric - closed) / np.maximum(np.abs(closed), 1e-12 * scale)))
        results.append(
            {
                "sigma1": s1,
                "sigma2": s2,
                "d": d,
                "eps": eps,
                "max_entry_rel_err": err,
                "commutator_check": sld_commutator_check(op),
            }
        )
    payload: dict = {"scenes": results}
    if args.refine:
        psf1, psf2 = make_gaussian(1.0), make_gaussian(1.2)
        scene = SourceScene(separation=0.5, n1=0.35, n2=0.65)
        closed = qfi_unknown_general(psf1, psf2, scene).matrix
        errs = []
        grid = default_grid(psf1, psf2, scene, spacing_fraction=12.0)
        for g in (grid, grid.halve()):
            numeric = qfi_numeric(build_rho(psf1, psf2, scene, g)).matrix
            errs.append(float(np.max(np.abs(numeric - closed) / np.abs(closed))))
        payload["refinement"] = {
            "coarse_err": errs[0],
            "fine_err": errs[1],
            "reduction_factor": errs[0] / errs[1],
        }
    _emit_json(payload, _out_path(args.output, "oracle.json") if args.output else None)
    return 0


def cmd_simulate(args) -> int:
    if args.photons * args.trials > SIMULATION_BUDGET and not args.force:
        raise SystemExit2(
            f"requested {args.photons * args.trials:.2e} photon-trials exceeds the "
            f"{SIMULATION_BUDGET:.0e} budget; pass --force to override"
        )
    psf1, psf2 = _load_psfs(args)
    scene = _scene(args)
    report = crb_experiment(
        psf1,
        psf2,
        scene,
        model=args.model,
        n_photons=args.photons,
        trials=args.trials,
        seed=args.seed,
        crb_model=args.crb_model,
    )
    path = _out_path(args.output, "trials.csv")
    trial_report_to_csv(report, path)
    summary = {
        "model": report.model,
        "n_photons": report.n_photons,
        "trials": report.trials,
        "seed": report.seed,
        "converged": report.converged_count,
        "crb_var_d": report.crb_d,
        "empirical_var_d": report.var_d,
        "variance_ratio": report.variance_ratio,
        "csv": str(path),
    }
    print(json.dumps({"schema_version": SCHEMA_VERSION, **summary}, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_psf_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--psf", choices=("gaussian", "grid"), default="gaussian")
    p.add_argument("--sigma", type=float, default=1.0, help="width of PSF 1 (gaussian)")
    p.add_argument("--sigma2", type=float, default=None, help="width of PSF 2 if different")
    p.add_argument("--psf-file", type=str, default=None, help="two-column file for PSF 1")
    p.add_argument("--psf-file2", type=str, default=None, help="two-column file for PSF 2")


def _add_scene_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=float, required=True, help="source separation (length units)")
    p.add_argument("--eps", type=float, default=0.0, help="photon-number imbalance")
    p.add_argument("--ntot", type=float, default=1.0, help="total photon number")
    p.add_argument("--xbar", type=float, default=0.0, help="centroid position")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairsep",
        description="Precision limits for the separation of two incoherent point sources",
    )
    parser.add_argument("--version", action="version", version=f"pairsep {__version__}")
    parser.add_argument(
        "--config",
        type=str,
        default=None,
        help="JSON file whose keys mirror the flags of the chosen subcommand",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("precision", help="single-scene precision report (JSON)")
    _add_psf_args(p)
    _add_scene_args(p)
    p.add_argument(
        "--model",
        choices=("direct", "known-n", "unknown-identical", "unknown-general"),
        required=True,
    )
    p.add_argument("--output", "-o", type=str, default=None)
    p.set_defaults(func=cmd_precision)

    p = sub.add_parser("scan", help="ratio curves/surfaces over (eps, eta, dtilde) (CSV)")
    p.add_argument("--axis", choices=("eps", "eta", "dtilde"), required=True)
    p.add_argument("--start", type=float, required=True)
    p.add_argument("--stop", type=float, required=True)
    p.add_argument("--num", type=int, required=True)
    p.add_argument("--axis2", choices=("eps", "eta", "dtilde"), default=None)
    p.add_argument("--start2", type=float, default=None)
    p.add_argument("--stop2", type=float, default=None)
    p.add_argument("--num2", type=int, default=None)
    p.add_argument("--eps", type=float, default=0.0)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--dtilde", type=float, default=0.0)
    p.add_argument("--sigma-bar", type=float, default=1.0)
    p.add_argument("--output", "-o", type=str, default=None)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("regime", help="regime-table prediction and numeric verification (JSON)")
    p.add_argument("--table", choices=("general", "gaussian"), required=True)
    for name in ("h", "f", "e", "s", "t"):
        p.add_argument(f"--{name}", type=int, default=None)
    for name in ("a", "b", "c", "y", "z"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--sigma", type=float, default=1.0, help="base PSF width for verification")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--output", "-o", type=str, default=None)
    p.set_defaults(func=cmd_regime)

    p = sub.add_parser("oracle-check", help="grid-oracle vs closed-form QFI errors (JSON)")
    p.add_argument("--refine", action="store_true", help="add a grid-halving convergence check")
    p.add_argument(
        "--spacing-fraction",
        type=float,
        default=50.0,
        help="grid points per PSF width (smaller = faster, coarser)",
    )
    p.add_argument("--output", "-o", type=str, default=None)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("simulate", help="Monte-Carlo MLE vs CRB trials (CSV + JSON summary)")
    _add_psf_args(p)
    _add_scene_args(p)
    p.add_argument("--model", choices=("d", "xbar-d", "xbar-d-eps"), default="xbar-d")
    p.add_argument("--crb-model", choices=("xbar-d", "xbar-d-eps"), default=None)
    p.add_argument("--photons", type=int, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true")
    p.add_argument("--output", "-o", type=str, default=None)
    p.set_defaults(func=cmd_simulate)

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Expand --config file.json into equivalent command-line flags."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    try:
        path = argv[idx + 1]
    except IndexError:
        raise SystemExit2("--config requires a file path")
    with open(path) as fh:
        config = json.load(fh)
    command = config.pop("command", None)
    rest = [a for i, a in enumerate(argv) if i not in (idx, idx + 1)]
    if command and (not rest or rest[0] != command):
        rest = [command] + rest
    for key, value in config.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            if value:
                rest.append(flag)
        else:
            rest.extend([flag, str(value)])
    return rest


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit2 as exc:
        return int(exc.code)
    except (ConditioningError, SingularFisherError, ArithmeticError) as exc:
        detail = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(detail), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
