"""Command-line front end.

    stochwishart theory   CONFIG [--quadrature]
    stochwishart simulate CONFIG
    stochwishart compare  CONFIG [--z-threshold X]
    stochwishart validate CONFIG [--z-threshold X]

Common options: ``--format csv|json``, ``--out PATH``, ``--workers N``,
``--scale L``, ``--dump-effective-config``.

Exit codes: 0 success, 1 a compare/validate check failed, 2 configuration
error, 3 theory matrix not positive semi-definite, 4 numerical or run failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import _backend, montecarlo, theory
from .config import ConfigError, config_digest, dump_config, load_config
from .entry_process import Stream, validate_moments
from .ensemble import overlap
from .quadrature import QuadratureError

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_PSD = 3
EXIT_RUNTIME = 4

# Column sets of the CSV reports.  JSON reports carry the same keys per row.
THEORY_COLUMNS = ("i", "j", "theta", "theory")
THEORY_QUAD_COLUMNS = ("i", "j", "theta", "theory", "quadrature", "abs_diff")
SIMULATE_COLUMNS = ("i", "j", "cov", "se", "replicas", "skew_z", "kurt_z")
COMPARE_COLUMNS = ("i", "j", "theory", "mc", "se", "z", "rel_err")
VALIDATE_COLUMNS = ("check", "time_a", "time_b", "estimate", "se", "expected", "z", "flagged")

log = logging.getLogger("stochwishart")


def fmt_number(x) -> str:
    """17 significant digits; integers and booleans verbatim; None empty."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


class _ReportEncoder(json.JSONEncoder):
    def encode(self, o):
        return super().encode(_jsonable(o))


def _jsonable(o):
    if isinstance(o, dict):
        return {k: _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (int, np.integer)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        x = float(o)
        # non-finite values have no JSON spelling
        return float("%.17g" % x) if math.isfinite(x) else None
    return o


def write_report(report: dict, columns, fmt: str, out):
    if fmt == "json":
        out.write(json.dumps(report, cls=_ReportEncoder, indent=2))
        out.write("\n")
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in report["rows"]:
        writer.writerow([fmt_number(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in columns])


@contextmanager
def _open_output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def _z(diff, se):
    if se is None or not math.isfinite(se):
        return None
    if se == 0.0:
        return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
    return diff / se


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_theory(cfg, quadrature=False):
    geom = cfg.geometry
    exact = theory.covariance_matrix(geom)
    quad = None
    if quadrature:
        q = cfg.quadrature

        def evaluator(params):
            return theory.covariance_quadrature(params, abs_tol=q.abs_tol, max_refinements=q.max_refinements)

        quad = theory.covariance_matrix(geom, evaluator=evaluator)
    rows = []
    k = len(geom)
    for i in range(k):
        for j in range(i, k):
            row = {"i": i, "j": j, "theta": overlap(geom, i, j).theta, "theory": exact[i, j]}
            if quad is not None:
                row["quadrature"] = quad[i, j]
                row["abs_diff"] = abs(quad[i, j] - exact[i, j])
            rows.append(row)
    report = {"command": "theory", "scale": geom.L, "matrix": exact, "rows": rows}
    if quad is not None:
        report["quadrature_matrix"] = quad
        report["max_abs_diff"] = float(np.max(np.abs(quad - exact)))
    return report, (THEORY_QUAD_COLUMNS if quadrature else THEORY_COLUMNS), EXIT_OK


def _simulate(cfg):
    def progress(done, total):
        log.info("batches %d/%d", done, total)

    est = montecarlo.run(cfg.geometry, cfg.mc, progress=progress)
    gauss = montecarlo.gaussianity_report(est) if est.replicas_used >= 1000 else None
    return est, gauss


def cmd_simulate(cfg):
    est, gauss = _simulate(cfg)
    k = len(cfg.geometry)
    rows = []
    for i in range(k):
        for j in range(i, k):
            row = {"i": i, "j": j, "cov": est.cov[i, j], "se": est.se_cov[i, j], "replicas": est.replicas_used}
            if i == j and gauss is not None:
                row["skew_z"] = gauss.z_skewness[i]
                row["kurt_z"] = gauss.z_kurtosis[i]
            rows.append(row)
    report = {
        "command": "simulate",
        "scale": cfg.geometry.L,
        "backend": _backend.backend_name(),
        "replicas": est.replicas_used,
        "batches": est.batches,
        "mean": est.mean,
        "cov": est.cov,
        "se": est.se_cov,
        "rows": rows,
        "gaussianity": None
        if gauss is None
        else [
            {
                "i": i,
                "skewness": gauss.skewness[i],
                "excess_kurtosis": gauss.excess_kurtosis[i],
                "skew_z": gauss.z_skewness[i],
                "kurt_z": gauss.z_kurtosis[i],
            }
            for i in range(k)
        ],
    }
    return report, SIMULATE_COLUMNS, EXIT_OK


def cmd_compare(cfg, z_threshold=4.0):
    exact = theory.covariance_matrix(cfg.geometry)
    est, _ = _simulate(cfg)
    k = len(cfg.geometry)
    rows = []
    worst = 0.0
    for i in range(k):
        for j in range(i, k):
            th = float(exact[i, j])
            mc = float(est.cov[i, j])
            se = float(est.se_cov[i, j])
            z = _z(mc - th, se)
            rows.append(
                {
                    "i": i,
                    "j": j,
                    "theory": th,
                    "mc": mc,
                    "se": se,
                    "z": z,
                    "rel_err": abs(mc - th) / abs(th) if th != 0.0 else None,
                }
            )
            worst = max(worst, math.inf if z is None else abs(z))
    passed = worst <= z_threshold
    report = {
        "command": "compare",
        "scale": cfg.geometry.L,
        "replicas": est.replicas_used,
        "z_threshold": z_threshold,
        "passed": passed,
        "rows": rows,
    }
    return report, COMPARE_COLUMNS, EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_validate(cfg, z_threshold=4.0):
    geom = cfg.geometry
    rep = validate_moments(geom.process, geom.grid, cfg.validate_draws, Stream(int(cfg.mc.seed)), threshold=z_threshold)
    rows = []
    for c in rep.checks:
        rows.append(
            {
                "check": c.name,
                "time_a": c.times[0],
                "time_b": c.times[-1],
                "estimate": c.estimate,
                "se": c.se,
                "expected": c.expected,
                "z": c.z,
                "flagged": c.flagged,
            }
        )
    report = {
        "command": "validate",
        "field": geom.process.beta,
        "family": geom.process.family.value,
        "draws": rep.draws,
        "z_threshold": z_threshold,
        "passed": rep.ok,
        "rows": rows,
    }
    return report, VALIDATE_COLUMNS, EXIT_OK if rep.ok else EXIT_CHECK_FAILED


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stochwishart",
        description="Covariance of trace powers of overlapping stochastic Wishart matrices: theory and Monte Carlo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "theory": "limiting covariance matrix (exact residue sum)",
        "simulate": "Monte Carlo estimate of the covariance matrix",
        "compare": "theory vs Monte Carlo, per-pair z-scores",
        "validate": "check moments of the entry process",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="experiment config (YAML)")
        p.add_argument("--format", choices=("csv", "json"), help="report format (default: from config)")
        p.add_argument("--out", help="write the report here instead of the configured path / stdout")
        p.add_argument("--workers", help="worker processes for Monte Carlo: N or 'auto'")
        p.add_argument("--scale", type=int, help="override the array scale L")
        p.add_argument("--z-threshold", type=float, default=4.0, help="pass threshold on |z| (default 4)")
        p.add_argument(
            "--dump-effective-config",
            nargs="?",
            const="-",
            metavar="PATH",
            help="write the effective config (after overrides) to PATH or stderr",
        )
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "theory":
            p.add_argument("--quadrature", action="store_true", help="also evaluate by semicircle quadrature")
    return parser


def _apply_overrides(cfg, args):
    mc = cfg.mc
    geom = cfg.geometry
    out = cfg.output
    if args.workers is not None:
        workers = args.workers if args.workers == "auto" else int(args.workers)
        mc = dataclasses.replace(mc, workers=workers)
    if args.scale is not None:
        geom = geom.with_scale(args.scale)
    if args.format is not None:
        out = dataclasses.replace(out, format=args.format)
    if args.out is not None:
        out = dataclasses.replace(out, path=args.out)
    return cfg.replace(geometry=geom, mc=mc, output=out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = _apply_overrides(load_config(args.config), args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.dump_effective_config is not None:
        text = dump_config(cfg)
        if args.dump_effective_config == "-":
            sys.stderr.write(text)
        else:
            Path(args.dump_effective_config).write_text(text, encoding="utf-8")
        log.info("effective config digest %s", config_digest(cfg))

    try:
        if args.command == "theory":
            report, columns, code = cmd_theory(cfg, quadrature=args.quadrature)
        elif args.command == "simulate":
            report, columns, code = cmd_simulate(cfg)
        elif args.command == "compare":
            report, columns, code = cmd_compare(cfg, args.z_threshold)
        else:
            report, columns, code = cmd_validate(cfg, args.z_threshold)
    except theory.CovariancePSDError as exc:
        print(f"theory error: {exc}", file=sys.stderr)
        return EXIT_PSD
    except (montecarlo.McRunError, montecarlo.CheckpointMismatch, QuadratureError) as exc:
        print(f"run error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    with _open_output(cfg.output.path) as out:
        write_report(report, columns, cfg.output.format, out)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
