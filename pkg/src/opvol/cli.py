"""Command-line entry point: reproducible verification experiments.

Each subcommand runs one experiment (or all of them), writes CSV results,
a JSON run manifest and diagnostic figures into the output directory, and
exits 0 only if every check passed.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import EXPERIMENTS, load_config, validate_config, merge_config
from .errors import OpVolError
from .experiments import default_config, run_experiment
from .report import RunManifest

_DESCRIPTIONS = {
    "verify-vol-cf": "variance-process characteristic function vs Monte Carlo",
    "verify-x-cf": "price-process characteristic function vs Monte Carlo",
    "verify-gamma-jumps": "Gamma law of projected Wishart jumps",
    "verify-wishart-cf": "Wishart mark characteristic function vs the determinant formula",
    "verify-trace": "expected trace identity vs Monte Carlo",
    "verify-returns": "conditional Gaussianity of adjusted returns",
    "positivity-suite": "self-adjointness and positivity of simulated states",
    "simulate-forward": "forward-curve simulation and spot variance consistency",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opvol",
        description="Operator-valued stochastic volatility: verification harness",
    )
    parser.add_argument("--version", action="version", version=f"opvol {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config overriding the defaults")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--paths", type=int, help="Monte Carlo path count override")
    common.add_argument("--samples", type=int, help="distributional sample count override")
    common.add_argument("--out", type=Path, help="output directory (default: results)")
    common.add_argument("--workers", type=int, default=1, help="worker process count")
    common.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering (CSV only)"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=_DESCRIPTIONS[name])
    sub.add_parser("run-all", parents=[common], help="run every experiment in order")
    sub.add_parser("show-config", parents=[common], help="print the resolved default config")
    return parser


def _overrides_from_args(args) -> dict:
    overrides = load_config(args.config) if args.config else {}
    for key in ("seed", "paths", "samples"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.out is not None:
        overrides["out"] = str(args.out)
    return overrides


def _print_result(res) -> None:
    mark = "PASS" if res.passed else "FAIL"
    n_ok = sum(r.passed for r in res.rows)
    print(f"[{mark}] {res.name}: {n_ok}/{len(res.rows)} checks ({res.elapsed:.1f}s)")
    for row in res.rows:
        status = "ok  " if row.passed else "FAIL"
        if row.kind == "cf":
            print(
                f"    {status} {row.case:<16} analytic {row.analytic_re:+.5f}{row.analytic_im:+.5f}i"
                f"  mc {row.empirical_re:+.5f}{row.empirical_im:+.5f}i  err {row.error:.2e}"
                f"  tol {row.tol:.2e}  z {row.z:.2f}"
            )
        else:
            print(
                f"    {status} {row.case:<16} {row.kind:<18} analytic {row.analytic_re:+.6g}"
                f"  mc {row.empirical_re:+.6g}  err {row.error:.2e}  tol {row.tol:.2e}"
            )


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = _overrides_from_args(args)
        names = list(EXPERIMENTS) if args.command == "run-all" else [args.command]
        if args.command == "show-config":
            import json

            base = overrides.pop("experiment", None) or "verify-vol-cf"
            print(json.dumps(merge_config(default_config(base), overrides), indent=2, sort_keys=True))
            return 0
        out_dir = Path(overrides.get("out", "results"))
        results = []
        for name in names:
            res = run_experiment(
                name,
                overrides,
                out_dir=out_dir,
                workers=max(1, args.workers),
                figures=not args.no_figures,
            )
            _print_result(res)
            results.append(res)
        seed = validate_config(merge_config(default_config(names[0]), overrides)).seed
        manifest = RunManifest(
            version=__version__, seed=seed, workers=max(1, args.workers), config=overrides
        )
        for res in results:
            manifest.add(res.name, res.passed, res.elapsed, res.files, res.summary)
        manifest.write(out_dir / "run_manifest.json")
        all_ok = all(r.passed for r in results)
        print(f"{'all checks passed' if all_ok else 'CHECKS FAILED'}; outputs in {out_dir}/")
        return 0 if all_ok else 1
    except OpVolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
