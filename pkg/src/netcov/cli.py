"""Command-line front end.

Each error class exits with its own code so scripts can tell a bad flag
from a corrupt bundle: 2 configuration, 3 file format, 4 model validation,
5 unsupported capability, 6 bad runtime input, 7 numeric failure, 8 I/O.
"""

from __future__ import annotations

import argparse
import sys

from .config import (DEFAULT_KMNC_K, DEFAULT_NC_THRESHOLDS, DEFAULT_TKNC_K, RunConfig)
from .errors import (CapabilityError, ConfigError, FormatError, InputError, NetcovError,
                     NumericError, ValidationError)
from .mcdc import VARIANTS
from .runner import run

EXIT_CODES = (
    (ConfigError, 2),
    (FormatError, 3),
    (ValidationError, 4),
    (CapabilityError, 5),
    (InputError, 6),
    (NumericError, 7),
)

_EPILOG = """\
exit codes:
  0  success
  2  bad configuration or flags
  3  malformed model bundle, profile or dataset file
  4  model or dataset fails validation
  5  unsupported capability (layer kind, dtype, byte order)
  6  runtime inputs do not fit the model
  7  evaluation produced non-finite values
  8  I/O failure
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="netcov",
        description="Structural coverage analysis for feedforward neural networks.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--model", required=True, help="NNCM model bundle directory")
    parser.add_argument("--outputs", required=True, help="directory for the report files")
    parser.add_argument("--criteria", default="all", choices=("all", "no-mcdc", "mcdc"),
                        help="which criterion families to compute (default: all)")
    parser.add_argument("--granularity", default="neuron", choices=("neuron", "channel"),
                        help="unit granularity (default: neuron)")

    data = parser.add_argument_group("datasets")
    data.add_argument("--input-tests", metavar="DIR", help="raw test dataset directory")
    data.add_argument("--idx-images", metavar="FILE", help="IDX test image file")
    data.add_argument("--idx-labels", metavar="FILE", help="IDX test label file")
    data.add_argument("--input-train", metavar="DIR", help="raw training dataset directory")
    data.add_argument("--train-idx-images", metavar="FILE", help="IDX training image file")
    data.add_argument("--train-idx-labels", metavar="FILE", help="IDX training label file")
    data.add_argument("--train", type=int, metavar="N", help="use only the first N training inputs")
    data.add_argument("--test", type=int, metavar="N", help="use only the first N test inputs")

    crit = parser.add_argument_group("criterion parameters")
    crit.add_argument("--nc-threshold", type=float, action="append", metavar="T",
                      help=f"NC threshold, repeatable (default: {list(DEFAULT_NC_THRESHOLDS)})")
    crit.add_argument("--kmnc-k", type=int, action="append", metavar="K",
                      help=f"KMNC section count, repeatable (default: {list(DEFAULT_KMNC_K)})")
    crit.add_argument("--tknc-k", type=int, action="append", metavar="K",
                      help=f"TKNC top-k, repeatable (default: {list(DEFAULT_TKNC_K)})")
    crit.add_argument("--mcdc-variant", action="append", choices=VARIANTS, metavar="V",
                      help="MC/DC variant (ss sv vs vv), repeatable (default: all four)")
    crit.add_argument("--vc-ratio", type=float, default=0.1, metavar="R",
                      help="value-change threshold as a fraction of the profiled range "
                           "(default: 0.1)")
    crit.add_argument("--pair-budget", type=int, metavar="N",
                      help="cap MC/DC to a seeded sample of N input pairs")

    runopt = parser.add_argument_group("execution")
    runopt.add_argument("--seed", type=int, default=0, help="seed for pair sampling (default: 0)")
    runopt.add_argument("--stride", type=int, metavar="N",
                        help="growth-curve checkpoint every N inputs (default: about 50 points)")
    runopt.add_argument("--jobs", type=int, default=1, metavar="N",
                        help="evaluate N blocks concurrently; results are identical for any N")
    runopt.add_argument("--sequential", action="store_true",
                        help="one pass per criterion instead of the shared pass "
                             "(slow; for timing comparisons)")
    runopt.add_argument("--allow-missing-profile", action="store_true",
                        help="without a training source, drop profile-dependent criteria "
                             "instead of failing")
    runopt.add_argument("--save-profile", metavar="DIR", help="write the activation profile")
    runopt.add_argument("--load-profile", metavar="DIR", help="reuse a saved activation profile")

    comp = parser.add_argument_group("dataset comparison")
    comp.add_argument("--compare-baseline", metavar="DIR",
                      help="raw dataset the others are compared against")
    comp.add_argument("--compare", action="append", metavar="DIR", default=[],
                      help="raw dataset to compare, repeatable")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        model=args.model,
        outputs=args.outputs,
        criteria=args.criteria,
        granularity=args.granularity,
        test_raw=args.input_tests,
        idx_images=args.idx_images,
        idx_labels=args.idx_labels,
        train_raw=args.input_train,
        train_idx_images=args.train_idx_images,
        train_idx_labels=args.train_idx_labels,
        train_limit=args.train,
        test_limit=args.test,
        nc_thresholds=tuple(args.nc_threshold) if args.nc_threshold else DEFAULT_NC_THRESHOLDS,
        kmnc_k=tuple(args.kmnc_k) if args.kmnc_k else DEFAULT_KMNC_K,
        tknc_k=tuple(args.tknc_k) if args.tknc_k else DEFAULT_TKNC_K,
        mcdc_variants=tuple(args.mcdc_variant) if args.mcdc_variant else VARIANTS,
        vc_ratio=args.vc_ratio,
        pair_budget=args.pair_budget,
        seed=args.seed,
        stride=args.stride,
        jobs=args.jobs,
        sequential=args.sequential,
        allow_missing_profile=args.allow_missing_profile,
        save_profile=args.save_profile,
        load_profile=args.load_profile,
        compare_baseline=args.compare_baseline,
        compare_datasets=tuple(args.compare),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        bundle, paths = run(config_from_args(args))
    except NetcovError as exc:
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)  # pragma: no cover
        return 1  # pragma: no cover
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 8

    for warning in bundle.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for key in sorted(bundle.results):
        r = bundle.results[key]
        print(f"{key}: {r.percent:.2f}% ({r.covered}/{r.total})")
    if bundle.accuracy is not None:
        print(f"accuracy: {bundle.accuracy:.2f}%")
    if bundle.comparison is not None:
        print(f"comparison baseline: {bundle.comparison.baseline}")
    print(f"report: {paths['report.json'].parent}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
