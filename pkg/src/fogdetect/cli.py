"""``fogdetect`` command line: generate, loso, postprocess, verify."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PipelineConfig
from .errors import (CompatibilityError, ConfigurationError, ContractError, IntegrityError,
                     ParseError, ValidationError)
from .pipeline import MissingCohortError, run_loso, run_postprocess, write_cohort
from .verify import run_checks

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fogdetect", description="FOG detection pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--seed", type=int, help="override the global seed")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--jobs", type=int, default=1, help="parallel folds")

    g = sub.add_parser("generate", help="write a synthetic cohort")
    common(g)
    g.add_argument("--n-subjects", type=int)
    g.add_argument("--minutes", type=float, help="minutes per medication state")

    lo = sub.add_parser("loso", help="leave-one-subject-out training and scoring")
    common(lo)
    lo.add_argument("--cohort", help="cohort directory (default <out>/cohort)")
    lo.add_argument("--repeats", type=int)

    pp = sub.add_parser("postprocess", help="threshold sweep, episode and cluster reports")
    common(pp)
    pp.add_argument("traces", nargs="*", help="trace CSVs (default <out>/loso/traces/*.csv)")

    v = sub.add_parser("verify", help="run the built-in oracle checks")
    common(v)
    v.add_argument("--archive", action="append", default=[], help="weight archive to check")
    return p


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.output_dir = args.out
    if getattr(args, "n_subjects", None) is not None:
        cfg.generator.n_subjects = args.n_subjects
    if getattr(args, "minutes", None) is not None:
        cfg.generator.minutes_per_state = args.minutes
    if getattr(args, "repeats", None) is not None:
        cfg.evaluation.repeats = args.repeats
    return cfg.validate()


def _run(args) -> int:
    if args.command == "verify":
        results = run_checks(args.archive)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
    cfg = _load_config(args)
    out = Path(cfg.output_dir)
    if args.command == "generate":
        path = write_cohort(cfg.generator, out / "cohort")
        print(f"wrote {path}")
    elif args.command == "loso":
        cohort = Path(args.cohort) if args.cohort else out / "cohort"
        report = run_loso(cfg, cohort, out / "loso", jobs=args.jobs)
        print(report.to_csv(), end="")
    elif args.command == "postprocess":
        traces = args.traces or sorted((out / "loso" / "traces").glob("*.csv"))
        if not traces:
            raise MissingCohortError(f"no traces under {out / 'loso' / 'traces'}; run `fogdetect loso` first")
        results = run_postprocess(traces, cfg, out / "postprocess")
        print(f"wrote {len(results)} report sets to {out / 'postprocess'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigurationError, ValidationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, ParseError, IntegrityError, CompatibilityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
