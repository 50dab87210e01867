"""``zo`` command line: run, compare, verify, schedule.

Exit codes: 0 success, 2 configuration error, 3 experiment failed (or a
verification check failed).  Logs go to standard error; experiment data
goes to files under the output directory (``--output-dir``, the config's
``output_dir``, ``$ZO_OUTPUT_DIR`` or ``./zo_runs``, in that order).
"""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigError, HorizonTooSmallError, IncompatibleComparisonError, ScheduleUnderspecifiedError
from .harness import OUTPUT_ENV, ExperimentConfig, compare_estimators, run_experiment
from .objective import ObjectiveMeta
from .optimizer import Regime, make_schedule
from .verify import DEFAULT_SAMPLES, run_checks

EXIT_OK, EXIT_CONFIG, EXIT_FAILED = 0, 2, 3

log = logging.getLogger("zo_residual")


def _parser():
    p = argparse.ArgumentParser(prog="zo", description="Zeroth-order optimization experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--output-dir", help=f"overrides the config and ${OUTPUT_ENV}")
    run.add_argument("--jobs", type=int, default=1, help="concurrent trials (default 1)")

    cmp = sub.add_parser("compare", help="run configs sharing a problem and rank them")
    cmp.add_argument("configs", nargs="+")
    cmp.add_argument("--output-dir")
    cmp.add_argument("--jobs", type=int, default=1)

    ver = sub.add_parser("verify", help="run the statistical invariant suite")
    ver.add_argument("--samples", type=int, default=DEFAULT_SAMPLES)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--only", nargs="*", help="names of checks to run")

    sch = sub.add_parser("schedule", help="print eta and delta for a regime")
    sch.add_argument("regime", choices=[r.value for r in Regime if r is not Regime.MANUAL])
    sch.add_argument("--L0", type=float)
    sch.add_argument("--L1", type=float)
    sch.add_argument("--d", type=int, required=True)
    sch.add_argument("--T", type=int, required=True)
    sch.add_argument("--epsf", type=float)
    return p


def _cmd_run(args):
    cfg = ExperimentConfig.load(args.config)
    summary = run_experiment(cfg, output_dir=args.output_dir, jobs=args.jobs)
    log.info("wrote %s", summary.output_dir)
    if summary.status != "ok":
        log.error("%s: %d of %d trials failed", cfg.name, summary.n_failed, len(summary.trials))
        return EXIT_FAILED
    return EXIT_OK


def _cmd_compare(args):
    configs = [ExperimentConfig.load(p) for p in args.configs]
    cmp = compare_estimators(configs, output_dir=args.output_dir, jobs=args.jobs)
    print(cmp.table())
    if any(s.status != "ok" for s in cmp.summaries):
        return EXIT_FAILED
    return EXIT_OK


def _cmd_verify(args):
    results = run_checks(args.samples, args.seed, args.only)
    for r in results:
        print(r.line(), flush=True)
    passed = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed")
    return EXIT_OK if passed else EXIT_FAILED


def _cmd_schedule(args):
    meta = ObjectiveMeta(dim=args.d, lipschitz_L0=args.L0, grad_lipschitz_L1=args.L1)
    s = make_schedule(args.regime, meta, args.T, epsilon_f=args.epsf)
    print(f"eta={s.eta!r}")
    print(f"delta={s.delta!r}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    handler = {"run": _cmd_run, "compare": _cmd_compare, "verify": _cmd_verify, "schedule": _cmd_schedule}
    try:
        return handler[args.command](args)
    except (ConfigError, ScheduleUnderspecifiedError, HorizonTooSmallError, IncompatibleComparisonError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("invalid input: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
