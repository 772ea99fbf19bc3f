"""Command line entry point: ``swarmmap <command> ...``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime
invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .config import ConfigError, SimConfig
from .metrics import read_trace
from .sim import InvariantViolation, load_classes

log = logging.getLogger("swarmmap")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2


def _load_config(path: str | None) -> SimConfig:
    return SimConfig.load(path) if path else SimConfig().validate()


def cmd_simulate(args) -> int:
    from .sim import run_experiment

    cfg = _load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.audit:
        changes["audit"] = True
    cfg = cfg.replace(**changes).validate()
    result = run_experiment(cfg, args.steps, args.out)
    last = result.frames[-1] if result.frames else None
    if last is not None:
        acc = "n/a" if last.map_accuracy is None else f"{last.map_accuracy:.3f}"
        log.info(
            "step %d: observed %.3f consolidated %.3f accuracy %s",
            last.step, last.observed_coverage, last.consolidation_coverage, acc,
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .sim import run_experiment

    base = _load_config(args.config)
    out = Path(args.out)
    for n in args.agents:
        for v in args.votes:
            for seed in range(args.seed_start, args.seed_start + args.seeds):
                cfg = base.replace(n_agents=n, min_votes=v, seed=seed).validate()
                run_dir = out / f"N{n}_V{v}" / f"seed{seed}"
                log.info("running N=%d V=%d seed=%d", n, v, seed)
                run_experiment(cfg, args.steps, run_dir)
    return EXIT_OK


def cmd_ensemble_table(args) -> int:
    from .report import ensemble_rows

    if args.n_max < 1:
        raise ConfigError("--n-max must be >= 1")
    model = load_classes(args.classes)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["class", "p", "n", "p_ens"])
    for name, p, n, pe in ensemble_rows(model, args.n_max):
        w.writerow([name, f"{p:.6g}", n, f"{pe:.12f}"])
    return EXIT_OK


def cmd_binpack_audit(args) -> int:
    from .report import cost_rows

    trace = Path(args.trace)
    capacity = args.capacity
    if capacity is None:
        cfg_path = trace.parent / "config.txt"
        capacity = SimConfig.load(cfg_path).storage_capacity if cfg_path.exists() else SimConfig().storage_capacity
    try:
        frames = read_trace(trace)
    except OSError as exc:
        raise ConfigError(f"cannot read trace {trace}: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"malformed trace {trace}: {exc}") from None
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["step", "realized", "optimal", "worst"])
    below, above = 0, 0
    for step, realized, optimal, worst in cost_rows(frames, capacity, args.stride):
        w.writerow([step, f"{realized:.9f}", f"{optimal:.9f}", f"{worst:.9f}"])
        below += optimal > realized + 1e-9
        above += realized > worst + 1e-9
    if below or above:
        log.error("sandwich violated: %d steps below optimal, %d steps above worst", below, above)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import build_report, load_runs, summary_rows

    runs = load_runs(args.runs)
    if not runs:
        raise ConfigError(f"no runs (trace.csv + config.txt) under {args.runs}")
    model = load_classes(args.classes) if args.classes else None
    out = Path(args.out) if args.out else Path(args.runs)
    paths = build_report(runs, out, model=model, stride=args.stride, plots=not args.no_plots)
    for name, p in paths.items():
        log.info("wrote %s", p)
    w = csv.writer(sys.stdout, lineterminator="\n")
    rows = list(summary_rows(runs))
    if rows:
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([f"{v:.4f}" if isinstance(v, float) else v for v in r.values()])
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are input errors, not invariant violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="swarmmap", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one seeded simulation")
    s.add_argument("--config", help="key = value config file (defaults if omitted)")
    s.add_argument("--seed", type=int)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--audit", action="store_true", help="check conservation and capacity every step")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a grid of agent counts, vote thresholds and seeds")
    s.add_argument("--config")
    s.add_argument("--agents", type=int, nargs="+", default=[30])
    s.add_argument("--votes", type=int, nargs="+", default=[3])
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--seed-start", type=int, default=0)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("ensemble-table", help="ensemble accuracy per class and vote count (CSV)")
    s.add_argument("--classes", help="CSV with columns class,p (default: built-in table)")
    s.add_argument("--n-max", type=int, default=8)
    s.set_defaults(func=cmd_ensemble_table)

    s = sub.add_parser("binpack-audit", help="realized, optimal and worst storage cost per step (CSV)")
    s.add_argument("--trace", required=True)
    s.add_argument("--capacity", type=int, help="per-agent storage capacity (default: from config.txt)")
    s.add_argument("--stride", type=int, default=1)
    s.set_defaults(func=cmd_binpack_audit)

    s = sub.add_parser("report", help="figure CSVs and PNGs from a directory of runs")
    s.add_argument("--runs", required=True)
    s.add_argument("--out", help="output directory (default: the runs directory)")
    s.add_argument("--classes")
    s.add_argument("--stride", type=int, default=10)
    s.add_argument("--no-plots", action="store_true")
    s.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        log.error("invariant violated: %s", exc)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
