"""Command line entry point: ``sheetcap <experiment> [--config FILE] [flags]``
or ``sheetcap suite --config FILE``.

Values are resolved as built-in defaults, then the config file, then flags.
Exit status: 0 when every verdict passes, 1 when any fails, 2 for bad
configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import EXPERIMENT_NAMES, ConfigError, ExperimentConfig, load_config_file, run_experiment, run_suite


def _eps_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad eps list {text!r}") from exc


def _assignment(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sheetcap", description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=[*EXPERIMENT_NAMES, "suite"])
    p.add_argument("--config", type=Path, help="JSON config (a suite file for 'suite')")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--d", type=int)
    p.add_argument("--M", type=float)
    p.add_argument("--eps", type=_eps_list, help="comma separated, e.g. 0.25,0.5")
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--no-plots", dest="plots", action="store_false", default=None)
    p.add_argument("--set", dest="assignments", type=_assignment, action="append", default=[],
                   metavar="KEY=JSON", help="override any config key")
    return p


def _overrides(args) -> dict:
    out = {k: getattr(args, k) for k in ("seed", "d", "M", "eps", "n_samples", "tol", "max_iter", "plots")
           if getattr(args, k) is not None}
    if args.out is not None:
        out["out"] = str(args.out)
    out.update(dict(args.assignments))
    return out


def _print_report(stem, rep, stream=None):
    stream = stream or sys.stdout
    for v in rep.verdicts:
        print(f"{'PASS' if v.passed else 'FAIL'}  {stem}: {v.name}  lhs={v.lhs:.6g} rhs={v.rhs:.6g} slack={v.slack:.3g}",
              file=stream)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = _overrides(args)

    if args.experiment == "suite":
        if args.config is None:
            print("sheetcap: error: suite needs --config", file=sys.stderr)
            return 2
        outcome = run_suite(args.config, overrides.pop("out", None), overrides)
        for err in outcome.errors:
            print(f"config error: {err}", file=sys.stderr)
        for stem, rep in outcome.reports:
            _print_report(stem, rep)
        for f in outcome.failures:
            print(f"failed: {f}", file=sys.stderr)
        return outcome.exit_code

    try:
        mapping = load_config_file(args.config) if args.config else {}
        cfg = ExperimentConfig.from_mapping(args.experiment, {**mapping, **overrides})
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return 2
    rep = run_experiment(cfg)
    for path in rep.write(cfg.out):
        print(f"wrote {path}")
    _print_report(cfg.experiment, rep)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
