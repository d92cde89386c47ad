"""Command line entry point: ``pshlab <experiment> [flags]``.

Parameters come from built-in defaults, then the experiment's section of an
optional ``--config`` file (``key = value``), then flags.  Exit status is 0 on
pass, 1 on fail, 2 on inconclusive and 3 on usage errors.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from typing import Sequence

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment
from .report import FORMATS

EXIT = {"pass": 0, "fail": 1, "inconclusive": 2}
USAGE_ERROR = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pshlab", description="Numerical experiments on plurisubharmonic functions.")
    sub = parser.add_subparsers(dest="experiment", metavar="experiment", parser_class=_Parser)
    sub.required = True
    for name, exp in EXPERIMENTS.items():
        sp = sub.add_parser(name, help=exp.help, description=exp.help)
        for p in exp.params:
            default = "required" if p.required else p.default
            sp.add_argument("--" + p.name.replace("_", "-"), dest=p.name, default=None,
                            help=f"{p.help} (default: {default})")
        sp.add_argument("--config", help="config file with a [%s] section" % name)
        sp.add_argument("--output", default=None, help="output directory (default: .)")
        sp.add_argument("--formats", default="json,csv,svg",
                        help="comma separated subset of json,csv,svg; empty for none")
        sp.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
    return parser


def read_config_file(path: str, experiment: str) -> tuple[dict, str | None]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    if not cp.has_section(experiment):
        return {}, None
    values = {k.replace("-", "_"): v for k, v in cp.items(experiment)}
    return values, values.pop("output", None)


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    exp = EXPERIMENTS[args.experiment]
    values, output = ({}, None)
    if args.config:
        values, output = read_config_file(args.config, args.experiment)
    for p in exp.params:
        flag = getattr(args, p.name)
        if flag is not None:
            values[p.name] = flag
    output = args.output or output or "."
    return ExperimentConfig.build(args.experiment, values, output)


def _summary(report) -> str:
    lines = ["quantity\tvalue\ttolerance\treference"]
    fmt = lambda v: "" if v is None else repr(v)
    for name, q in sorted(report.quantities.items()):
        lines.append(f"{name}\t{fmt(q.value)}\t{fmt(q.tolerance)}\t{fmt(q.reference)}")
    lines.append(f"outcome\t{report.outcome}")
    lines.append(f"verdict\t{report.verdict}")
    for fn in report.artifacts:
        lines.append(f"artifact\t{fn}")
    return "\n".join(lines)


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        formats = [f for f in args.formats.split(",") if f]
        bad = set(formats) - set(FORMATS)
        if bad:
            raise UsageError(f"unknown formats {sorted(bad)}")
        config = config_from_args(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        report = run_experiment(config, formats)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return USAGE_ERROR
    if not args.quiet:
        print(_summary(report))
    return EXIT[report.verdict]


if __name__ == "__main__":
    sys.exit(main())
