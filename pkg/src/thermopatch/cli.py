"""``thermopatch`` command line.

Exit codes: 0 success, 1 invalid configuration, 2 dimension cap exceeded,
3 a hard numerical invariant failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .operators import DimensionCapError, InvariantError
from .report import COMMANDS, RunConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_CAP, EXIT_INVARIANT = 0, 1, 2, 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _param(text: str) -> tuple[str, float]:
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key.strip(), float(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"parameter value {value!r} is not a number") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    defaults = RunConfig()
    p = _Parser(prog="thermopatch", description="Gibbs-state diagnostics and patching-circuit preparation.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--model", default=defaults.model,
                   choices=["classical_ising", "transverse_field_ising", "heisenberg"])
    p.add_argument("--param", action="append", type=_param, default=[], metavar="KEY=VALUE",
                   help="model parameter, e.g. g=1.0 (repeatable)")
    p.add_argument("--spec-file", default=None, help="JSON model file (overrides --model and --dims)")
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--dims", type=_int_list, default=defaults.dims, help="lattice side lengths, e.g. 10 or 3,4")
    p.add_argument("--periodic", action="store_true")
    p.add_argument("--ell", type=_int_list, default=defaults.ells, help="comma list of lengths")
    p.add_argument("--r", type=int, default=None, help="tile side for prepare")
    p.add_argument("--out", default=defaults.out)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--schedule-only", action="store_true")
    p.add_argument("--input-state", choices=["mixed", "ground"], default=defaults.input_state)
    p.add_argument("--target-error", type=float, default=defaults.target_error)
    p.add_argument("--schedule-L", type=int, default=None)
    p.add_argument("--fit-c1", type=float, default=defaults.fit_c1)
    p.add_argument("--fit-c2", type=float, default=defaults.fit_c2)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=ns.command,
        model=ns.model,
        params=dict(ns.param),
        spec_file=ns.spec_file,
        beta=ns.beta,
        dims=list(ns.dims),
        periodic=ns.periodic,
        ells=list(ns.ell),
        r=ns.r,
        out=ns.out,
        seed=ns.seed,
        schedule_only=ns.schedule_only,
        input_state=ns.input_state,
        target_error=ns.target_error,
        schedule_L=ns.schedule_L,
        fit_c1=ns.fit_c1,
        fit_c2=ns.fit_c2,
    )


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        doc = run(config_from_args(ns))
    except DimensionCapError as exc:
        print(f"dimension cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"command": doc["command"], "config_hash": doc["config_hash"], "out": ns.out}))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
