"""Command-line entry point.

    mcfl verify <file.mc>        bounded verification, counterexample out
    mcfl sequentialize <file.mc> failing schedule -> sequential program
    mcfl instrument <file.mc>    sequential program -> diagnosis model
    mcfl localize <file.mc>      full pipeline -> diagnosis report
    mcfl bench <dir>             sweep a directory, print a result table

Exit status: 0 safe/no fault, 1 faults found, 2 inconclusive,
3 resource budget exhausted, 4 usage or parse error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

from .bench import rows_to_csv, rows_to_table, run_bench
from .instrumenter import NothingToInstrument, instrument, \
    instrumented_to_json
from .localizer import localize, report_to_json
from .parser import ParseError, parse
from .sequentializer import line_map_to_json, sequentialize
from .syntax import pretty_print
from .verifier import (
    UnsupportedScheduleError,
    VerifierConfig,
    counterexample_to_json,
    extract_schedule,
    verify,
)

EXIT_SAFE = 0
EXIT_FAULTS = 1
EXIT_INCONCLUSIVE = 2
EXIT_RESOURCE = 3
EXIT_USAGE = 4

_DEFAULT_MAX_STATES = 200_000


@dataclass
class CliConfig:
    command: str
    input_path: str
    unwind: int = 3
    context_bound: int = 4
    nondet_lo: int = 0
    nondet_hi: int = 8
    deadlock_check: bool = False
    output: str = "text"  # 'text' | 'json'
    emit_intermediates: bool = False
    max_states: int = _DEFAULT_MAX_STATES
    csv_path: str = "mcfl_bench.csv"

    def verifier_config(self) -> VerifierConfig:
        return VerifierConfig(
            context_bound=self.context_bound,
            loop_bound=self.unwind,
            nondet_domain=(self.nondet_lo, self.nondet_hi),
            deadlock_check=self.deadlock_check,
            max_states=self.max_states,
        )


def _parse_nondet(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise argparse.ArgumentTypeError(
            "nondet domain must look like LO..HI")
    try:
        return int(lo), int(hi)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_cli() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcfl",
        description="Fault localization for concurrent mini-C programs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, what in [
        ("verify", "explore interleavings and report the first violation"),
        ("sequentialize", "emit the sequential replay program"),
        ("instrument", "emit the diagnosis model"),
        ("localize", "run the full localization pipeline"),
        ("bench", "localize every .mc file in a directory"),
    ]:
        cmd = sub.add_parser(name, help=what)
        cmd.add_argument("input", help=".mc file"
                         if name != "bench" else "directory of .mc files")
        cmd.add_argument("--unwind", type=int, default=3, metavar="K",
                         help="max loop iterations (default 3)")
        cmd.add_argument("--context-bound", type=int, default=4, metavar="C",
                         help="max context switches (default 4)")
        cmd.add_argument("--nondet", type=_parse_nondet, default=(0, 8),
                         metavar="LO..HI",
                         help="nondet value domain (default 0..8)")
        cmd.add_argument("--deadlock-check", action="store_true",
                         help="report deadlocks as violations")
        cmd.add_argument("--json", action="store_true",
                         help="machine-readable output")
        cmd.add_argument("--emit-intermediates", action="store_true",
                         help="write counterexample, sequential program, "
                              "diagnosis model and line map next to the "
                              "input")
        cmd.add_argument("--max-states", type=int, default=None, metavar="N",
                         help="state budget (default 200000, or "
                              "MCFL_MAX_STATES)")
        if name == "bench":
            cmd.add_argument("--csv", default="mcfl_bench.csv",
                             metavar="PATH",
                             help="where to write the CSV summary")
    return parser


def config_from_args(args: argparse.Namespace) -> CliConfig:
    max_states = args.max_states
    if max_states is None:
        max_states = int(os.environ.get("MCFL_MAX_STATES",
                                        _DEFAULT_MAX_STATES))
    return CliConfig(
        command=args.command,
        input_path=args.input,
        unwind=args.unwind,
        context_bound=args.context_bound,
        nondet_lo=args.nondet[0],
        nondet_hi=args.nondet[1],
        deadlock_check=args.deadlock_check,
        output="json" if args.json else "text",
        emit_intermediates=args.emit_intermediates,
        max_states=max_states,
        csv_path=getattr(args, "csv", "mcfl_bench.csv"),
    )


def _load_program(path: str):
    source = Path(path).read_text()
    return parse(source)


def _emit(path: Path, text: str) -> None:
    path.write_text(text)
    print(f"wrote {path}", file=sys.stderr)


def run(config: CliConfig) -> int:
    """Dispatches one command; returns the documented exit status."""
    try:
        if config.command == "bench":
            return _run_bench(config)
        program = _load_program(config.input_path)
    except (OSError, ParseError) as exc:
        print(f"mcfl: {exc}", file=sys.stderr)
        return EXIT_USAGE

    vcfg = config.verifier_config()
    base = Path(config.input_path)
    try:
        if config.command == "verify":
            result = verify(program, vcfg)
            if result.outcome == "resource-exhausted":
                print("resource-exhausted")
                return EXIT_RESOURCE
            if result.outcome == "safe-within-bounds":
                suffix = " (loop bound hit)" if result.bound_hit else ""
                print(f"safe-within-bounds{suffix}")
                return EXIT_SAFE
            cex = result.counterexample
            if config.output == "json":
                print(counterexample_to_json(cex), end="")
            else:
                v = cex.violation
                where = f" at line {v.line}" if v.line else \
                    f", blocked threads {list(v.blocked)}"
                print(f"violation: {v.kind}{where}")
                print(f"steps: {len(cex.steps)}, "
                      f"context switches: {len(cex.switches)}")
            if config.emit_intermediates:
                _emit(base.with_suffix(".counterexample.json"),
                      counterexample_to_json(cex))
            return EXIT_FAULTS

        if config.command in ("sequentialize", "instrument"):
            result = verify(program, replace(vcfg, deadlock_check=True))
            if result.outcome == "resource-exhausted":
                print("resource-exhausted")
                return EXIT_RESOURCE
            if result.outcome == "safe-within-bounds":
                print("safe-within-bounds: nothing to transform")
                return EXIT_SAFE
            cex = result.counterexample
            deadlock = cex.violation.kind == "deadlock"
            if not deadlock:
                second = verify(program, replace(vcfg,
                                                 deadlock_check=False))
                if second.outcome == "violation":
                    cex = second.counterexample
            schedule = extract_schedule(cex)
            seq = sequentialize(program, schedule, deadlock)
            if config.emit_intermediates:
                _emit(base.with_suffix(".counterexample.json"),
                      counterexample_to_json(cex))
                _emit(base.with_suffix(".seq.mc"),
                      pretty_print(seq.program))
                _emit(base.with_suffix(".linemap.json"),
                      line_map_to_json(seq.line_map))
            if config.command == "sequentialize":
                print(pretty_print(seq.program), end="")
                return EXIT_FAULTS
            instr = instrument(seq)
            if config.emit_intermediates:
                _emit(base.with_suffix(".instrumented.mc"),
                      pretty_print(instr.program))
                _emit(base.with_suffix(".instrumented.json"),
                      instrumented_to_json(instr))
            print(pretty_print(instr.program), end="")
            return EXIT_FAULTS

        if config.command == "localize":
            report = localize(program, vcfg)
            if config.emit_intermediates:
                if report.counterexample is not None:
                    _emit(base.with_suffix(".counterexample.json"),
                          counterexample_to_json(report.counterexample))
                if report.sequential is not None:
                    _emit(base.with_suffix(".seq.mc"),
                          pretty_print(report.sequential.program))
                    _emit(base.with_suffix(".linemap.json"),
                          line_map_to_json(report.sequential.line_map))
                if report.instrumented is not None:
                    _emit(base.with_suffix(".instrumented.mc"),
                          pretty_print(report.instrumented.program))
            if config.output == "json":
                print(report_to_json(report), end="")
            else:
                _print_report(report)
            return {
                "faults-found": EXIT_FAULTS,
                "no-counterexample": EXIT_SAFE,
                "inconclusive": EXIT_INCONCLUSIVE,
                "resource-exhausted": EXIT_RESOURCE,
            }[report.status]
    except (UnsupportedScheduleError, NothingToInstrument) as exc:
        print(f"mcfl: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE

    print(f"mcfl: unknown command {config.command!r}", file=sys.stderr)
    return EXIT_USAGE


def _print_report(report) -> None:
    print(f"status: {report.status}")
    print(f"deadlock: {1 if report.deadlock else 0}")
    print(f"found errors: {report.found_error_count}")
    for d in report.diagnoses:
        origin = d.original_line if d.original_line is not None \
            else "(no source line)"
        check = "validated" if d.oracle_validated else "unvalidated"
        print(f"  line {origin}: replacement value {d.witness_value} "
              f"[iteration {d.iteration}, {check}]")
    total = sum(report.timings.values())
    stages = ", ".join(f"{k} {v:.3f}s" for k, v in report.timings.items())
    print(f"time: {total:.3f}s ({stages})")


def _run_bench(config: CliConfig) -> int:
    directory = Path(config.input_path)
    if not directory.is_dir():
        print(f"mcfl: {directory} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    rows = run_bench(directory, config.verifier_config())
    print(rows_to_table(rows), end="")
    csv_path = Path(config.csv_path)
    csv_path.write_text(rows_to_csv(rows))
    print(f"wrote {csv_path}", file=sys.stderr)
    return EXIT_SAFE


def main(argv: list[str] | None = None) -> int:
    parser = build_cli()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    return run(config_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
