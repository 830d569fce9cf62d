"""End-to-end fault localization driver.

Verify the concurrent program, classify the violation, sequentialize along
the failing schedule, instrument, then enumerate diag values with blocking
until the instrumented model verifies clean. Every reported line is checked
against an independent substitution oracle before it is trusted.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

from .instrumenter import (
    InstrumentedProgram,
    NothingToInstrument,
    block_diag,
    eligible_lines,
    instrument,
)
from .parser import parse
from .sequentializer import SequentialProgram, sequentialize
from .syntax import (
    Assign,
    If,
    IntLit,
    Program,
    While,
    line_table,
    pretty_print,
)
from .verifier import (
    Counterexample,
    VerifierConfig,
    extract_schedule,
    first_path,
    verify,
)


@dataclass
class Diagnosis:
    seq_line: int
    original_line: int | None
    witness_value: int | None
    iteration: int
    oracle_validated: bool


@dataclass
class DiagnosisReport:
    status: str  # faults-found | no-counterexample | inconclusive |
    #              resource-exhausted
    diagnoses: list[Diagnosis]
    found_error_count: int
    counterexample: Counterexample | None
    timings: dict[str, float]
    deadlock: bool = False
    sequential: SequentialProgram | None = field(default=None, repr=False)
    instrumented: InstrumentedProgram | None = field(default=None,
                                                     repr=False)


def _seq_config(config: VerifierConfig) -> VerifierConfig:
    return replace(config, context_bound=0, deadlock_check=False)


def localize(program: Program, config: VerifierConfig) -> DiagnosisReport:
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    first = verify(program, replace(config, deadlock_check=True))
    timings["verify"] = time.perf_counter() - t0
    if first.outcome == "resource-exhausted":
        return DiagnosisReport("resource-exhausted", [], 0, None, timings)
    if first.outcome == "safe-within-bounds":
        return DiagnosisReport("no-counterexample", [], 0, None, timings)

    cex = first.counterexample
    deadlock = cex.violation.kind == "deadlock"
    if not deadlock:
        # assertion-style faults are re-checked without deadlock detection;
        # that run's counterexample drives the transformation
        t0 = time.perf_counter()
        second = verify(program, replace(config, deadlock_check=False))
        timings["verify"] += time.perf_counter() - t0
        if second.outcome == "resource-exhausted":
            return DiagnosisReport("resource-exhausted", [], 0, cex, timings)
        if second.outcome == "violation":
            cex = second.counterexample

    t0 = time.perf_counter()
    schedule = extract_schedule(cex)
    seq = sequentialize(program, schedule, deadlock)
    timings["sequentialize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        instr = instrument(seq)
    except NothingToInstrument:
        timings["instrument"] = time.perf_counter() - t0
        return DiagnosisReport("inconclusive", [], 0, cex, timings,
                               deadlock=deadlock, sequential=seq)
    timings["instrument"] = time.perf_counter() - t0

    diagnoses: list[Diagnosis] = []
    status = None
    run_cfg = _seq_config(config)
    timings["diagnose"] = 0.0
    timings["validate"] = 0.0
    iteration = 0
    while iteration < len(instr.diag_domain) + 1:
        iteration += 1
        t0 = time.perf_counter()
        result = verify(instr.program, run_cfg)
        timings["diagnose"] += time.perf_counter() - t0
        if result.outcome == "resource-exhausted":
            status = "resource-exhausted"
            break
        if result.outcome == "safe-within-bounds":
            break
        diag_cex = result.counterexample
        d = diag_cex.final_valuation.get(instr.diag_var)
        if d is None or d not in instr.diag_domain:
            # the model passes without touching any known line; the method
            # cannot explain this fault
            diagnoses.append(Diagnosis(
                seq_line=d if d is not None else 0,
                original_line=None,
                witness_value=None,
                iteration=iteration,
                oracle_validated=False,
            ))
            status = "inconclusive"
            break
        site = instr.wrap_sites.get(d)
        witness = None
        for line, value in diag_cex.nondet_choices:
            if line == site:
                witness = value
        t0 = time.perf_counter()
        validated = witness is not None and validate_diag(
            seq, d, witness, config)
        timings["validate"] += time.perf_counter() - t0
        diagnoses.append(Diagnosis(
            seq_line=d,
            original_line=_original_line(seq, d),
            witness_value=witness,
            iteration=iteration,
            oracle_validated=validated,
        ))
        instr = block_diag(instr, d)

    if status is None:
        status = "faults-found" if diagnoses else "inconclusive"
    return DiagnosisReport(
        status=status,
        diagnoses=diagnoses,
        found_error_count=len(diagnoses),
        counterexample=cex,
        timings=timings,
        deadlock=deadlock,
        sequential=seq,
        instrumented=instr,
    )


def _original_line(seq: SequentialProgram, seq_line: int) -> int | None:
    entry = seq.line_map.get(seq_line)
    if entry is None:
        return None
    if entry.kind == "original":
        return entry.value
    if entry.value == "unwind-copy":
        return entry.origin
    return None


def _substitute(seq: SequentialProgram, seq_line: int,
                witness: int) -> Program:
    program = parse(pretty_print(seq.program))
    stmt = line_table(program).get(seq_line)
    if stmt is None:
        raise ValueError(f"line {seq_line} does not exist")
    if isinstance(stmt, Assign):
        stmt.expr = IntLit(witness)
    elif isinstance(stmt, (If, While)):
        if isinstance(stmt, If):
            stmt.cond = IntLit(witness)
        else:
            stmt.cond = IntLit(witness)
    else:
        raise ValueError(f"line {seq_line} is not substitutable")
    return program


def validate_diag(seq: SequentialProgram, d: int, witness: int,
                  config: VerifierConfig) -> bool:
    """True iff fixing line d to the constant witness makes the sequential
    program verify clean, with no loop left running at the bound."""
    program = _substitute(seq, d, witness)
    result = verify(program, _seq_config(config))
    return result.outcome == "safe-within-bounds" and not result.bound_hit


def brute_force_diagnoses(seq: SequentialProgram,
                          config: VerifierConfig) -> list[tuple[int, int]]:
    """Exhaustive localization oracle: every eligible line crossed with
    every candidate value; a line counts when some substitution makes the
    program verify clean and the line lies on the failing path."""
    run_cfg = _seq_config(config)
    baseline = verify(seq.program, run_cfg)
    if baseline.outcome == "safe-within-bounds" and not baseline.bound_hit:
        return []
    kind, steps, _ = first_path(seq.program, run_cfg)
    executed = {s.line for s in steps}
    lo, hi = config.nondet_domain
    found: list[tuple[int, int]] = []
    for line, wrap_kind in sorted(eligible_lines(seq).items()):
        if line not in executed:
            continue
        values = (0, 1) if wrap_kind == "cond" else range(lo, hi + 1)
        for value in values:
            program = _substitute(seq, line, value)
            result = verify(program, run_cfg)
            if result.outcome == "safe-within-bounds" and not \
                    result.bound_hit:
                found.append((line, value))
                break
    return found


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------


def report_to_json(report: DiagnosisReport) -> str:
    doc = {
        "status": report.status,
        "found_error_count": report.found_error_count,
        "diagnoses": [
            {
                "seq_line": d.seq_line,
                "original_line": d.original_line,
                "witness_value": d.witness_value,
                "iteration": d.iteration,
                "oracle_validated": d.oracle_validated,
            }
            for d in report.diagnoses
        ],
        "timings": {k: round(v, 6) for k, v in report.timings.items()},
    }
    return json.dumps(doc, indent=2) + "\n"


def report_from_json(text: str) -> DiagnosisReport:
    doc = json.loads(text)
    return DiagnosisReport(
        status=doc["status"],
        diagnoses=[Diagnosis(d["seq_line"], d["original_line"],
                             d["witness_value"], d["iteration"],
                             d["oracle_validated"])
                   for d in doc["diagnoses"]],
        found_error_count=doc["found_error_count"],
        counterexample=None,
        timings=dict(doc["timings"]),
    )
