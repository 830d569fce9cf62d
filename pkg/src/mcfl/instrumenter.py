"""Diagnosis instrumentation for sequential programs.

A fresh `diag` variable picks a line nondeterministically; every eligible
line's effect is replaced by an unconstrained value when diag names it;
original assertions become assumptions, and a final `assert(0)` marks
successful completion. A verification run that reaches the final assertion
has found a diag value whose line, when changed, lets the program pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .parser import parse
from .sequentializer import SequentialProgram
from .syntax import (
    Assert,
    Assign,
    Assume,
    Binary,
    Block,
    Decl,
    If,
    IntLit,
    Nondet,
    Program,
    Return,
    Stmt,
    Ternary,
    Var,
    While,
    child_blocks,
    pretty_print,
    program_stmts,
    renumber,
)


class NothingToInstrument(Exception):
    """The sequential program has no line eligible for diagnosis."""


@dataclass
class InstrumentedProgram:
    program: Program
    diag_domain: set[int]  # eligible lines, in the sequential numbering
    blocked: set[int]
    diag_var: str
    seq: SequentialProgram = field(repr=False)
    # sequential line -> line of its wrapped statement in the instrumented
    # program, used to read the witness value off a counterexample
    wrap_sites: dict[int, int] = field(default_factory=dict, repr=False)
    assert_false_line: int = 0


def eligible_lines(seq: SequentialProgram) -> dict[int, str]:
    """Eligible lines and their wrap kind ('assign' or 'cond').

    Assignments and if/while conditions qualify when they image original
    code (inlined copies included). Declarations, nondet reads, assumptions,
    and all framework, order-control, loopcounter and lock-model lines stay
    out so every diagnosis maps back to the source program.
    """
    result: dict[int, str] = {}
    for stmt in program_stmts(seq.program):
        entry = seq.line_map.get(stmt.line)
        if entry is None:
            continue
        if entry.kind != "original" and entry.value != "unwind-copy":
            continue
        if isinstance(stmt, Assign) and not isinstance(stmt.expr, Nondet):
            result[stmt.line] = "assign"
        elif isinstance(stmt, (If, While)):
            result[stmt.line] = "cond"
    return result


def _clone(program: Program) -> Program:
    return parse(pretty_print(program))


def instrument(seq: SequentialProgram) -> InstrumentedProgram:
    return _instrument_core(seq, set())


def block_diag(instr: InstrumentedProgram, value: int) -> InstrumentedProgram:
    """Adds assume(diag != value); repeated values change nothing."""
    if value in instr.blocked:
        return instr
    return _instrument_core(instr.seq, instr.blocked | {value})


def _instrument_core(seq: SequentialProgram,
                     blocked: set[int]) -> InstrumentedProgram:
    domain = eligible_lines(seq)
    if not domain:
        raise NothingToInstrument(
            "no assignment or condition is eligible for diagnosis")
    program = _clone(seq.program)

    taken = {getattr(s, "name", "") for s in program_stmts(program)}
    taken.update(fn.name for fn in program.functions)
    diag = "diag"
    k = 2
    while diag in taken:
        diag = f"diag_{k}"
        k += 1

    for stmt in program_stmts(program):
        kind = domain.get(stmt.line)
        if kind == "assign":
            stmt.expr = Ternary(
                Binary("==", Var(diag), IntLit(stmt.line)), Nondet(),
                stmt.expr)
        elif kind == "cond":
            stmt.cond = Ternary(
                Binary("==", Var(diag), IntLit(stmt.line)), Nondet(0, 1),
                stmt.cond)

    _asserts_to_assumes(program.main.body)
    for fn in program.functions:
        _asserts_to_assumes(fn.body)

    body = program.main.body.stmts
    if body and isinstance(body[-1], Return):
        body.pop()
    final_assert = Assert(IntLit(0))
    body.append(final_assert)

    header: list[Stmt] = [
        Decl(diag),
        Assign(diag, Nondet(0, max(domain))),
    ]
    for b in sorted(blocked):
        header.append(Assume(Binary("!=", Var(diag), IntLit(b))))
    domain_expr = Binary("==", Var(diag), IntLit(0))
    for line in sorted(domain):
        domain_expr = Binary("||", domain_expr,
                             Binary("==", Var(diag), IntLit(line)))
    header.append(Assume(domain_expr))
    program.main.body.stmts = header + body

    renumber(program)

    wrap_sites: dict[int, int] = {}
    for stmt in program_stmts(program):
        expr = None
        if isinstance(stmt, Assign):
            expr = stmt.expr
        elif isinstance(stmt, (If, While)):
            expr = stmt.cond
        if isinstance(expr, Ternary) and isinstance(expr.cond, Binary) \
                and expr.cond.op == "==" \
                and isinstance(expr.cond.left, Var) \
                and expr.cond.left.name == diag \
                and isinstance(expr.cond.right, IntLit):
            wrap_sites[expr.cond.right.value] = stmt.line

    return InstrumentedProgram(
        program=program,
        diag_domain=set(domain),
        blocked=set(blocked),
        diag_var=diag,
        seq=seq,
        wrap_sites=wrap_sites,
        assert_false_line=final_assert.line,
    )


def _asserts_to_assumes(block: Block) -> None:
    for i, stmt in enumerate(block.stmts):
        if isinstance(stmt, Assert):
            block.stmts[i] = Assume(stmt.expr)
        else:
            for child in child_blocks(stmt):
                _asserts_to_assumes(child)


def instrumented_to_json(instr: InstrumentedProgram) -> str:
    doc = {
        "diag_var": instr.diag_var,
        "diag_domain": sorted(instr.diag_domain),
        "blocked": sorted(instr.blocked),
        "wrap_sites": {str(k): v
                       for k, v in sorted(instr.wrap_sites.items())},
        "assert_false_line": instr.assert_false_line,
    }
    return json.dumps(doc, indent=2) + "\n"
