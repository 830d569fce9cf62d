"""Turns a concurrent program plus one failing schedule into a sequential
program that replays exactly that schedule.

Output shape: a global `order` array holding the segment tags, a main whose
for-loop dispatches `switch (order[order_index])`, one outer case per thread
(case 1 is the original main), inner case labels marking segment entry
points, and `if (order[order_index] == tag) break;` guards marking segment
exits. Guards inside loops carry a loopcounter equality so they fire only at
the recorded iteration. Locks and condition variables are either erased or
modelled as plain integers depending on whether the counterexample was a
deadlock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .syntax import (
    ArrayDecl,
    Assert,
    Assign,
    Assume,
    Binary,
    Block,
    Break,
    CallAssign,
    CaseLabel,
    CondAttrDecl,
    CondDecl,
    CondInit,
    CondSignal,
    CondWait,
    Decl,
    DefaultLabel,
    Expr,
    For,
    FunctionDef,
    If,
    Index,
    IntLit,
    MutexDecl,
    MutexLock,
    MutexUnlock,
    Nondet,
    Program,
    PTHREAD_KINDS,
    Return,
    Stmt,
    Switch,
    Ternary,
    ThreadAttrDecl,
    ThreadCreate,
    ThreadDecl,
    ThreadExit,
    ThreadJoin,
    Unary,
    Var,
    While,
    iter_stmts,
    program_stmts,
    renumber,
)


class RuleGapError(Exception):
    """A statement kind has no transformation rule."""


class GuardPlacementError(Exception):
    """A schedule position has no image in the sequential program."""


# ---------------------------------------------------------------------------
# Schedule
# ---------------------------------------------------------------------------


@dataclass
class Segment:
    thread: int
    from_line: int
    to_line: int
    # completed iterations of each loop enclosing the segment-ending switch,
    # keyed by the loop's original line; empty for the final segment
    loop_counters: dict[int, int]
    tag: int
    resumes_wait: bool = False


@dataclass
class Schedule:
    segments: list[Segment]
    order_tags: list[int]
    per_thread_counts: dict[int, int]
    # recorded nondet choices, used to pin input values during replay
    nondet_pins: list[tuple[int, int]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Line map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MapEntry:
    kind: str  # 'original' | 'synthetic'
    value: int | str  # original line, or the synthetic reason
    origin: int | None = None  # callee line for unwind-copy entries


SYNTHETIC_REASONS = (
    "framework",
    "order-control",
    "loopcounter",
    "mutex-model",
    "cond-model",
    "unwind-copy",
    "nondet-pin",
)


def original_entry(line: int) -> MapEntry:
    return MapEntry("original", line)


def synthetic_entry(reason: str, origin: int | None = None) -> MapEntry:
    return MapEntry("synthetic", reason, origin)


@dataclass
class SequentialProgram:
    program: Program
    line_map: dict[int, MapEntry]

    # transformation bookkeeping, populated by the builder and consumed by
    # inject_order_control; None once injection has run
    anchors: dict | None = field(default=None, repr=False)
    injected: bool = False

    def original_line(self, seq_line: int) -> int | None:
        entry = self.line_map.get(seq_line)
        if entry is not None and entry.kind == "original":
            return entry.value
        return None


def line_map_to_json(line_map: dict[int, MapEntry]) -> str:
    doc = {}
    for line in sorted(line_map):
        entry = line_map[line]
        if entry.kind == "original":
            doc[str(line)] = {"kind": "original", "value": entry.value}
        elif entry.value == "unwind-copy":
            doc[str(line)] = {
                "kind": "synthetic",
                "value": {"reason": "unwind-copy", "line": entry.origin},
            }
        else:
            doc[str(line)] = {"kind": "synthetic", "value": entry.value}
    return json.dumps(doc, indent=2) + "\n"


def line_map_from_json(text: str) -> dict[int, MapEntry]:
    doc = json.loads(text)
    result: dict[int, MapEntry] = {}
    for key, obj in doc.items():
        if obj["kind"] == "original":
            result[int(key)] = original_entry(obj["value"])
        elif isinstance(obj["value"], dict):
            result[int(key)] = synthetic_entry("unwind-copy",
                                               obj["value"]["line"])
        else:
            result[int(key)] = synthetic_entry(obj["value"])
    return result


# ---------------------------------------------------------------------------
# Expression copying and renaming
# ---------------------------------------------------------------------------


def _copy_expr(expr: Expr, rename: dict[str, str]) -> Expr:
    if isinstance(expr, IntLit):
        return IntLit(expr.value)
    if isinstance(expr, Var):
        return Var(rename.get(expr.name, expr.name))
    if isinstance(expr, Index):
        return Index(expr.name, _copy_expr(expr.index, rename))
    if isinstance(expr, Nondet):
        return Nondet(expr.lo, expr.hi)
    if isinstance(expr, Unary):
        return Unary(expr.op, _copy_expr(expr.operand, rename))
    if isinstance(expr, Binary):
        return Binary(expr.op, _copy_expr(expr.left, rename),
                      _copy_expr(expr.right, rename))
    if isinstance(expr, Ternary):
        return Ternary(_copy_expr(expr.cond, rename),
                       _copy_expr(expr.then_expr, rename),
                       _copy_expr(expr.else_expr, rename))
    raise RuleGapError(f"cannot copy expression {expr!r}")


class _NamePool:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)

    def fresh(self, base: str) -> str:
        if base not in self.taken:
            self.taken.add(base)
            return base
        k = 2
        while f"{base}_{k}" in self.taken:
            k += 1
        name = f"{base}_{k}"
        self.taken.add(name)
        return name


def _mark(stmt: Stmt, prov: MapEntry, orig: int | None = None) -> Stmt:
    stmt._prov = prov
    stmt._orig = orig
    return stmt


# ---------------------------------------------------------------------------
# Call unwinding
# ---------------------------------------------------------------------------


def _inline_call(call: CallAssign, fns: dict[str, FunctionDef],
                 pool: _NamePool) -> Block:
    fn = fns[call.func]
    rename: dict[str, str] = {}
    stmts: list[Stmt] = []
    for param, arg in zip(fn.params, call.args):
        fresh = pool.fresh(param)
        rename[param] = fresh
        stmts.append(_mark(Decl(fresh, _copy_expr(arg, {})),
                           synthetic_entry("unwind-copy", call.line)))
    body = _unwind_stmts(fn.body.stmts, fns, pool, copy_rename=rename,
                         copy_of=call)
    stmts.extend(body)
    block = Block(stmts)
    return _mark(block, original_entry(call.line), call.line)


def _unwind_stmts(stmts: list[Stmt], fns: dict[str, FunctionDef],
                  pool: _NamePool, copy_rename: dict[str, str] | None = None,
                  copy_of: CallAssign | None = None) -> list[Stmt]:
    """Copies statements, inlining every call. With copy_rename set, the
    copy is a callee body: locals are freshly renamed and returns become
    assignments to the call target."""
    rename = copy_rename if copy_rename is not None else {}
    out: list[Stmt] = []

    def prov_for(s: Stmt) -> tuple[MapEntry, int | None]:
        if copy_of is not None:
            return synthetic_entry("unwind-copy", s.line), None
        return original_entry(s.line), s.line

    for s in stmts:
        prov, orig = prov_for(s)
        if isinstance(s, Decl):
            name = s.name
            if copy_of is not None:
                name = pool.fresh(s.name)
                rename[s.name] = name
            init = _copy_expr(s.init, rename) if s.init is not None else None
            out.append(_mark(Decl(name, init), prov, orig))
        elif isinstance(s, Assign):
            out.append(_mark(
                Assign(rename.get(s.name, s.name),
                       _copy_expr(s.expr, rename)), prov, orig))
        elif isinstance(s, CallAssign):
            inner = CallAssign(rename.get(s.name, s.name), s.func,
                               [_copy_expr(a, rename) for a in s.args])
            inner.line = s.line
            block = _inline_call(inner, fns, pool)
            if copy_of is not None:
                block._prov = synthetic_entry("unwind-copy", s.line)
                block._orig = None
            out.append(block)
        elif isinstance(s, Return):
            if copy_of is not None:
                out.append(_mark(
                    Assign(copy_of.name, _copy_expr(s.expr, rename)),
                    synthetic_entry("unwind-copy", s.line)))
            else:
                out.append(_mark(Return(_copy_expr(s.expr, rename)),
                                 prov, orig))
        elif isinstance(s, If):
            node = If(_copy_expr(s.cond, rename),
                      Block(_unwind_stmts(s.then.stmts, fns, pool,
                                          rename if copy_of else None,
                                          copy_of)),
                      Block(_unwind_stmts(s.els.stmts, fns, pool,
                                          rename if copy_of else None,
                                          copy_of))
                      if s.els is not None else None)
            out.append(_mark(node, prov, orig))
        elif isinstance(s, While):
            node = While(_copy_expr(s.cond, rename),
                         Block(_unwind_stmts(s.body.stmts, fns, pool,
                                             rename if copy_of else None,
                                             copy_of)))
            out.append(_mark(node, prov, orig))
        elif isinstance(s, Block):
            node = Block(_unwind_stmts(s.stmts, fns, pool,
                                       rename if copy_of else None, copy_of))
            out.append(_mark(node, prov, orig))
        elif isinstance(s, Assert):
            out.append(_mark(Assert(_copy_expr(s.expr, rename)), prov, orig))
        elif isinstance(s, Assume):
            out.append(_mark(Assume(_copy_expr(s.expr, rename)), prov, orig))
        elif isinstance(s, PTHREAD_KINDS):
            if copy_of is not None:
                raise RuleGapError(
                    "threading statement inside a callable function")
            copied = _copy_pthread(s)
            out.append(_mark(copied, prov, orig))
        elif isinstance(s, (For, Switch, CaseLabel, DefaultLabel, Break,
                            ArrayDecl)):
            raise RuleGapError(
                f"framework statement {type(s).__name__} has no "
                "transformation rule")
        else:
            raise RuleGapError(f"no unwinding rule for {type(s).__name__}")
    return out


def _copy_pthread(s: Stmt) -> Stmt:
    if isinstance(s, ThreadDecl):
        return ThreadDecl(s.name)
    if isinstance(s, ThreadAttrDecl):
        return ThreadAttrDecl(s.name)
    if isinstance(s, CondAttrDecl):
        return CondAttrDecl(s.name)
    if isinstance(s, ThreadCreate):
        return ThreadCreate(s.handle, s.func)
    if isinstance(s, ThreadJoin):
        return ThreadJoin(s.handle)
    if isinstance(s, ThreadExit):
        return ThreadExit()
    if isinstance(s, MutexDecl):
        return MutexDecl(s.name)
    if isinstance(s, MutexLock):
        return MutexLock(s.name)
    if isinstance(s, MutexUnlock):
        return MutexUnlock(s.name)
    if isinstance(s, CondDecl):
        return CondDecl(s.name)
    if isinstance(s, CondInit):
        return CondInit(s.name)
    if isinstance(s, CondWait):
        return CondWait(s.cond, s.mutex)
    if isinstance(s, CondSignal):
        return CondSignal(s.name)
    raise RuleGapError(f"unknown pthread statement {type(s).__name__}")


def unwind_calls(program: Program) -> Program:
    """Replaces every call-assignment with an inlined block and drops the
    callable function definitions."""
    fns = {fn.name: fn for fn in program.functions}
    pool = _NamePool(_taken_names(program, include_callable_locals=False))
    new_fns = []
    for fn in program.functions:
        if fn.return_type == "int":
            continue
        new_fns.append(FunctionDef(
            fn.name, fn.return_type, list(fn.params),
            Block(_unwind_stmts(fn.body.stmts, fns, pool))))
    new_main = FunctionDef(
        "main", "int", [],
        Block(_unwind_stmts(program.main.body.stmts, fns, pool)))
    out = Program(
        globals=[_mark(_copy_global(g), original_entry(g.line), g.line)
                 for g in program.globals],
        functions=new_fns,
        main=new_main,
        threads=[],
    )
    out.threads = [type(t)(t.ordinal, t.function) for t in program.threads]
    return renumber(out)


def _copy_global(g: Stmt) -> Stmt:
    if isinstance(g, Decl):
        return Decl(g.name, _copy_expr(g.init, {}) if g.init else None)
    if isinstance(g, ArrayDecl):
        return ArrayDecl(g.name, list(g.values))
    return _copy_pthread(g)


def _taken_names(program: Program,
                 include_callable_locals: bool = True) -> set[str]:
    taken = {"order", "order_index", "main", "nondet", "diag"}
    for g in program.globals:
        name = getattr(g, "name", None)
        if name:
            taken.add(name)
    for fn in program.functions + [program.main]:
        taken.add(fn.name)
        if fn.return_type == "int" and fn.name != "main" \
                and not include_callable_locals:
            # inlined copies may reuse the callee's own names freely
            continue
        taken.update(fn.params)
        for s in iter_stmts(fn.body.stmts):
            name = getattr(s, "name", None)
            if name:
                taken.add(name)
    return taken


# ---------------------------------------------------------------------------
# Per-statement rewrite rules
# ---------------------------------------------------------------------------


def apply_pthread_rules(stmt: Stmt, deadlock: bool) -> list[Stmt]:
    """Single-statement rewrite: threading statements are erased, or, when
    the counterexample deadlocked, locks and condition variables become
    plain integers with 0/1 assignments. Everything else passes through
    (call-assignments are unwound by a separate pass)."""
    if isinstance(stmt, (ThreadDecl, ThreadAttrDecl, CondAttrDecl,
                         ThreadCreate, ThreadJoin, ThreadExit)):
        return []
    if isinstance(stmt, MutexDecl):
        return [Decl(stmt.name, IntLit(0))] if deadlock else []
    if isinstance(stmt, MutexLock):
        return [Assign(stmt.name, IntLit(1))] if deadlock else []
    if isinstance(stmt, MutexUnlock):
        return [Assign(stmt.name, IntLit(0))] if deadlock else []
    if isinstance(stmt, CondDecl):
        return [Decl(stmt.name)] if deadlock else []
    if isinstance(stmt, CondInit):
        return [Assign(stmt.name, IntLit(0))] if deadlock else []
    if isinstance(stmt, CondWait):
        return [Assign(stmt.cond, IntLit(1))] if deadlock else []
    if isinstance(stmt, CondSignal):
        return [Assign(stmt.name, IntLit(0))] if deadlock else []
    if isinstance(stmt, (Decl, Assign, CallAssign, If, While, Block, Assert,
                         Assume, Return)):
        return [stmt]
    raise RuleGapError(
        f"statement kind {type(stmt).__name__} has no transformation rule")


# ---------------------------------------------------------------------------
# Skeleton construction
# ---------------------------------------------------------------------------


class _Anchor:
    """Image slot of one original statement inside the sequential program."""

    def __init__(self, container: list[Stmt], index: int, length: int,
                 loops: list[int], stmt: Stmt | None):
        self.container = container
        self.index = index
        self.length = length
        self.loops = loops  # original lines of enclosing loops
        self.stmt = stmt  # the image node for structured statements


class _Builder:
    def __init__(self, program: Program, schedule: Schedule, deadlock: bool):
        self.deadlock = deadlock
        self.pool = _NamePool(_taken_names(program))
        self.anchors: dict[int, _Anchor] = {}
        self.loop_bodies: dict[int, tuple[list[Stmt], list[int]]] = {}
        self.if_bodies: dict[int, tuple] = {}
        self.loop_names: dict[int, str] = {}
        self.loop_decls: list[Stmt] = []
        self.hoisted: list[Stmt] = []
        self.model_globals: list[Stmt] = []
        self.pins: dict[int, list[int]] = {}
        for line, value in schedule.nondet_pins:
            self.pins.setdefault(line, []).append(value)
        self.loop_count = 0

    def loopcounter(self, node: While) -> str:
        self.loop_count += 1
        name = self.pool.fresh(f"loopcounter_{self.loop_count}")
        decl = _mark(Decl(name, IntLit(0)), synthetic_entry("loopcounter"))
        self.loop_decls.append(decl)
        return name

    def transform_globals(self, stmts: list[Stmt]) -> None:
        for g in stmts:
            orig = getattr(g, "_orig", g.line)
            if isinstance(g, Decl):
                self.model_globals.append(_mark(
                    Decl(g.name, g.init), original_entry(orig), orig))
            elif isinstance(g, MutexDecl):
                if self.deadlock:
                    self.model_globals.append(_mark(
                        Decl(g.name, IntLit(0)),
                        synthetic_entry("mutex-model"), orig))
            elif isinstance(g, CondDecl):
                if self.deadlock:
                    self.model_globals.append(_mark(
                        Decl(g.name), synthetic_entry("cond-model"), orig))
            elif isinstance(g, (ThreadDecl, ThreadAttrDecl, CondAttrDecl)):
                pass
            else:
                raise RuleGapError(
                    f"global kind {type(g).__name__} has no rule")

    def transform_body(self, fn: FunctionDef, rename: dict[str, str],
                       prefix: str) -> list[Stmt]:
        # hoist every local to a renamed global so segments resumed in a
        # later dispatch still see their values
        for s in iter_stmts(fn.body.stmts):
            if isinstance(s, Decl):
                rename[s.name] = self.pool.fresh(f"{prefix}_{s.name}")
        return self._stmts(fn.body.stmts, rename, [])

    def _stmts(self, stmts: list[Stmt], rename: dict[str, str],
               loops: list[int]) -> list[Stmt]:
        out: list[Stmt] = []
        for s in stmts:
            orig = getattr(s, "_orig", None)
            prov = getattr(s, "_prov", None) or (
                original_entry(s.line) if s.line else
                synthetic_entry("framework"))
            start = len(out)
            images = self._one(s, rename, loops, out, prov)
            if orig is not None:
                self.anchors[orig] = _Anchor(
                    out, start, len(out) - start, list(loops),
                    out[start] if len(out) > start else None)
        return out

    def _one(self, s: Stmt, rename: dict[str, str], loops: list[int],
             out: list[Stmt], prov: MapEntry) -> None:
        orig = getattr(s, "_orig", None)
        if isinstance(s, Decl):
            # declaration was hoisted; keep the initializer in place
            self.hoisted.append(_mark(Decl(rename[s.name]), prov, None))
            if s.init is not None:
                out.append(_mark(
                    Assign(rename[s.name], _copy_expr(s.init, rename)),
                    prov, orig))
            return
        if isinstance(s, Assign):
            img = _mark(Assign(rename.get(s.name, s.name),
                               _copy_expr(s.expr, rename)), prov, orig)
            out.append(img)
            if isinstance(s.expr, Nondet) and orig is not None:
                values = self.pins.get(orig, [])
                if len(values) == 1:
                    out.append(_mark(
                        Assume(Binary("==", Var(img.name),
                                      IntLit(values[0]))),
                        synthetic_entry("nondet-pin"), None))
            return
        if isinstance(s, Assert):
            out.append(_mark(Assert(_copy_expr(s.expr, rename)), prov, orig))
            return
        if isinstance(s, Assume):
            out.append(_mark(Assume(_copy_expr(s.expr, rename)), prov, orig))
            return
        if isinstance(s, Return):
            out.append(_mark(Break(), prov, orig))
            return
        if isinstance(s, Block):
            node = Block(self._stmts(s.stmts, rename, loops))
            out.append(_mark(node, prov, orig))
            return
        if isinstance(s, If):
            then_list = self._stmts(s.then.stmts, rename, loops)
            els_list = self._stmts(s.els.stmts, rename, loops) \
                if s.els is not None else None
            node = If(_copy_expr(s.cond, rename), Block(then_list),
                      Block(els_list) if els_list is not None else None)
            out.append(_mark(node, prov, orig))
            if orig is not None:
                self.if_bodies[orig] = (then_list, els_list, list(loops))
            return
        if isinstance(s, While):
            inner_loops = loops + [orig] if orig is not None else loops
            body_list = self._stmts(s.body.stmts, rename, inner_loops)
            lc = self.loopcounter(s)
            inc = _mark(Assign(lc, Binary("+", Var(lc), IntLit(1))),
                        synthetic_entry("loopcounter"), None)
            inc._lc_inc = True
            body_list.append(inc)
            node = While(_copy_expr(s.cond, rename), Block(body_list))
            out.append(_mark(node, prov, orig))
            if orig is not None:
                self.loop_names[orig] = lc
                self.loop_bodies[orig] = (body_list, inner_loops)
            return
        if isinstance(s, PTHREAD_KINDS):
            reason = "mutex-model" if isinstance(
                s, (MutexDecl, MutexLock, MutexUnlock)) else "cond-model"
            for img in apply_pthread_rules(s, self.deadlock):
                if isinstance(img, Decl):
                    self.model_globals.append(_mark(
                        img, synthetic_entry(reason), orig))
                else:
                    out.append(_mark(img, synthetic_entry(reason), orig))
            return
        raise RuleGapError(
            f"statement kind {type(s).__name__} has no transformation rule")


def _build_skeleton(program: Program, schedule: Schedule,
                    deadlock: bool) -> SequentialProgram:
    unwound = _unwind_annotated(program)
    builder = _Builder(program, schedule, deadlock)
    builder.transform_globals(unwound.globals)

    case_bodies: dict[int, list[Stmt]] = {}
    case_bodies[0] = builder.transform_body(unwound.main, {}, "main")
    fn_by_name = {fn.name: fn for fn in unwound.functions}
    for td in unwound.threads:
        fn = fn_by_name[td.function]
        case_bodies[td.ordinal] = builder.transform_body(
            fn, {}, td.function)

    scheduled = {seg.thread for seg in schedule.segments}
    switch_body: list[Stmt] = []
    for ordinal in range(len(unwound.threads) + 1):
        switch_body.append(_mark(CaseLabel(ordinal + 1),
                                 synthetic_entry("framework")))
        if ordinal in scheduled:
            switch_body.append(_mark(CaseLabel((ordinal + 1) * 10 + 1),
                                     synthetic_entry("framework")))
        # the body stays in its own block so guard insertion can keep
        # addressing the same statement list
        switch_body.append(_mark(Block(case_bodies[ordinal]),
                                 synthetic_entry("framework")))
        switch_body.append(_mark(Break(), synthetic_entry("framework")))
    switch_body.append(_mark(DefaultLabel(), synthetic_entry("framework")))
    switch_body.append(_mark(Break(), synthetic_entry("framework")))

    n = len(schedule.order_tags)
    main_body: list[Stmt] = [
        _mark(Decl("order_index"), synthetic_entry("framework")),
        _mark(For("order_index", IntLit(0),
                  Binary("<", Var("order_index"), IntLit(n)),
                  Binary("+", Var("order_index"), IntLit(1)),
                  Block([_mark(Switch(Index("order", Var("order_index")),
                                      Block(switch_body)),
                               synthetic_entry("framework"))])),
              synthetic_entry("framework")),
        _mark(Return(IntLit(1)), synthetic_entry("framework")),
    ]

    order_decl = _mark(ArrayDecl("order", list(schedule.order_tags)),
                       synthetic_entry("framework"))
    globals_out = [order_decl] + builder.model_globals + builder.hoisted \
        + builder.loop_decls

    seq_program = Program(
        globals=globals_out,
        functions=[],
        main=FunctionDef("main", "int", [], Block(main_body)),
        threads=[],
    )
    seq = SequentialProgram(seq_program, {}, anchors={
        "stmt_anchors": builder.anchors,
        "loop_bodies": builder.loop_bodies,
        "if_bodies": builder.if_bodies,
        "loop_names": builder.loop_names,
    })
    _finalize(seq)
    return seq


def _unwind_annotated(program: Program) -> Program:
    """Like unwind_calls but keeps provenance annotations and skips
    renumbering (anchor keys stay in the original numbering)."""
    fns = {fn.name: fn for fn in program.functions}
    pool = _NamePool(_taken_names(program, include_callable_locals=False))
    new_fns = []
    for fn in program.functions:
        if fn.return_type == "int":
            continue
        new_fns.append(FunctionDef(
            fn.name, fn.return_type, list(fn.params),
            Block(_unwind_stmts(fn.body.stmts, fns, pool))))
    new_main = FunctionDef(
        "main", "int", [],
        Block(_unwind_stmts(program.main.body.stmts, fns, pool)))
    out = Program(
        globals=[_mark(_copy_global(g), original_entry(g.line), g.line)
                 for g in program.globals],
        functions=new_fns,
        main=new_main,
        threads=[type(t)(t.ordinal, t.function) for t in program.threads],
    )
    return out


def _finalize(seq: SequentialProgram) -> None:
    renumber(seq.program)
    line_map: dict[int, MapEntry] = {}
    for stmt in program_stmts(seq.program):
        prov = getattr(stmt, "_prov", None)
        if prov is None:
            prov = synthetic_entry("framework")
        line_map[stmt.line] = prov
    seq.line_map = line_map


# ---------------------------------------------------------------------------
# Order-control injection
# ---------------------------------------------------------------------------


def _guard(tag: int, counters: list[tuple[str, int]]) -> If:
    cond: Expr = Binary("==", Index("order", Var("order_index")),
                        IntLit(tag))
    for name, value in counters:
        cond = Binary("&&", cond, Binary("==", Var(name), IntLit(value)))
    guard = If(cond, Block([_mark(Break(),
                                  synthetic_entry("order-control"))]))
    return _mark(guard, synthetic_entry("order-control"))


def inject_order_control(seq: SequentialProgram,
                         schedule: Schedule) -> SequentialProgram:
    """Inserts segment-exit guards and segment-entry case labels so that the
    sequential program performs the schedule's segments in order."""
    if seq.anchors is None or seq.injected:
        raise GuardPlacementError(
            "order control can only be injected once, on a freshly built "
            "sequential program")
    anchors: dict[int, _Anchor] = seq.anchors["stmt_anchors"]
    loop_bodies = seq.anchors["loop_bodies"]
    if_bodies = seq.anchors["if_bodies"]
    loop_names: dict[int, str] = seq.anchors["loop_names"]

    jobs: list[tuple[list[Stmt], int, list[Stmt]]] = []

    def conjuncts(loops: list[int], seg: Segment) -> list[tuple[str, int]]:
        pairs = []
        for loop_line in loops:
            if loop_line in seg.loop_counters:
                pairs.append((loop_names[loop_line],
                              seg.loop_counters[loop_line]))
            else:
                raise GuardPlacementError(
                    f"no recorded iteration count for the loop at line "
                    f"{loop_line}")
        return pairs

    def after_image(line: int) -> tuple[list[Stmt], int, list[int]]:
        anchor = anchors.get(line)
        if anchor is None:
            raise GuardPlacementError(f"line {line} has no image")
        idx = anchor.index + anchor.length
        while idx < len(anchor.container) and \
                getattr(anchor.container[idx], "_lc_inc", False):
            idx += 1
        return anchor.container, idx, anchor.loops

    def before_image(line: int) -> tuple[list[Stmt], int, list[int]]:
        anchor = anchors.get(line)
        if anchor is None:
            raise GuardPlacementError(f"line {line} has no image")
        return anchor.container, anchor.index, anchor.loops

    segments = schedule.segments
    for i, seg in enumerate(segments):
        if i == len(segments) - 1:
            break  # the final segment runs to the violation, no exit guard
        nxt = next((s for s in segments[i + 1:] if s.thread == seg.thread),
                   None)
        is_branch = seg.to_line in loop_bodies or seg.to_line in if_bodies
        if nxt is not None:
            if not is_branch:
                # the thread stopped right after this statement finished
                container, idx, loops = after_image(seg.to_line)
            elif nxt.from_line == seg.to_line and seg.to_line in loop_bodies:
                body_list, body_loops = loop_bodies[seg.to_line]
                container, idx, loops = body_list, 0, body_loops
            else:
                # the thread stopped after evaluating a condition; resume
                # right before the first statement it executed afterwards
                container, idx, loops = before_image(nxt.from_line)
            stmts: list[Stmt] = [_guard(seg.tag, conjuncts(loops, seg)),
                                 _mark(CaseLabel(nxt.tag),
                                       synthetic_entry("order-control"))]
            jobs.append((container, idx, stmts))
            continue
        # last segment of this thread: stop the overshoot wherever execution
        # may sit after the final recorded step
        positions: list[tuple[list[Stmt], int, list[int]]] = []
        if seg.to_line in loop_bodies:
            body_list, body_loops = loop_bodies[seg.to_line]
            positions.append((body_list, 0, body_loops))
            positions.append(after_image(seg.to_line))
        elif seg.to_line in if_bodies:
            then_list, els_list, if_loops = if_bodies[seg.to_line]
            positions.append((then_list, 0, if_loops))
            if els_list is not None:
                positions.append((els_list, 0, if_loops))
            positions.append(after_image(seg.to_line))
        else:
            positions.append(after_image(seg.to_line))
        for container, idx, loops in positions:
            jobs.append((container, idx,
                         [_guard(seg.tag, conjuncts(loops, seg))]))

    by_container: dict[int, list[tuple[int, int, list[Stmt]]]] = {}
    containers: dict[int, list[Stmt]] = {}
    for order, (container, idx, stmts) in enumerate(jobs):
        containers[id(container)] = container
        by_container.setdefault(id(container), []).append(
            (idx, order, stmts))
    for key, entries in by_container.items():
        container = containers[key]
        for idx, _, stmts in sorted(entries, key=lambda e: (-e[0], -e[1])):
            container[idx:idx] = stmts

    seq.injected = True
    seq.anchors = None
    _finalize(seq)
    return seq


def sequentialize(program: Program, schedule: Schedule,
                  deadlock: bool) -> SequentialProgram:
    """Full transformation: unwinding, rewrite rules, hoisting, framework
    skeleton, and order control."""
    seq = _build_skeleton(program, schedule, deadlock)
    return inject_order_control(seq, schedule)


def build_skeleton(program: Program, schedule: Schedule,
                   deadlock: bool) -> SequentialProgram:
    """The sequential program before guard injection; exposed so the
    injection step can be exercised on its own."""
    return _build_skeleton(program, schedule, deadlock)


def pthread_free(program: Program) -> bool:
    """True when no threading-category statement remains."""
    return not any(isinstance(s, PTHREAD_KINDS)
                   for s in program_stmts(program))
