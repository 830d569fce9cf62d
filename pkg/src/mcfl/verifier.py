"""Explicit-state bounded verifier for mini-C programs.

Each function body compiles to a flat instruction list; threads interleave at
statement granularity under a context-switch budget, loops unwind up to a
bound, and every nondet() branches over its value domain. Exploration is
depth-first with a fixed order (ascending thread ordinal, ascending nondet
value), so "first violation found" is deterministic and reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .syntax import (
    ArrayDecl,
    Assert,
    Assign,
    Assume,
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
    Binary,
    Var,
    While,
    enclosing_loops,
)


class ModelError(Exception):
    """The program performed an operation outside the modelled semantics
    (double thread creation, array index out of range)."""


class TraceMismatch(Exception):
    """A counterexample does not replay against the given program."""


# ---------------------------------------------------------------------------
# Configuration and result types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerifierConfig:
    context_bound: int = 4
    loop_bound: int = 3
    nondet_domain: tuple[int, int] = (0, 8)
    deadlock_check: bool = False
    max_states: int = 200_000

    def __post_init__(self):
        if self.loop_bound < 1:
            raise ValueError("loop_bound must be >= 1")
        if self.nondet_domain[0] > self.nondet_domain[1]:
            raise ValueError("nondet domain must be a non-empty interval")
        if self.context_bound < 0:
            raise ValueError("context_bound must be >= 0")
        if self.max_states < 1:
            raise ValueError("max_states must be >= 1")


@dataclass
class TraceStep:
    step_index: int
    thread: int
    line: int
    valuation: dict[str, int]


@dataclass(frozen=True)
class ContextSwitchRecord:
    switch_index: int  # 1-based, global
    from_thread: int
    to_thread: int
    at_line: int
    per_thread_index: int  # 1-based within from_thread


@dataclass(frozen=True)
class Violation:
    kind: str  # 'assertion' | 'deadlock' | 'division-by-zero'
    line: int | None = None
    blocked: tuple[int, ...] | None = None


@dataclass
class Counterexample:
    steps: list[TraceStep]
    switches: list[ContextSwitchRecord]
    violation: Violation
    nondet_choices: list[tuple[int, int]]
    # per switch: completed-iteration counts of the loops enclosing the
    # switch position, keyed by the loop's line id
    switch_loop_counters: list[dict[int, int]] = field(default_factory=list)
    # indices of steps that resume a condition wait (lock reacquisition)
    wait_resume_steps: set[int] = field(default_factory=set)

    @property
    def final_valuation(self) -> dict[str, int]:
        return self.steps[-1].valuation if self.steps else {}


@dataclass
class VerificationResult:
    outcome: str  # 'safe-within-bounds' | 'violation' | 'resource-exhausted'
    counterexample: Counterexample | None = None
    bound_hit: bool = False
    states: int = 0


# ---------------------------------------------------------------------------
# 64-bit two's-complement arithmetic
# ---------------------------------------------------------------------------

_HALF = 1 << 63
_FULL = 1 << 64


def wrap64(v: int) -> int:
    return ((v + _HALF) % _FULL) - _HALF


def c_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return wrap64(-q if (a < 0) != (b < 0) else q)


def c_mod(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    q = -q if (a < 0) != (b < 0) else q
    return wrap64(a - b * q)


# ---------------------------------------------------------------------------
# Compilation to flat instruction lists
# ---------------------------------------------------------------------------


@dataclass
class Instr:
    op: str
    line: int = 0
    name: str = ""
    expr: Expr | None = None
    args: tuple = ()
    target: int = -1  # jump/branch target
    aux: dict | None = None  # switch label map


class Code:
    def __init__(self, fname: str):
        self.fname = fname
        self.instrs: list[Instr] = []

    def emit(self, instr: Instr) -> int:
        self.instrs.append(instr)
        return len(self.instrs) - 1


def _compile_body(code: Code, stmts: list[Stmt], switch_ends: list[int],
                  switch_frames: list[dict]) -> None:
    for stmt in stmts:
        _compile_stmt(code, stmt, switch_ends, switch_frames)


def _compile_stmt(code: Code, stmt: Stmt, switch_ends: list[int],
                  switch_frames: list[dict]) -> None:
    ln = stmt.line
    if isinstance(stmt, Decl):
        code.emit(Instr("decl", ln, name=stmt.name, expr=stmt.init))
    elif isinstance(stmt, Assign):
        code.emit(Instr("assign", ln, name=stmt.name, expr=stmt.expr))
    elif isinstance(stmt, CallAssign):
        code.emit(Instr("call", ln, name=stmt.name,
                        args=(stmt.func, tuple(stmt.args))))
    elif isinstance(stmt, Assert):
        code.emit(Instr("assert", ln, expr=stmt.expr))
    elif isinstance(stmt, Assume):
        code.emit(Instr("assume", ln, expr=stmt.expr))
    elif isinstance(stmt, Return):
        code.emit(Instr("return", ln, expr=stmt.expr))
    elif isinstance(stmt, Block):
        _compile_body(code, stmt.stmts, switch_ends, switch_frames)
    elif isinstance(stmt, If):
        br = code.emit(Instr("branch", ln, expr=stmt.cond))
        _compile_body(code, stmt.then.stmts, switch_ends, switch_frames)
        if stmt.els is not None:
            jmp = code.emit(Instr("jump", ln))
            code.instrs[br].target = len(code.instrs)
            _compile_body(code, stmt.els.stmts, switch_ends, switch_frames)
            code.instrs[jmp].target = len(code.instrs)
        else:
            code.instrs[br].target = len(code.instrs)
    elif isinstance(stmt, While):
        code.emit(Instr("loop_enter", ln, name=str(ln)))
        head = code.emit(Instr("branch", ln, expr=stmt.cond, name=str(ln)))
        _compile_body(code, stmt.body.stmts, switch_ends, switch_frames)
        code.emit(Instr("loop_iter", ln, name=str(ln)))
        code.emit(Instr("jump", ln, target=head))
        code.instrs[head].target = len(code.instrs)
    elif isinstance(stmt, For):
        code.emit(Instr("for_assign", ln, name=stmt.var, expr=stmt.init))
        head = code.emit(Instr("branch", ln, expr=stmt.cond))
        _compile_body(code, stmt.body.stmts, switch_ends, switch_frames)
        code.emit(Instr("for_assign", ln, name=stmt.var, expr=stmt.update))
        code.emit(Instr("jump", ln, target=head))
        code.instrs[head].target = len(code.instrs)
    elif isinstance(stmt, Switch):
        frame: dict = {"labels": {}, "default": None}
        sw = code.emit(Instr("switch", ln, expr=stmt.scrutinee, aux=frame))
        switch_ends.append(sw)
        switch_frames.append(frame)
        _compile_body(code, stmt.body.stmts, switch_ends, switch_frames)
        switch_frames.pop()
        switch_ends.pop()
        frame["end"] = len(code.instrs)
    elif isinstance(stmt, CaseLabel):
        pc = code.emit(Instr("label", ln))
        if not switch_frames:
            raise ModelError("case label outside switch")
        switch_frames[-1]["labels"][stmt.value] = pc
    elif isinstance(stmt, DefaultLabel):
        pc = code.emit(Instr("label", ln))
        switch_frames[-1]["default"] = pc
    elif isinstance(stmt, Break):
        if not switch_ends:
            raise ModelError("break outside switch")
        code.emit(Instr("break", ln, target=switch_ends[-1]))
    elif isinstance(stmt, ThreadCreate):
        code.emit(Instr("create", ln, name=stmt.handle, args=(stmt.func,)))
    elif isinstance(stmt, ThreadJoin):
        code.emit(Instr("join", ln, name=stmt.handle))
    elif isinstance(stmt, ThreadExit):
        code.emit(Instr("exit", ln))
    elif isinstance(stmt, MutexLock):
        code.emit(Instr("lock", ln, name=stmt.name))
    elif isinstance(stmt, MutexUnlock):
        code.emit(Instr("unlock", ln, name=stmt.name))
    elif isinstance(stmt, CondWait):
        code.emit(Instr("wait", ln, name=stmt.cond, args=(stmt.mutex,)))
    elif isinstance(stmt, CondSignal):
        code.emit(Instr("signal", ln, name=stmt.name))
    elif isinstance(stmt, CondInit):
        code.emit(Instr("nopstep", ln))
    elif isinstance(stmt, (ThreadDecl, ThreadAttrDecl, CondAttrDecl,
                           MutexDecl, CondDecl)):
        code.emit(Instr("nopstep", ln))
    elif isinstance(stmt, ArrayDecl):
        raise ModelError("array declarations are global only")
    else:
        raise ModelError(f"cannot compile statement {stmt!r}")


class CompiledProgram:
    def __init__(self, program: Program):
        self.program = program
        self.global_init: dict[str, int] = {}
        self.arrays: dict[str, tuple[int, ...]] = {}
        self.mutex_names: set[str] = set()
        self.cond_names: set[str] = set()
        self.enclosing = enclosing_loops(program)
        self.loop_lines: set[int] = set()

        from .syntax import program_stmts

        for stmt in program_stmts(program):
            if isinstance(stmt, MutexDecl):
                self.mutex_names.add(stmt.name)
            elif isinstance(stmt, CondDecl):
                self.cond_names.add(stmt.name)
            elif isinstance(stmt, While):
                self.loop_lines.add(stmt.line)

        for g in program.globals:
            if isinstance(g, Decl):
                value = 0
                if g.init is not None:
                    if not isinstance(g.init, IntLit):
                        raise ModelError(
                            "global initializers must be literals")
                    value = wrap64(g.init.value)
                self.global_init[g.name] = value
            elif isinstance(g, ArrayDecl):
                self.arrays[g.name] = tuple(wrap64(v) for v in g.values)

        # thread table: ordinal 0 is main, then creation-statement order
        self.thread_codes: list[Code] = []
        self.thread_codes.append(self._compile_fn(program.main))
        self.fn_by_name = {fn.name: fn for fn in program.functions}
        for td in program.threads:
            self.thread_codes.append(
                self._compile_fn(self.fn_by_name[td.function]))
        self.thread_of_fn = {td.function: td.ordinal
                             for td in program.threads}
        self.callee_codes: dict[str, Code] = {}
        for fn in program.functions:
            if fn.return_type == "int":
                self.callee_codes[fn.name] = self._compile_fn(fn)

    def _compile_fn(self, fn: FunctionDef) -> Code:
        code = Code(fn.name)
        _compile_body(code, fn.body.stmts, [], [])
        code.emit(Instr("thread_end", 0))
        return code


# ---------------------------------------------------------------------------
# Expression evaluation with nondet forking
# ---------------------------------------------------------------------------

_DIV0 = object()


class _Ctx:
    """Evaluation context: variable lookup plus nondet handling."""

    def __init__(self, machine: "_Machine", state: "_State", tid: int,
                 frame: dict[str, int] | None, line: int):
        self.machine = machine
        self.state = state
        self.tid = tid
        self.frame = frame
        self.line = line

    def lookup(self, name: str, globals_view: dict[str, int]) -> int:
        if self.frame is not None and name in self.frame:
            return self.frame[name]
        thread = self.state.threads[self.tid]
        if self.frame is None and name in thread.locals:
            return thread.locals[name]
        if name in globals_view:
            return globals_view[name]
        raise ModelError(f"read of unknown variable {name!r}")


def _eval(expr: Expr, ctx: _Ctx, globals_view: dict[str, int]):
    """Returns a list of (value, choices) forks in deterministic order.
    value is _DIV0 when the fork divides by zero."""
    if isinstance(expr, IntLit):
        return [(wrap64(expr.value), [])]
    if isinstance(expr, Var):
        return [(ctx.lookup(expr.name, globals_view), [])]
    if isinstance(expr, Index):
        array = ctx.machine.compiled.arrays.get(expr.name)
        if array is None:
            raise ModelError(f"unknown array {expr.name!r}")
        forks = []
        for iv, ch in _eval(expr.index, ctx, globals_view):
            if iv is _DIV0:
                forks.append((iv, ch))
                continue
            if not (0 <= iv < len(array)):
                raise ModelError(
                    f"array index {iv} out of range for {expr.name!r}")
            forks.append((array[iv], ch))
        return forks
    if isinstance(expr, Nondet):
        feeder = ctx.machine.feeder
        if feeder is not None:
            line, value = feeder(ctx.line)
            return [(wrap64(value), [(ctx.line, wrap64(value))])]
        lo, hi = (expr.lo, expr.hi) if expr.lo is not None else \
            ctx.machine.config.nondet_domain
        return [(v, [(ctx.line, v)]) for v in range(lo, hi + 1)]
    if isinstance(expr, Unary):
        forks = []
        for v, ch in _eval(expr.operand, ctx, globals_view):
            if v is _DIV0:
                forks.append((v, ch))
            elif expr.op == "-":
                forks.append((wrap64(-v), ch))
            else:
                forks.append((0 if v != 0 else 1, ch))
        return forks
    if isinstance(expr, Binary):
        if expr.op in ("&&", "||"):
            forks = []
            for lv, lch in _eval(expr.left, ctx, globals_view):
                if lv is _DIV0:
                    forks.append((lv, lch))
                    continue
                lbool = 1 if lv != 0 else 0
                if lbool == 0 and expr.op == "&&":
                    forks.append((0, lch))
                    continue
                if lbool == 1 and expr.op == "||":
                    forks.append((1, lch))
                    continue
                for rv, rch in _eval(expr.right, ctx, globals_view):
                    if rv is _DIV0:
                        forks.append((rv, lch + rch))
                    else:
                        forks.append((1 if rv != 0 else 0, lch + rch))
            return forks
        forks = []
        for lv, lch in _eval(expr.left, ctx, globals_view):
            if lv is _DIV0:
                forks.append((lv, lch))
                continue
            for rv, rch in _eval(expr.right, ctx, globals_view):
                if rv is _DIV0:
                    forks.append((rv, lch + rch))
                    continue
                forks.append((_apply(expr.op, lv, rv), lch + rch))
        return forks
    if isinstance(expr, Ternary):
        forks = []
        for cv, cch in _eval(expr.cond, ctx, globals_view):
            if cv is _DIV0:
                forks.append((cv, cch))
                continue
            branch = expr.then_expr if cv != 0 else expr.else_expr
            for bv, bch in _eval(branch, ctx, globals_view):
                forks.append((bv, cch + bch))
        return forks
    raise ModelError(f"cannot evaluate {expr!r}")


def _apply(op: str, a: int, b: int):
    if op == "+":
        return wrap64(a + b)
    if op == "-":
        return wrap64(a - b)
    if op == "*":
        return wrap64(a * b)
    if op == "/":
        return _DIV0 if b == 0 else c_div(a, b)
    if op == "%":
        return _DIV0 if b == 0 else c_mod(a, b)
    if op == "==":
        return 1 if a == b else 0
    if op == "!=":
        return 1 if a != b else 0
    if op == "<":
        return 1 if a < b else 0
    if op == "<=":
        return 1 if a <= b else 0
    if op == ">":
        return 1 if a > b else 0
    if op == ">=":
        return 1 if a >= b else 0
    raise ModelError(f"unknown operator {op!r}")


# ---------------------------------------------------------------------------
# Machine state
# ---------------------------------------------------------------------------


@dataclass
class _Thread:
    pc: int
    locals: dict[str, int]
    status: str  # 'new' | 'ready' | 'cond' | 'reacquire' | 'exited'
    wait_cond: str = ""
    wait_mutex: str = ""

    def clone(self) -> "_Thread":
        return _Thread(self.pc, dict(self.locals), self.status,
                       self.wait_cond, self.wait_mutex)


@dataclass
class _State:
    globals: dict[str, int]
    threads: list[_Thread]
    handles: dict[str, int]
    mutexes: dict[str, int | None]  # owner ordinal
    per_entry: dict[int, int]  # loop line -> started iterations, this entry
    cum_iters: dict[int, int]  # loop line -> completed iterations, total
    switches: int
    last_thread: int | None
    steps: int
    trace: tuple | None  # linked list: (parent, entry)
    choices: tuple | None  # linked list: (parent, (line, value))

    def clone(self) -> "_State":
        return _State(
            dict(self.globals),
            [t.clone() for t in self.threads],
            dict(self.handles),
            dict(self.mutexes),
            dict(self.per_entry),
            dict(self.cum_iters),
            self.switches,
            self.last_thread,
            self.steps,
            self.trace,
            self.choices,
        )


@dataclass
class _TraceEntry:
    index: int
    thread: int
    line: int
    valuation: dict[str, int]
    counters: dict[int, int]
    wait_resume: bool = False


class _Machine:
    def __init__(self, compiled: CompiledProgram, config: VerifierConfig,
                 feeder=None):
        self.compiled = compiled
        self.config = config
        self.feeder = feeder
        self.bound_hit = False

    # -- state construction ---------------------------------------------

    def initial_state(self) -> _State:
        threads = [_Thread(0, {}, "ready")]
        self._zero_locals(threads[0], self.compiled.program.main)
        for td in self.compiled.program.threads:
            t = _Thread(0, {}, "new")
            self._zero_locals(
                t, self.compiled.fn_by_name[td.function])
            threads.append(t)
        state = _State(
            globals=dict(self.compiled.global_init),
            threads=threads,
            handles={},
            mutexes={m: None for m in self.compiled.mutex_names},
            per_entry={},
            cum_iters={},
            switches=0,
            last_thread=None,
            steps=0,
            trace=None,
            choices=None,
        )
        self._normalize(state, 0)
        return state

    def _zero_locals(self, thread: _Thread, fn: FunctionDef) -> None:
        from .syntax import iter_stmts

        for p in fn.params:
            thread.locals[p] = 0
        for s in iter_stmts(fn.body.stmts):
            if isinstance(s, Decl):
                thread.locals[s.name] = 0

    def code_of(self, tid: int) -> Code:
        return self.compiled.thread_codes[tid]

    # -- scheduling -------------------------------------------------------

    def classify(self, state: _State, tid: int) -> str:
        """'eligible' | 'sync' | 'join' for a live thread."""
        thread = state.threads[tid]
        if thread.status == "cond":
            return "sync"
        if thread.status == "reacquire":
            return "eligible" if state.mutexes[thread.wait_mutex] is None \
                else "sync"
        instr = self.code_of(tid).instrs[thread.pc]
        if instr.op == "lock":
            return "eligible" if state.mutexes[instr.name] is None else "sync"
        if instr.op == "join":
            target = state.handles.get(instr.name)
            if target is None or state.threads[target].status != "exited":
                return "join"
            return "eligible"
        return "eligible"

    def live_threads(self, state: _State) -> list[int]:
        return [i for i, t in enumerate(state.threads)
                if t.status not in ("new", "exited")]

    # -- normalization ----------------------------------------------------

    def _normalize(self, state: _State, tid: int) -> None:
        """Advances through micro instructions to the next steppable one."""
        thread = state.threads[tid]
        code = self.code_of(tid)
        while thread.status == "ready":
            instr = code.instrs[thread.pc]
            if instr.op == "jump":
                thread.pc = instr.target
            elif instr.op == "label":
                thread.pc += 1
            elif instr.op == "loop_enter":
                state.per_entry[instr.line] = 0
                thread.pc += 1
            elif instr.op == "loop_iter":
                state.cum_iters[instr.line] = \
                    state.cum_iters.get(instr.line, 0) + 1
                thread.pc += 1
            elif instr.op == "thread_end":
                thread.status = "exited"
            else:
                return

    # -- stepping ---------------------------------------------------------

    def step(self, state: _State, tid: int):
        """Executes one statement of thread tid.

        Returns a list of outcomes in deterministic order:
        ('state', s) | ('violation', Violation, s) | ('kill', reason).
        """
        base = state.clone()
        thread = base.threads[tid]
        if base.last_thread is not None and base.last_thread != tid:
            base.switches += 1

        if thread.status == "reacquire":
            # completion of a condition wait: grab the mutex and move on
            mutex = thread.wait_mutex
            if base.mutexes[mutex] is not None:
                raise ModelError("reacquire scheduled while mutex held")
            base.mutexes[mutex] = tid
            thread.status = "ready"
            thread.wait_cond = ""
            thread.wait_mutex = ""
            line = self.code_of(tid).instrs[thread.pc].line
            thread.pc += 1
            return [self._finish_step(base, tid, line, wait_resume=True)]

        code = self.code_of(tid)
        instr = code.instrs[thread.pc]
        op = instr.op
        line = instr.line

        if op in ("assign", "decl", "for_assign"):
            init = instr.expr if instr.expr is not None else IntLit(0)
            return self._forked(base, tid, line, init,
                                lambda s, v: self._set_var(s, tid, instr.name,
                                                           v))
        if op == "nopstep":
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "assume":
            return self._forked_cond(
                base, tid, line, instr.expr,
                on_true=lambda s: self._advance(s, tid),
                on_false=None)
        if op == "assert":
            return self._forked_cond(
                base, tid, line, instr.expr,
                on_true=lambda s: self._advance(s, tid),
                on_false=Violation("assertion", line))
        if op == "branch":
            loop_line = int(instr.name) if instr.name else None
            outcomes = []
            ctx = _Ctx(self, base, tid, None, line)
            for v, ch in _eval(instr.expr, ctx, base.globals):
                s = base.clone()
                self._record_choices(s, ch)
                if v is _DIV0:
                    outcomes.append(self._violate(
                        s, tid, line, Violation("division-by-zero", line)))
                    continue
                st = s.threads[tid]
                if v != 0:
                    if loop_line is not None:
                        started = s.per_entry.get(loop_line, 0) + 1
                        if started > self.config.loop_bound:
                            self.bound_hit = True
                            outcomes.append(("kill", "bound"))
                            continue
                        s.per_entry[loop_line] = started
                    st.pc += 1
                else:
                    st.pc = instr.target
                outcomes.append(self._finish_step(s, tid, line))
            return outcomes
        if op == "switch":
            outcomes = []
            ctx = _Ctx(self, base, tid, None, line)
            for v, ch in _eval(instr.expr, ctx, base.globals):
                s = base.clone()
                self._record_choices(s, ch)
                if v is _DIV0:
                    outcomes.append(self._violate(
                        s, tid, line, Violation("division-by-zero", line)))
                    continue
                frame = instr.aux
                target = frame["labels"].get(v)
                if target is None:
                    target = frame["default"]
                if target is None:
                    target = frame["end"]
                s.threads[tid].pc = target
                outcomes.append(self._finish_step(s, tid, line))
            return outcomes
        if op == "break":
            thread.pc = code.instrs[instr.target].aux["end"]
            return [self._finish_step(base, tid, line)]
        if op == "return":
            # value is irrelevant at thread level; evaluate for effects only
            outcomes = []
            ctx = _Ctx(self, base, tid, None, line)
            for v, ch in _eval(instr.expr, ctx, base.globals):
                s = base.clone()
                self._record_choices(s, ch)
                if v is _DIV0:
                    outcomes.append(self._violate(
                        s, tid, line, Violation("division-by-zero", line)))
                    continue
                s.threads[tid].status = "exited"
                outcomes.append(self._finish_step(s, tid, line,
                                                  normalize=False))
            return outcomes
        if op == "exit":
            thread.status = "exited"
            return [self._finish_step(base, tid, line, normalize=False)]
        if op == "create":
            fname = instr.args[0]
            ordinal = self.compiled.thread_of_fn[fname]
            target = base.threads[ordinal]
            if target.status != "new":
                raise ModelError(
                    f"thread function {fname!r} created twice")
            target.status = "ready"
            base.handles[instr.name] = ordinal
            self._normalize(base, ordinal)
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "join":
            target = base.handles.get(instr.name)
            if target is None or base.threads[target].status != "exited":
                raise ModelError("join scheduled while target is running")
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "lock":
            if base.mutexes[instr.name] is not None:
                raise ModelError("lock scheduled while mutex held")
            base.mutexes[instr.name] = tid
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "unlock":
            base.mutexes[instr.name] = None
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "wait":
            # releases the mutex and blocks; pc stays on the wait until the
            # reacquisition step completes it
            base.mutexes[instr.args[0]] = None
            thread.status = "cond"
            thread.wait_cond = instr.name
            thread.wait_mutex = instr.args[0]
            return [self._finish_step(base, tid, line, normalize=False)]
        if op == "signal":
            waiters = [i for i, t in enumerate(base.threads)
                       if t.status == "cond" and t.wait_cond == instr.name]
            if waiters:
                woken = base.threads[min(waiters)]
                woken.status = "reacquire"
                woken.wait_cond = ""
            thread.pc += 1
            return [self._finish_step(base, tid, line)]
        if op == "call":
            return self._step_call(base, tid, line, instr)
        raise ModelError(f"unexpected instruction {op!r}")

    # -- step helpers -----------------------------------------------------

    def _advance(self, state: _State, tid: int) -> None:
        state.threads[tid].pc += 1

    def _set_var(self, state: _State, tid: int, name: str, value: int):
        thread = state.threads[tid]
        if name in thread.locals:
            thread.locals[name] = value
        elif name in state.globals:
            state.globals[name] = value
        else:
            raise ModelError(f"write to unknown variable {name!r}")
        thread.pc += 1

    def _forked(self, base: _State, tid: int, line: int, expr: Expr, apply):
        outcomes = []
        ctx = _Ctx(self, base, tid, None, line)
        for v, ch in _eval(expr, ctx, base.globals):
            s = base.clone()
            self._record_choices(s, ch)
            if v is _DIV0:
                outcomes.append(self._violate(
                    s, tid, line, Violation("division-by-zero", line)))
                continue
            apply(s, v)
            outcomes.append(self._finish_step(s, tid, line))
        return outcomes

    def _forked_cond(self, base: _State, tid: int, line: int, expr: Expr,
                     on_true, on_false):
        outcomes = []
        ctx = _Ctx(self, base, tid, None, line)
        for v, ch in _eval(expr, ctx, base.globals):
            s = base.clone()
            self._record_choices(s, ch)
            if v is _DIV0:
                outcomes.append(self._violate(
                    s, tid, line, Violation("division-by-zero", line)))
                continue
            if v != 0:
                on_true(s)
                outcomes.append(self._finish_step(s, tid, line))
            elif on_false is None:
                outcomes.append(("kill", "assume"))
            else:
                outcomes.append(self._violate(s, tid, line, on_false))
        return outcomes

    def _step_call(self, base: _State, tid: int, line: int, instr: Instr):
        fname, arg_exprs = instr.args
        fn = self.compiled.fn_by_name[fname]
        code = self.compiled.callee_codes[fname]
        outcomes = []
        ctx = _Ctx(self, base, tid, None, line)
        arg_forks = [(list(), list())]  # (values, choices)
        for a in arg_exprs:
            new_forks = []
            for values, choices in arg_forks:
                for v, ch in _eval(a, ctx, base.globals):
                    if v is _DIV0:
                        new_forks.append((values + [_DIV0], choices + ch))
                    else:
                        new_forks.append((values + [v], choices + ch))
            arg_forks = new_forks
        for values, choices in arg_forks:
            s = base.clone()
            self._record_choices(s, choices)
            if any(v is _DIV0 for v in values):
                outcomes.append(self._violate(
                    s, tid, line, Violation("division-by-zero", line)))
                continue
            for result in self._run_callee(s, tid, fn, code, values, line):
                if result[0] == "retval":
                    _, ret_state, ret_value = result
                    self._set_var(ret_state, tid, instr.name, ret_value)
                    outcomes.append(self._finish_step(ret_state, tid, line))
                else:
                    outcomes.append(result)
        return outcomes

    def _run_callee(self, entry_state: _State, tid: int, fn: FunctionDef,
                    code: Code, args: list[int], call_line: int):
        """Runs a callee atomically, forking on its nondets. Yields step
        outcomes plus ('retval', state, value) completions."""
        from .syntax import iter_stmts

        frame = {p: v for p, v in zip(fn.params, args)}
        for s in iter_stmts(fn.body.stmts):
            if isinstance(s, Decl):
                frame[s.name] = 0
        results = []
        # worklist of (state, frame, pc)
        work = [(entry_state, frame, 0)]
        while work:
            state, env, pc = work.pop()
            while True:
                instr = code.instrs[pc]
                op = instr.op
                if op == "jump":
                    pc = instr.target
                    continue
                if op == "label":
                    pc += 1
                    continue
                if op == "loop_enter":
                    state.per_entry[instr.line] = 0
                    pc += 1
                    continue
                if op == "loop_iter":
                    state.cum_iters[instr.line] = \
                        state.cum_iters.get(instr.line, 0) + 1
                    pc += 1
                    continue
                if op == "thread_end":
                    raise ModelError(
                        f"function {fn.name!r} finished without return")
                break
            ctx = _Ctx(self, state, tid, env, instr.line)
            if instr.op in ("assign", "decl"):
                expr = instr.expr if instr.expr is not None else IntLit(0)
                forks = _eval(expr, ctx, state.globals)
                pending = []
                for v, ch in forks:
                    s = state.clone()
                    e = dict(env)
                    self._record_choices(s, ch)
                    if v is _DIV0:
                        results.append(self._violate(
                            s, tid, instr.line,
                            Violation("division-by-zero", instr.line)))
                        continue
                    if instr.name in e:
                        e[instr.name] = v
                    elif instr.name in s.globals:
                        s.globals[instr.name] = v
                    else:
                        raise ModelError(
                            f"write to unknown variable {instr.name!r}")
                    pending.append((s, e, pc + 1))
                work.extend(reversed(pending))
                continue
            if instr.op in ("assume", "assert", "branch"):
                pending = []
                for v, ch in _eval(instr.expr, ctx, state.globals):
                    s = state.clone()
                    e = dict(env)
                    self._record_choices(s, ch)
                    if v is _DIV0:
                        results.append(self._violate(
                            s, tid, instr.line,
                            Violation("division-by-zero", instr.line)))
                        continue
                    if instr.op == "assume":
                        if v != 0:
                            pending.append((s, e, pc + 1))
                        else:
                            results.append(("kill", "assume"))
                    elif instr.op == "assert":
                        if v != 0:
                            pending.append((s, e, pc + 1))
                        else:
                            results.append(self._violate(
                                s, tid, instr.line,
                                Violation("assertion", instr.line)))
                    else:
                        loop_line = int(instr.name) if instr.name else None
                        if v != 0:
                            if loop_line is not None:
                                started = s.per_entry.get(loop_line, 0) + 1
                                if started > self.config.loop_bound:
                                    self.bound_hit = True
                                    results.append(("kill", "bound"))
                                    continue
                                s.per_entry[loop_line] = started
                            pending.append((s, e, pc + 1))
                        else:
                            pending.append((s, e, instr.target))
                work.extend(reversed(pending))
                continue
            if instr.op == "call":
                inner_name, inner_args = instr.args
                inner_fn = self.compiled.fn_by_name[inner_name]
                inner_code = self.compiled.callee_codes[inner_name]
                arg_forks = [(list(), list())]
                for a in inner_args:
                    new_forks = []
                    for values, choices in arg_forks:
                        for v, ch in _eval(a, ctx, state.globals):
                            new_forks.append((values + [v], choices + ch))
                    arg_forks = new_forks
                pending = []
                for values, choices in arg_forks:
                    if any(v is _DIV0 for v in values):
                        s = state.clone()
                        self._record_choices(s, choices)
                        results.append(self._violate(
                            s, tid, instr.line,
                            Violation("division-by-zero", instr.line)))
                        continue
                    s = state.clone()
                    self._record_choices(s, choices)
                    for outcome in self._run_callee(
                            s, tid, inner_fn, inner_code, values,
                            instr.line):
                        if outcome[0] == "retval":
                            _, ret_state, ret_value = outcome
                            e = dict(env)
                            if instr.name in e:
                                e[instr.name] = ret_value
                            elif instr.name in ret_state.globals:
                                ret_state.globals[instr.name] = ret_value
                            else:
                                raise ModelError(
                                    f"write to unknown variable "
                                    f"{instr.name!r}")
                            pending.append((ret_state, e, pc + 1))
                        else:
                            results.append(outcome)
                work.extend(reversed(pending))
                continue
            if instr.op == "return":
                for v, ch in _eval(instr.expr, ctx, state.globals):
                    s = state.clone()
                    self._record_choices(s, ch)
                    if v is _DIV0:
                        results.append(self._violate(
                            s, tid, instr.line,
                            Violation("division-by-zero", instr.line)))
                        continue
                    results.append(("retval", s, v))
                continue
            raise ModelError(
                f"unsupported statement inside callable function: "
                f"{instr.op!r}")
        return results

    def _record_choices(self, state: _State, choices) -> None:
        for pair in choices:
            state.choices = (state.choices, pair)

    def _violate(self, state: _State, tid: int, line: int,
                 violation: Violation):
        entry = self._make_entry(state, tid, line)
        state.trace = (state.trace, entry)
        state.steps += 1
        state.last_thread = tid
        return ("violation", violation, state)

    def _finish_step(self, state: _State, tid: int, line: int,
                     normalize: bool = True, wait_resume: bool = False):
        if normalize:
            self._normalize(state, tid)
        entry = self._make_entry(state, tid, line, wait_resume)
        state.trace = (state.trace, entry)
        state.steps += 1
        state.last_thread = tid
        return ("state", state)

    def _make_entry(self, state: _State, tid: int, line: int,
                    wait_resume: bool = False) -> _TraceEntry:
        valuation = dict(state.globals)
        valuation.update(state.threads[tid].locals)
        return _TraceEntry(state.steps, tid, line, valuation,
                           dict(state.cum_iters), wait_resume)


# ---------------------------------------------------------------------------
# Trace materialization
# ---------------------------------------------------------------------------


def _materialize_trace(state: _State) -> list[_TraceEntry]:
    entries = []
    node = state.trace
    while node is not None:
        node, entry = node
        entries.append(entry)
    entries.reverse()
    return entries


def _materialize_choices(state: _State) -> list[tuple[int, int]]:
    choices = []
    node = state.choices
    while node is not None:
        node, pair = node
        choices.append(pair)
    choices.reverse()
    return choices


def _build_counterexample(compiled: CompiledProgram, state: _State,
                          violation: Violation) -> Counterexample:
    entries = _materialize_trace(state)
    steps = [TraceStep(e.index, e.thread, e.line, e.valuation)
             for e in entries]
    switches: list[ContextSwitchRecord] = []
    switch_counters: list[dict[int, int]] = []
    per_thread: dict[int, int] = {}
    for prev, nxt in zip(entries, entries[1:]):
        if prev.thread == nxt.thread:
            continue
        per_thread[prev.thread] = per_thread.get(prev.thread, 0) + 1
        switches.append(ContextSwitchRecord(
            switch_index=len(switches) + 1,
            from_thread=prev.thread,
            to_thread=nxt.thread,
            at_line=prev.line,
            per_thread_index=per_thread[prev.thread],
        ))
        enclosing = list(compiled.enclosing.get(prev.line, []))
        if prev.line in compiled.loop_lines:
            # a switch after a loop-header evaluation may resume inside the
            # loop body, so the loop's own count is needed for the guard
            enclosing.append(prev.line)
        switch_counters.append(
            {ln: prev.counters.get(ln, 0) for ln in enclosing})
    wait_resumes = {e.index for e in entries if e.wait_resume}
    return Counterexample(
        steps=steps,
        switches=switches,
        violation=violation,
        nondet_choices=_materialize_choices(state),
        switch_loop_counters=switch_counters,
        wait_resume_steps=wait_resumes,
    )


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------


def _explore(machine: _Machine, first_leaf: bool = False):
    """DFS over interleavings and nondet values.

    Returns ('violation', Violation, state) | ('exhausted', states)
    | ('safe', states) and, in first_leaf mode, ('leaf', kind, state) for
    the first completed/cut path.
    """
    config = machine.config
    stack: list[tuple] = [("state", machine.initial_state())]
    visited = 0
    while stack:
        kind = stack.pop()
        if kind[0] == "violation":
            return ("violation", kind[1], kind[2])
        if kind[0] == "cut":
            if first_leaf:
                return ("leaf", "cut", kind[1])
            continue
        state = kind[1]
        visited += 1
        if visited > config.max_states:
            return ("exhausted", visited)
        live = machine.live_threads(state)
        if not live:
            if first_leaf:
                return ("leaf", "completed", state)
            continue
        classes = {tid: machine.classify(state, tid) for tid in live}
        eligible = [tid for tid in live if classes[tid] == "eligible"]
        if not eligible:
            if all(classes[tid] == "sync" for tid in live):
                if config.deadlock_check:
                    violation = Violation(
                        "deadlock", None, tuple(sorted(live)))
                    return ("violation", violation, state)
            if first_leaf:
                return ("leaf", "stuck", state)
            continue
        schedulable = []
        for tid in eligible:
            if state.last_thread is None or tid == state.last_thread:
                schedulable.append(tid)
            elif state.switches < config.context_bound:
                schedulable.append(tid)
        if not schedulable:
            if first_leaf:
                return ("leaf", "budget", state)
            continue
        pushes = []
        for tid in schedulable:
            for outcome in machine.step(state, tid):
                if outcome[0] == "kill":
                    if first_leaf and outcome[1] == "bound":
                        pushes.append(("cut", state))
                    continue
                pushes.append(outcome)
        stack.extend(reversed(pushes))
    return ("safe", visited)


def verify(program: Program, config: VerifierConfig) -> VerificationResult:
    """Explores all interleavings within bounds; returns the first violation
    in the fixed exploration order, or safe-within-bounds."""
    compiled = CompiledProgram(program)
    machine = _Machine(compiled, config)
    result = _explore(machine)
    if result[0] == "violation":
        cex = _build_counterexample(compiled, result[2], result[1])
        return VerificationResult("violation", cex,
                                  bound_hit=machine.bound_hit)
    if result[0] == "exhausted":
        return VerificationResult("resource-exhausted", None,
                                  bound_hit=machine.bound_hit,
                                  states=result[1])
    return VerificationResult("safe-within-bounds", None,
                              bound_hit=machine.bound_hit, states=result[1])


def first_path(program: Program, config: VerifierConfig):
    """Follows the first surviving path to a leaf.

    Returns (kind, steps, valuation) where kind is 'violation', 'completed',
    'cut', 'stuck' or 'budget'; steps is the executed line trace.
    """
    compiled = CompiledProgram(program)
    machine = _Machine(compiled, config)
    result = _explore(machine, first_leaf=True)
    if result[0] == "violation":
        cex = _build_counterexample(compiled, result[2], result[1])
        return ("violation", cex.steps, cex.final_valuation)
    if result[0] == "exhausted":
        raise ModelError("state budget exhausted while tracing a path")
    if result[0] == "safe":
        raise ModelError("program has no executable path")
    _, kind, state = result
    entries = _materialize_trace(state)
    steps = [TraceStep(e.index, e.thread, e.line, e.valuation)
             for e in entries]
    valuation = steps[-1].valuation if steps else {}
    return (kind, steps, valuation)


def replay(program: Program, counterexample: Counterexample
           ) -> VerificationResult:
    """Re-executes the exact schedule and nondet choices of a counterexample.
    Raises TraceMismatch if it does not fit the program."""
    compiled = CompiledProgram(program)
    queue = list(counterexample.nondet_choices)
    pos = [0]

    def feeder(line: int):
        if pos[0] >= len(queue):
            raise TraceMismatch("nondet choice list exhausted")
        exp_line, value = queue[pos[0]]
        if exp_line != line:
            raise TraceMismatch(
                f"nondet at line {line}, choice recorded for {exp_line}")
        pos[0] += 1
        return exp_line, value

    machine = _Machine(compiled, VerifierConfig(
        context_bound=max(1, len(counterexample.switches)),
        loop_bound=10 ** 9,
        nondet_domain=(0, 0),
        max_states=10 ** 9,
    ), feeder=feeder)
    state = machine.initial_state()
    violation_seen: Violation | None = None
    for i, step in enumerate(counterexample.steps):
        if violation_seen is not None:
            raise TraceMismatch("violation before the end of the trace")
        tid = step.thread
        if tid >= len(state.threads):
            raise TraceMismatch(f"step references unknown thread {tid}")
        if state.threads[tid].status in ("new", "exited"):
            raise TraceMismatch(f"step {i} schedules a dead thread {tid}")
        if machine.classify(state, tid) != "eligible":
            raise TraceMismatch(f"step {i}: thread {tid} is blocked")
        outcomes = machine.step(state, tid)
        if len(outcomes) != 1:
            raise TraceMismatch("replay produced a nondeterministic fork")
        outcome = outcomes[0]
        if outcome[0] == "kill":
            raise TraceMismatch(f"step {i} became infeasible on replay")
        if outcome[0] == "violation":
            violation_seen = outcome[1]
            state = outcome[2]
        else:
            state = outcome[1]
        last = _materialize_trace(state)[-1]
        if last.line != step.line:
            raise TraceMismatch(
                f"step {i} executed line {last.line}, trace says "
                f"{step.line}")
    expected = counterexample.violation
    if expected.kind == "deadlock":
        live = machine.live_threads(state)
        if not live or any(
                machine.classify(state, tid) != "sync" for tid in live):
            raise TraceMismatch("deadlock does not reproduce")
        violation = Violation("deadlock", None, tuple(sorted(live)))
    else:
        if violation_seen is None:
            raise TraceMismatch("trace ends without the recorded violation")
        violation = violation_seen
    if violation != expected:
        raise TraceMismatch(
            f"violation mismatch: {violation} != {expected}")
    cex = _build_counterexample(compiled, state, violation)
    return VerificationResult("violation", cex)


# ---------------------------------------------------------------------------
# Schedule extraction
# ---------------------------------------------------------------------------


class UnsupportedScheduleError(Exception):
    """A thread is interrupted too often to be tagged (occurrence >= 10)."""


def extract_schedule(counterexample: Counterexample):
    """Distills the ordered context-switch structure from a counterexample.

    Tag numbering: segment j of thread n (both counted from their first
    occurrence) receives (n + 1) * 10 + j with j starting at 1.
    """
    from .sequentializer import Schedule, Segment

    steps = counterexample.steps
    if not steps:
        raise UnsupportedScheduleError("empty trace")
    segments: list[Segment] = []
    occurrence: dict[int, int] = {}
    start = 0
    boundary = 0  # index into switches
    for i in range(1, len(steps) + 1):
        if i < len(steps) and steps[i].thread == steps[start].thread:
            continue
        thread = steps[start].thread
        occurrence[thread] = occurrence.get(thread, 0) + 1
        if occurrence[thread] >= 10:
            raise UnsupportedScheduleError(
                f"thread {thread} has {occurrence[thread]} execution "
                "segments; at most 9 are supported")
        tag = (thread + 1) * 10 + occurrence[thread]
        is_last = i == len(steps)
        counters: dict[int, int] = {}
        if not is_last and boundary < len(
                counterexample.switch_loop_counters):
            counters = dict(counterexample.switch_loop_counters[boundary])
        segments.append(Segment(
            thread=thread,
            from_line=steps[start].line,
            to_line=steps[i - 1].line,
            loop_counters=counters,
            tag=tag,
            resumes_wait=steps[start].step_index
            in counterexample.wait_resume_steps,
        ))
        if not is_last:
            boundary += 1
        start = i
    per_thread_counts: dict[int, int] = {}
    for sw in counterexample.switches:
        per_thread_counts[sw.from_thread] = \
            per_thread_counts.get(sw.from_thread, 0) + 1
    return Schedule(
        segments=segments,
        order_tags=[seg.tag for seg in segments],
        per_thread_counts=per_thread_counts,
        nondet_pins=list(counterexample.nondet_choices),
    )


# ---------------------------------------------------------------------------
# Counterexample JSON serialization
# ---------------------------------------------------------------------------


def counterexample_to_json(cex: Counterexample) -> str:
    doc = {
        "steps": [
            {
                "step_index": s.step_index,
                "thread": s.thread,
                "line": s.line,
                "valuation": dict(sorted(s.valuation.items())),
            }
            for s in cex.steps
        ],
        "switches": [
            {
                "switch_index": s.switch_index,
                "from_thread": s.from_thread,
                "to_thread": s.to_thread,
                "at_line": s.at_line,
                "per_thread_index": s.per_thread_index,
            }
            for s in cex.switches
        ],
        "violation": _violation_to_obj(cex.violation),
        "nondet_choices": [[line, value]
                           for line, value in cex.nondet_choices],
        "switch_loop_counters": [
            {str(k): v for k, v in sorted(c.items())}
            for c in cex.switch_loop_counters
        ],
        "wait_resume_steps": sorted(cex.wait_resume_steps),
    }
    return json.dumps(doc, indent=2) + "\n"


def _violation_to_obj(v: Violation) -> dict:
    if v.kind == "deadlock":
        return {"kind": "deadlock", "blocked": list(v.blocked or ())}
    return {"kind": v.kind, "line": v.line}


def counterexample_from_json(text: str) -> Counterexample:
    doc = json.loads(text)
    violation_obj = doc["violation"]
    if violation_obj["kind"] == "deadlock":
        violation = Violation("deadlock", None,
                              tuple(violation_obj["blocked"]))
    else:
        violation = Violation(violation_obj["kind"], violation_obj["line"])
    return Counterexample(
        steps=[TraceStep(s["step_index"], s["thread"], s["line"],
                         dict(s["valuation"]))
               for s in doc["steps"]],
        switches=[ContextSwitchRecord(s["switch_index"], s["from_thread"],
                                      s["to_thread"], s["at_line"],
                                      s["per_thread_index"])
                  for s in doc["switches"]],
        violation=violation,
        nondet_choices=[(line, value)
                        for line, value in doc["nondet_choices"]],
        switch_loop_counters=[
            {int(k): v for k, v in c.items()}
            for c in doc.get("switch_loop_counters", [])
        ],
        wait_resume_steps=set(doc.get("wait_resume_steps", [])),
    )
