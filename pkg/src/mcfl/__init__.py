"""mcfl: fault localization for concurrent mini-C programs.

Pipeline: bounded verification finds a failing interleaving, the
sequentializer turns it into an equivalent single-threaded replay, the
instrumenter adds the diagnosis variable, and the localizer enumerates and
validates repairable lines.
"""

from .instrumenter import (
    InstrumentedProgram,
    NothingToInstrument,
    block_diag,
    eligible_lines,
    instrument,
)
from .localizer import (
    Diagnosis,
    DiagnosisReport,
    brute_force_diagnoses,
    localize,
    validate_diag,
)
from .parser import ParseError, parse
from .sequentializer import (
    GuardPlacementError,
    MapEntry,
    RuleGapError,
    Schedule,
    Segment,
    SequentialProgram,
    apply_pthread_rules,
    inject_order_control,
    build_skeleton,
    sequentialize,
    unwind_calls,
)
from .syntax import LineId, Program, line_table, pretty_print
from .verifier import (
    ContextSwitchRecord,
    Counterexample,
    ModelError,
    TraceMismatch,
    TraceStep,
    UnsupportedScheduleError,
    VerificationResult,
    VerifierConfig,
    Violation,
    extract_schedule,
    first_path,
    replay,
    verify,
)

__version__ = "0.1.0"

__all__ = [
    "ContextSwitchRecord",
    "Counterexample",
    "Diagnosis",
    "DiagnosisReport",
    "GuardPlacementError",
    "InstrumentedProgram",
    "LineId",
    "MapEntry",
    "ModelError",
    "NothingToInstrument",
    "ParseError",
    "Program",
    "RuleGapError",
    "Schedule",
    "Segment",
    "SequentialProgram",
    "TraceMismatch",
    "TraceStep",
    "UnsupportedScheduleError",
    "VerificationResult",
    "VerifierConfig",
    "Violation",
    "apply_pthread_rules",
    "block_diag",
    "brute_force_diagnoses",
    "build_skeleton",
    "eligible_lines",
    "extract_schedule",
    "first_path",
    "inject_order_control",
    "instrument",
    "line_table",
    "localize",
    "parse",
    "pretty_print",
    "replay",
    "sequentialize",
    "unwind_calls",
    "validate_diag",
    "verify",
]
