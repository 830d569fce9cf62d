"""Pipeline driver, validation oracle and blocking-loop discipline."""

import pytest

from mcfl.localizer import (
    brute_force_diagnoses,
    localize,
    report_from_json,
    report_to_json,
    validate_diag,
)
from mcfl.parser import parse
from mcfl.sequentializer import sequentialize
from mcfl.verifier import VerifierConfig, extract_schedule, verify

from conftest import bench_source
from randprog import generate_source


@pytest.fixture(scope="module")
def report(single_fault_program, default_config):
    return localize(single_fault_program, default_config)


@pytest.fixture(scope="module")
def seq(single_fault_program, default_config):
    result = verify(single_fault_program, default_config)
    return sequentialize(single_fault_program,
                         extract_schedule(result.counterexample), False)


class TestLocalizeSingleFault:
    def test_two_diagnoses_at_branch_and_operand_lines(self, report):
        assert report.status == "faults-found"
        assert report.found_error_count == 2
        assert [d.original_line for d in report.diagnoses] == [4, 7]

    def test_both_validated_within_two_iterations(self, report):
        assert all(d.oracle_validated for d in report.diagnoses)
        assert max(d.iteration for d in report.diagnoses) <= 2

    def test_witnesses(self, report):
        by_line = {d.original_line: d.witness_value
                   for d in report.diagnoses}
        assert by_line[4] == 0  # falsify the branch, skip the assertion
        assert by_line[7] == 4  # 5 + 4 makes the checked sum

    def test_matches_brute_force_oracle(self, report, default_config):
        oracle = brute_force_diagnoses(report.sequential, default_config)
        assert [line for line, _ in oracle] == \
            [d.seq_line for d in report.diagnoses]

    def test_timings_cover_all_stages(self, report):
        assert {"verify", "sequentialize", "instrument", "diagnose",
                "validate"} <= set(report.timings)


class TestLocalizeOutcomes:
    def test_safe_program_has_no_counterexample(self, default_config):
        p = parse("int main(){ assert(1 == 1); return 0; }")
        report = localize(p, default_config)
        assert report.status == "no-counterexample"
        assert report.diagnoses == []
        assert report.found_error_count == 0

    def test_sync_fault_is_inconclusive_with_zero_diag(self,
                                                       default_config):
        report = localize(parse(bench_source("sync01")), default_config)
        assert report.status == "inconclusive"
        assert report.deadlock is True
        assert report.found_error_count == 1
        diag = report.diagnoses[0]
        assert diag.seq_line == 0
        assert diag.original_line is None
        assert diag.oracle_validated is False

    def test_ordering_fault_is_inconclusive(self, default_config):
        report = localize(parse(bench_source("token_ring")), default_config)
        assert report.status == "inconclusive"
        assert report.deadlock is False
        assert report.diagnoses[0].seq_line == 0

    def test_resource_exhaustion_propagates(self, single_fault_program):
        cfg = VerifierConfig(max_states=3)
        report = localize(single_fault_program, cfg)
        assert report.status == "resource-exhausted"


class TestValidateDiag:
    def _seq_line(self, seq, original):
        return next(line for line, e in seq.line_map.items()
                    if e.kind == "original" and e.value == original)

    def test_falsifying_the_branch_validates(self, seq, default_config):
        # skipping the faulty block leaves the assertion unreached
        line = self._seq_line(seq, 4)
        assert validate_diag(seq, line, 0, default_config) is True

    def test_operand_witness_validates(self, seq, default_config):
        # 5 + 4 gives the asserted sum of 9
        line = self._seq_line(seq, 7)
        assert validate_diag(seq, line, 4, default_config) is True
        assert validate_diag(seq, line, 3, default_config) is False

    def test_still_violating_witness_rejected(self, seq, default_config):
        line = self._seq_line(seq, 6)  # the a = 5 statement
        assert validate_diag(seq, line, 5, default_config) is False


class TestLoopDiscipline:
    def test_termination_and_distinct_diags(self, default_config):
        names = ["single_fault", "account", "arithmetic_prog",
                 "circular_buffer", "lazy01", "queue", "sync01", "sync02",
                 "token_ring"]
        for name in names:
            report = localize(parse(bench_source(name)), default_config)
            if report.instrumented is None:
                continue
            domain = report.instrumented.diag_domain
            assert len(report.diagnoses) <= len(domain) + 1
            for d in report.diagnoses:
                assert d.iteration <= len(domain) + 1
            seq_lines = [d.seq_line for d in report.diagnoses]
            assert len(seq_lines) == len(set(seq_lines)), name

    def test_corpus_runs_stay_disciplined(self):
        cfg = VerifierConfig(context_bound=2, loop_bound=3,
                             nondet_domain=(0, 4), deadlock_check=True)
        done = 0
        for seed in range(25):
            p = parse(generate_source(seed, max_threads=2, max_stmts=5))
            report = localize(p, cfg)
            if report.status == "no-counterexample":
                continue
            seq_lines = [d.seq_line for d in report.diagnoses]
            assert len(seq_lines) == len(set(seq_lines))
            if report.instrumented is not None:
                assert len(report.diagnoses) <= \
                    len(report.instrumented.diag_domain) + 1
            done += 1
        assert done >= 5

    def test_found_error_count_matches(self, default_config):
        report = localize(parse(bench_source("account")), default_config)
        assert report.found_error_count == len(report.diagnoses)
        assert report.status == "faults-found"
        assert report.diagnoses


class TestReportJson:
    def test_round_trip_bytes(self, single_fault_program, default_config):
        report = localize(single_fault_program, default_config)
        text = report_to_json(report)
        loaded = report_from_json(text)
        assert report_to_json(loaded) == text
        assert loaded.status == report.status
        assert loaded.diagnoses == report.diagnoses
