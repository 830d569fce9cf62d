"""Command dispatch, exit statuses, emitted artifacts."""

import json

import pytest

from mcfl.cli import main
from mcfl.verifier import counterexample_from_json, counterexample_to_json

from conftest import BENCH_DIR, bench_source

SAFE = "int main(){ assert(1 == 1); return 0; }\n"


@pytest.fixture()
def fault_file(tmp_path):
    path = tmp_path / "fault.mc"
    path.write_text(bench_source("single_fault"))
    return path


class TestExitStatuses:
    def test_verify_safe_is_zero(self, tmp_path, capsys):
        path = tmp_path / "safe.mc"
        path.write_text(SAFE)
        assert main(["verify", str(path)]) == 0
        assert "safe-within-bounds" in capsys.readouterr().out

    def test_localize_faults_is_one(self, fault_file, capsys):
        code = main(["localize", str(fault_file), "--unwind", "3",
                     "--nondet", "0..8"])
        out = capsys.readouterr().out
        assert code == 1
        assert "line 4" in out and "line 7" in out

    def test_localize_inconclusive_is_two(self, tmp_path, capsys):
        path = tmp_path / "sync01.mc"
        path.write_text(bench_source("sync01"))
        assert main(["localize", str(path)]) == 2

    def test_resource_exhausted_is_three(self, fault_file, capsys):
        assert main(["verify", str(fault_file), "--max-states", "2"]) == 3

    def test_parse_error_is_four(self, tmp_path, capsys):
        path = tmp_path / "broken.mc"
        path.write_text("int main(){ x = ; }")
        assert main(["verify", str(path)]) == 4
        assert "mcfl:" in capsys.readouterr().err

    def test_missing_file_is_four(self, tmp_path):
        assert main(["verify", str(tmp_path / "nope.mc")]) == 4

    def test_usage_error_is_four(self, capsys):
        assert main(["frobnicate", "x"]) == 4

    def test_verify_violation_is_one(self, fault_file, capsys):
        assert main(["verify", str(fault_file)]) == 1
        assert "violation: assertion" in capsys.readouterr().out


class TestArtifacts:
    def test_emit_intermediates(self, fault_file, capsys):
        code = main(["localize", str(fault_file), "--emit-intermediates"])
        assert code == 1
        base = fault_file.with_suffix("")
        for suffix in (".counterexample.json", ".seq.mc",
                       ".instrumented.mc", ".linemap.json"):
            assert base.with_suffix(suffix).exists(), suffix

    def test_counterexample_json_round_trips(self, fault_file, capsys):
        main(["verify", str(fault_file), "--emit-intermediates"])
        text = fault_file.with_suffix(".counterexample.json").read_text()
        assert counterexample_to_json(counterexample_from_json(text)) == text

    def test_localize_json_output(self, fault_file, capsys):
        code = main(["localize", str(fault_file), "--json"])
        assert code == 1
        doc = json.loads(capsys.readouterr().out)
        assert doc["status"] == "faults-found"
        assert doc["found_error_count"] == 2

    def test_sequentialize_emits_program(self, fault_file, capsys):
        code = main(["sequentialize", str(fault_file)])
        assert code == 1
        out = capsys.readouterr().out
        assert "switch (order[order_index])" in out

    def test_instrument_emits_model(self, fault_file, capsys):
        code = main(["instrument", str(fault_file)])
        assert code == 1
        out = capsys.readouterr().out
        assert "diag = nondet(" in out
        assert "assert(0);" in out

    def test_sequentialize_safe_program(self, tmp_path, capsys):
        path = tmp_path / "safe.mc"
        path.write_text(SAFE)
        assert main(["sequentialize", str(path)]) == 0


class TestBench:
    def test_empty_directory(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["bench", str(empty)]) == 0
        assert "no .mc files" in capsys.readouterr().out

    def test_sweep_determinism_modulo_timings(self, tmp_path, capsys,
                                              monkeypatch):
        monkeypatch.chdir(tmp_path)
        csv_a = tmp_path / "a.csv"
        csv_b = tmp_path / "b.csv"
        assert main(["bench", str(BENCH_DIR), "--csv", str(csv_a)]) == 0
        assert main(["bench", str(BENCH_DIR), "--csv", str(csv_b)]) == 0

        def strip_vt(text):
            rows = [line.split(",") for line in text.splitlines()]
            keep = [i for i, h in enumerate(rows[0])
                    if not h.startswith("vt_")]
            return [[r[i] for i in keep] for r in rows]

        assert strip_vt(csv_a.read_text()) == strip_vt(csv_b.read_text())

    def test_per_file_errors_do_not_abort(self, tmp_path, capsys,
                                          monkeypatch):
        monkeypatch.chdir(tmp_path)
        d = tmp_path / "mix"
        d.mkdir()
        (d / "good.mc").write_text(SAFE)
        (d / "bad.mc").write_text("int main(){")
        assert main(["bench", str(d)]) == 0
        out = capsys.readouterr().out
        assert "error" in out and "good" in out


class TestEnvironment:
    def test_max_states_env_override(self, fault_file, monkeypatch, capsys):
        monkeypatch.setenv("MCFL_MAX_STATES", "2")
        assert main(["verify", str(fault_file)]) == 3

    def test_flag_beats_env(self, fault_file, monkeypatch, capsys):
        monkeypatch.setenv("MCFL_MAX_STATES", "2")
        assert main(["verify", str(fault_file),
                     "--max-states", "100000"]) == 1
