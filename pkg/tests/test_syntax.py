"""Parser, printer and line-id behavior."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcfl.parser import ParseError, parse
from mcfl.syntax import line_table, pretty_print

from randprog import generate_source


class TestParse:
    def test_minimal_program(self):
        p = parse("int main(){ return 0; }")
        assert p.main is not None
        assert p.functions == []
        assert p.threads == []
        assert len(p.main.body.stmts) == 1

    def test_single_fault_port_shape(self, single_fault_program):
        p = single_fault_program
        assert p.functions == []
        assert p.threads == []
        assert len(line_table(p)) == 11

    def test_undeclared_identifier_named(self):
        with pytest.raises(ParseError) as err:
            parse("int main(){ x = 1; }")
        assert "'x'" in str(err.value)

    def test_local_shadowing_global_rejected(self):
        with pytest.raises(ParseError) as err:
            parse("int g = 0;\nint main(){ int g; return 0; }")
        assert "shadows" in str(err.value)

    def test_thread_create_unknown_function(self):
        with pytest.raises(ParseError) as err:
            parse("pthread_t t;\nint main(){ pthread_create(t, nope); }")
        assert "nope" in str(err.value)

    def test_recursion_rejected(self):
        src = """
        int f(int n) {
          int r;
          r = f(n);
          return r;
        }
        int main(){ int x; x = f(1); return 0; }
        """
        with pytest.raises(ParseError) as err:
            parse(src)
        assert "recursive" in str(err.value)

    def test_break_outside_switch_rejected(self):
        with pytest.raises(ParseError):
            parse("int main(){ break; }")

    def test_case_outside_switch_rejected(self):
        with pytest.raises(ParseError):
            parse("int main(){ case 1: return 0; }")

    def test_return_must_be_last(self):
        src = "int main(){ int x; return 0; x = 1; }"
        with pytest.raises(ParseError) as err:
            parse(src)
        assert "final" in str(err.value)

    def test_void_function_cannot_return(self):
        src = """
        pthread_t t;
        void w() { return 0; }
        int main(){ pthread_create(t, w); }
        """
        with pytest.raises(ParseError):
            parse(src)

    def test_duplicate_thread_create_rejected(self):
        src = """
        pthread_t t1;
        pthread_t t2;
        void w() { pthread_exit(); }
        int main(){
          pthread_create(t1, w);
          pthread_create(t2, w);
        }
        """
        with pytest.raises(ParseError) as err:
            parse(src)
        assert "more than once" in str(err.value)

    def test_threading_inside_callable_rejected(self):
        src = """
        pthread_mutex_t m;
        int f(int x) {
          pthread_mutex_lock(m);
          return x;
        }
        int main(){ int y; y = f(1); return 0; }
        """
        with pytest.raises(ParseError):
            parse(src)

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError) as err:
            parse("int main(){\n  x === 1;\n}")
        assert err.value.line == 2

    def test_thread_ordinals_follow_create_order(self):
        src = """
        pthread_t a;
        pthread_t b;
        void second() { pthread_exit(); }
        void first() { pthread_exit(); }
        int main(){
          pthread_create(a, first);
          pthread_create(b, second);
        }
        """
        p = parse(src)
        assert [(t.ordinal, t.function) for t in p.threads] == [
            (1, "first"), (2, "second")]


class TestRoundTrip:
    def test_minimal(self):
        p = parse("int main(){ return 0; }")
        assert parse(pretty_print(p)) == p

    def test_single_fault_port(self, single_fault_program):
        text = pretty_print(single_fault_program)
        assert parse(text) == single_fault_program

    def test_framework_skeleton(self, single_fault_program,
                                default_config):
        from mcfl.sequentializer import sequentialize
        from mcfl.verifier import extract_schedule, verify

        result = verify(single_fault_program, default_config)
        schedule = extract_schedule(result.counterexample)
        seq = sequentialize(single_fault_program, schedule, False)
        text = pretty_print(seq.program)
        assert parse(text) == seq.program

    def test_operator_nesting(self):
        src = ("int main(){ int a; int b; "
               "a = -(1 + 2) * 3 % 4 - (5 - 1); "
               "b = (a < 3 ? a * 2 : a / 2) + !a; "
               "assert(a == 1 && b >= 0 || a != -8); return 0; }")
        p = parse(src)
        assert parse(pretty_print(p)) == p

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_generated_programs_round_trip(self, seed):
        p = parse(generate_source(seed))
        assert parse(pretty_print(p)) == p


class TestLineIds:
    def test_density(self, single_fault_program):
        table = line_table(single_fault_program)
        assert sorted(table) == list(range(1, len(table) + 1))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10 ** 6))
    def test_generated_density(self, seed):
        p = parse(generate_source(seed))
        table = line_table(p)
        assert sorted(table) == list(range(1, len(table) + 1))

    def test_line_table_is_total(self):
        p = parse("int main(){ return 0; }")
        table = line_table(p)
        assert len(table) == 1
        from mcfl.syntax import Return

        assert isinstance(table[1], Return)

    def test_round_trip_preserves_ids(self, single_fault_program):
        reparsed = parse(pretty_print(single_fault_program))
        orig = line_table(single_fault_program)
        new = line_table(reparsed)
        assert {k: type(v) for k, v in orig.items()} == \
               {k: type(v) for k, v in new.items()}
