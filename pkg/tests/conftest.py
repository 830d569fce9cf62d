import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mcfl.parser import parse
from mcfl.verifier import VerifierConfig

BENCH_DIR = Path(__file__).parent.parent / "src" / "mcfl" / "benchmarks"


@pytest.fixture(scope="session")
def default_config() -> VerifierConfig:
    return VerifierConfig(context_bound=4, loop_bound=3,
                          nondet_domain=(0, 8))


@pytest.fixture(scope="session")
def single_fault_source() -> str:
    return (BENCH_DIR / "single_fault.mc").read_text()


@pytest.fixture(scope="session")
def single_fault_program(single_fault_source):
    return parse(single_fault_source)


def bench_source(name: str) -> str:
    return (BENCH_DIR / f"{name}.mc").read_text()
