import functools

import pytest

from slofetch.trace import SyntheticWorkloadSpec, generate_synthetic

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def clustered_trace(seed: int, **changes):
    return generate_synthetic(SyntheticWorkloadSpec(seed=seed, **changes))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")


@pytest.fixture
def small_spec():
    return SyntheticWorkloadSpec(seed=3, record_count=20_000)
