import time

import pytest

from scvx.quadrotor import QuadrotorConfig, solve_benchmark

ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def benchmark_run():
    """The default quad-rotor benchmark solved once per session, with its wall time."""
    t0 = time.perf_counter()
    br = solve_benchmark(QuadrotorConfig())
    return br, time.perf_counter() - t0


@pytest.fixture(scope="session")
def benchmark(benchmark_run):
    return benchmark_run[0]


@pytest.fixture
def verdict(request):
    """Print one PASS/FAIL line for an acceptance criterion and fail the test on FAIL."""

    def record(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        print(line)
        request.config.stash.setdefault(ACCEPTANCE_LINES, []).append(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
