from __future__ import annotations

import mpmath
import numpy as np
import pytest

from rosvd import sim


def constant_bits(name: str, n: int) -> str:
    """Leading ``n`` bits of the binary expansion of pi or e, integer part included."""
    with mpmath.workdps(n // 3 + 30):
        x = {"pi": mpmath.pi, "e": mpmath.e}[name]
        ip = int(mpmath.floor(x))
        frac = x - ip
        head = bin(ip)[2:]
        tail = int(mpmath.floor(frac * mpmath.mpf(2) ** (n - len(head))))
    return head + format(tail, f"0{n - len(head)}b")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def default_device():
    return sim.new_device(sim.SimConfig(), 7)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(label: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
