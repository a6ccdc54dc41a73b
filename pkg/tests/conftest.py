from __future__ import annotations

from collections import defaultdict

import numpy as np
import pytest

# criterion number -> list of (check name, passed, detail)
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = defaultdict(list)


def record(criterion: int, check: str, passed: bool, detail: str = "") -> bool:
    """Store one acceptance sub-check and echo it; returns ``passed`` for use in asserts."""
    passed = bool(passed)
    ACCEPTANCE[criterion].append((check, passed, detail))
    print(f"criterion {criterion:2d} {check}: {'PASS' if passed else 'FAIL'} {detail}")
    return passed


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in checks)
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}")
        for name, p, detail in checks:
            tr.write_line(f"    {'ok  ' if p else 'FAIL'} {name}: {detail}")
