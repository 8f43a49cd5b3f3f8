import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qmalab import curvature, jets  # noqa: E402

EH_POINT = np.array([1.0, 0.0], dtype=complex)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def eh_chart():
    return jets.eguchi_hanson_chart(1.0)


@pytest.fixture(scope="session")
def eh_ctx(eh_chart):
    return curvature.point_context(eh_chart, EH_POINT)


@pytest.fixture(scope="session")
def flat_ctx():
    return curvature.point_context(jets.flat_chart(1), np.array([0.3, -0.2j]))


# criterion number -> list of (check name, passed, detail); filled by test_acceptance
ACCEPTANCE: dict[int, list[tuple[str, bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        ok = all(c[1] for c in checks)
        failed = [c[0] for c in checks if not c[1]]
        tail = f" (failing: {', '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}{tail}")
        for name, passed, detail in checks:
            tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {name}: {detail}")
