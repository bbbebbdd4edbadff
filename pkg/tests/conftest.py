import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


class CriterionLog:
    def record(self, criterion, check, ok, detail=""):
        _CRITERIA.setdefault(criterion, []).append((check, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def criterion_log():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_CRITERIA):
        checks = _CRITERIA[crit]
        status = "PASS" if all(ok for _, ok, _ in checks) else "FAIL"
        tr.write_line(f"criterion {crit}: {status}")
        for name, ok, detail in checks:
            tr.write_line(f"    [{'pass' if ok else 'FAIL'}] {name}: {detail}")
