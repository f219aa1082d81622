from __future__ import annotations

from collections import defaultdict

import pytest

# criterion id -> list of (label, ok, detail)
_RESULTS: dict[str, list] = defaultdict(list)


class Recorder:
    def __init__(self, criterion):
        self.criterion = criterion
        self.failures = []

    def check(self, label, ok, detail=""):
        ok = bool(ok)
        _RESULTS[self.criterion].append((label, ok, detail))
        if not ok:
            self.failures.append(f"{label}: {detail}")
        return ok

    def verdict(self):
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    return Recorder(marker.args[0] if marker else request.node.name)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion this test checks")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")

    def key(c):
        head = "".join(ch for ch in c if ch.isdigit())
        return (int(head) if head else 99, c)

    for crit in sorted(_RESULTS, key=key):
        parts = _RESULTS[crit]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        summary = "; ".join(f"{label} {'ok' if ok else 'FAILED'} ({detail})" for label, ok, detail in parts)
        tr.write_line(f"criterion {crit}: {status} - {summary}")
