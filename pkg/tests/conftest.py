from collections import OrderedDict

import pytest

_CRITERIA = OrderedDict()


class CriterionLog:
    """Collects sub-check outcomes per acceptance criterion."""

    def record(self, criterion: int, title: str, check: str, ok: bool, detail: str = "") -> bool:
        entry = _CRITERIA.setdefault(criterion, {"title": title, "checks": []})
        entry["checks"].append((check, bool(ok), detail))
        return bool(ok)


@pytest.fixture(scope="session")
def criteria():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        ok = all(c[1] for c in entry["checks"])
        failed = [f"{name}: {detail}" for name, good, detail in entry["checks"] if not good]
        tail = "" if ok else "  [" + "; ".join(failed) + "]"
        tr.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {num}: {entry['title']}{tail}")
