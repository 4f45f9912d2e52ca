from contextlib import contextmanager

import pytest

# (id, title, passed, detail) per acceptance criterion, filled by test_acceptance
ACCEPTANCE = []


class _Record:
    detail = ""


@contextmanager
def _criterion(cid, title):
    rec = _Record()
    try:
        yield rec
    except BaseException:
        ACCEPTANCE.append((cid, title, False, rec.detail))
        raise
    ACCEPTANCE.append((cid, title, True, rec.detail))


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        line = f"[{'PASS' if ok else 'FAIL'}] {cid}. {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
