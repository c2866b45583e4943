import contextlib
import time

import pytest

_ACCEPTANCE_LINES: list[str] = []


class _Criterion:
    def __init__(self, number, title, budget_s):
        self.number, self.title, self.budget_s = number, title, budget_s
        self.notes: list[str] = []

    def note(self, text):
        self.notes.append(text)


@pytest.fixture
def criterion():
    """Context manager that times one acceptance criterion and records PASS or FAIL."""

    @contextlib.contextmanager
    def run(number, title, budget_s=None):
        c = _Criterion(number, title, budget_s)
        start = time.perf_counter()
        status, why = "PASS", ""
        try:
            yield c
            elapsed = time.perf_counter() - start
            if budget_s is not None and elapsed >= budget_s:
                status, why = "FAIL", f"took {elapsed:.1f} s, budget {budget_s} s"
                raise AssertionError(why)
        except BaseException as exc:
            status = "FAIL"
            why = why or (str(exc).splitlines()[0] if str(exc) else type(exc).__name__)
            raise
        finally:
            elapsed = time.perf_counter() - start
            detail = "; ".join(c.notes + ([why] if why else []))
            line = f"{status} criterion {number}: {title} ({elapsed:.2f} s)"
            if detail:
                line += f" [{detail}]"
            _ACCEPTANCE_LINES.append(line)
            print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
