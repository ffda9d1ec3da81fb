import pytest

# criterion number -> (title, passed); filled by the acceptance suite
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{num:2d}] {'PASS' if ok else 'FAIL'}  {title}  {detail}")


@pytest.fixture
def criterion():
    """Context manager recording a criterion's verdict and printing one line for it."""
    import contextlib
    import sys

    @contextlib.contextmanager
    def run(num, title):
        note = {"detail": ""}
        ok = False
        try:
            yield note
            ok = True
        finally:
            ACCEPTANCE[num] = (title, ok, note["detail"])
            sys.__stdout__.write(f"\n[{num:2d}] {'PASS' if ok else 'FAIL'}  {title}  {note['detail']}\n")
            sys.__stdout__.flush()

    return run
