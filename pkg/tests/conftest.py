import pytest


@pytest.fixture
def report(capsys):
    """Print a PASS/FAIL line to the terminal even when output is captured, then assert."""
    def _report(name: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return _report
