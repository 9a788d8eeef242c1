import pytest

# One pass/fail line per acceptance criterion, printed after the run.
_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.failed:
        _ACCEPTANCE_RESULTS[name] = "ERROR"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"[{outcome}] {name}")


@pytest.fixture
def tmp_json(tmp_path):
    """Write a JSON-serializable object to a temp file, returning its path."""
    import json

    def write(obj, name="data.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj, indent=2) + "\n")
        return path

    return write
