import json
import pathlib

import pytest

from qwhile.state import load_state

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
SCHEMAS = ROOT / "docs" / "schemas"

_acceptance: list[tuple[str, str, str]] = []


def expected_frames(name: str, names) -> dict:
    data = json.loads((FIXTURES / "expected" / f"{name}.json").read_text())
    return {lab: load_state(rows, names) for lab, rows in data["frames"].items()}


def max_diff(a, b) -> float:
    """Largest amplitude difference between two kets, 0.0 when both are empty."""
    labels = set(a.raw()) | set(b.raw())
    return max((abs(a[lab] - b[lab]) for lab in labels), default=0.0)


def load_fixture(name: str):
    from qwhile import parse
    return parse((FIXTURES / name).read_text())


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    status = "PASS" if rep.passed else "FAIL"
    detail = ""
    if rep.failed and call.excinfo is not None:
        detail = str(call.excinfo.value).splitlines()[0][:160]
    _acceptance.append((marker.args[0], status, detail))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in _acceptance:
        line = f"{status} {label}"
        if detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)
