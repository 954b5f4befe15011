import os

import pytest


def pytest_collection_modifyitems(config, items):
    if os.environ.get("WAVEPOT_RUN_3D") == "1":
        return
    skip = pytest.mark.skip(reason="3D run; set WAVEPOT_RUN_3D=1")
    for item in items:
        if "smoke3d" in item.keywords:
            item.add_marker(skip)


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line; call as ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
