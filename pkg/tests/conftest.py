import pathlib
import re

import pytest

from markerstack.dataset import read_csv

DATA = pathlib.Path(__file__).parent / "data"

# criterion number -> (outcome, detail); filled as acceptance tests report
_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def fixture_path():
    return DATA / "fixture_cohort.csv"


@pytest.fixture(scope="session")
def fixture_ds(fixture_path):
    return read_csv(fixture_path)


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[int(m.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}  {outcome}  {detail}")
