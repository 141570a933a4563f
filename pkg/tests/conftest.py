"""Shared fixtures and the acceptance summary printed at the end of a run."""

from __future__ import annotations

import json

import pytest

from sheetcap.harness import ExperimentConfig, run_experiment

ACCEPTANCE = pytest.StashKey[dict]()
NOTES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = {}


@pytest.fixture
def note(request):
    """Append measured values to the current criterion's summary line."""
    notes: list[str] = []
    request.node.stash[NOTES] = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        number = marker.args[0]
        title = marker.kwargs.get("title", item.name)
        notes = "; ".join(item.stash.get(NOTES, []))
        item.config.stash[ACCEPTANCE][number] = (title, rep.passed, notes)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, notes = results[number]
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title}"
        if notes:
            line += f" | {notes}"
        terminalreporter.write_line(line)


class ReportCache:
    """First-run reports shared between acceptance criteria and the determinism check."""

    def __init__(self):
        self._reports = {}

    def get(self, experiment: str, **overrides):
        key = (experiment, json.dumps(overrides, sort_keys=True))
        if key not in self._reports:
            cfg = ExperimentConfig.from_mapping(experiment, overrides)
            self._reports[key] = run_experiment(cfg)
        return self._reports[key]

    def items(self):
        return self._reports.items()


@pytest.fixture(scope="session")
def report_cache():
    return ReportCache()
