"""Shared pytest plumbing for the acceptance gate.

Acceptance tests record a named verdict through the ``record_acceptance``
fixture. After the run, the terminal summary prints one PASS/FAIL line per
criterion, including a FAIL line for any acceptance test that crashed
before it could record a verdict.
"""

from __future__ import annotations

import pytest

ACCEPTANCE_NAMES = (
    "01-exact-dilation",
    "02-defect-scaling",
    "03-trajectory-channel-duality",
    "04-toyfock-duality",
    "05-belavkin-mean",
    "06-weak-convergence",
    "07-heat-kernel",
    "08-ballistic-regime",
    "09-girsanov-duality",
    "10-unraveling-consistency",
    "11-reproducibility",
)

_results: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_acceptance():
    """Record the verdict of one acceptance criterion, then assert it."""

    def _record(name: str, ok: bool, detail: str = "") -> None:
        _results[name] = (bool(ok), detail)
        assert ok, f"{name}: {detail}"

    return _record


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or report.when != "call":
        return
    name = report.nodeid.split("::")[-1]
    if name.startswith("test_"):
        name = name[len("test_"):].replace("_", "-")
    if report.failed and name in ACCEPTANCE_NAMES and name not in _results:
        _results[name] = (False, "test did not run to completion")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for name in ACCEPTANCE_NAMES:
        if name not in _results:
            continue
        ok, detail = _results[name]
        line = f"acceptance {name}: {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
