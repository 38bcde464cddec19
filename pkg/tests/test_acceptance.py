"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Each criterion runs the corresponding bundled verification check at its
stated tolerance and asserts both the outcome and the runtime limit.
Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import pytest

from hybridopt.oracle_verify import BATTERY

CRITERIA = [
    # (number, check name, runtime limit in seconds)
    (1, "w1_metric", 30.0),
    (2, "intervals", 30.0),
    (3, "switching_law", 60.0),
    (4, "diffusion_law", 60.0),
    (5, "cost_oracle", 60.0),
    (6, "solver_oracle", 60.0),
    (7, "dpp", 120.0),
    (8, "continuity", 120.0),
    (9, "minimizing_sequence", 120.0),
    (10, "moment_bound", 60.0),
    (11, "determinism", 60.0),
]


@pytest.mark.parametrize("number,name,limit", CRITERIA, ids=[f"criterion_{n:02d}_{c}" for n, c, _ in CRITERIA])
def test_acceptance_criterion(number, name, limit):
    report = BATTERY[name]()
    flag = "PASS" if report.passed else "FAIL"
    print(
        f"[{flag}] criterion {number:2d} {name}: margin={report.margin:.4g} "
        f"tolerance={report.tolerance:.4g} runtime={report.elapsed:.2f}s (limit {limit:.0f}s)"
    )
    if not report.passed:
        detail = report.details.get("failed", [])
        pytest.fail(f"criterion {number} ({name}) failed subchecks: {detail}")
    assert report.elapsed < limit, f"criterion {number} exceeded its runtime limit"
