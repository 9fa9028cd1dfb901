"""Shared fixtures and the per-criterion acceptance summary."""
from __future__ import annotations

import re

import numpy as np
import pytest

from wfbounds.compress import compress_top
from wfbounds.transform import forward

_CRITERIA = {}
_NOTES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def note(request):
    """Attach a measured figure to the acceptance summary line."""
    def add(text):
        _NOTES.setdefault(request.node.nodeid, []).append(str(text))
    return add


def compressed_pair(rng, n=64, s=8, basis="dft"):
    x, q = np.cumsum(rng.standard_normal((2, n)), axis=1)
    return x, q, compress_top(forward(x, basis), s), compress_top(forward(q, basis), s)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2), report.nodeid)
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[key] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (num, name, nodeid), outcome in sorted(_CRITERIA.items()):
        status = "PASS" if outcome == "passed" else "FAIL"
        extra = "; ".join(_NOTES.get(nodeid, []))
        tr.write_line(f"criterion {num:2d} {name}: {status}" + (f"  ({extra})" if extra else ""))
