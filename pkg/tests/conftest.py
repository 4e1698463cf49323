import numpy as np
import pytest

from eventforest.core import TokenMatrix
from eventforest.fstw import EventNode

# acceptance criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def tm(rows, weights=None):
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    return TokenMatrix(rows, np.ones(len(rows), dtype=np.int64) if weights is None else weights)


def node(rows, times, merge_count=0, timestamp=None):
    """EventNode over ``rows`` covering frame ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    ts = float(times.mean()) if timestamp is None else float(timestamp)
    return EventNode(tm(rows), ts, merge_count, (float(times[0]), float(times[-1])), times)


def random_node(rng, n, d, t, merge_count=0):
    return node(rng.standard_normal((n, d)), [t], merge_count)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split(".")[0])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {key}: {detail}")
