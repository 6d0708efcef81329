import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "lapmm", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("lapmm")

_ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Register ``(criterion, passed, detail)`` for the end-of-run summary."""

    def record(name, passed, detail=""):
        _ACCEPTANCE[name] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: (int(re.match(r"\d+", s).group()), s)):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
