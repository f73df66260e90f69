from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from asri.words import Alphabet, JumpSpec

settings.register_profile("asri", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("asri")


@pytest.fixture
def unit_alphabet() -> Alphabet:
    """Time, one Wiener letter and a unit jump at rate 2."""
    return Alphabet(1, [JumpSpec(1, Fraction(2))], 4)


@pytest.fixture
def rich_alphabet() -> Alphabet:
    """Two Wiener letters and a three-point jump law."""
    return Alphabet(2, [JumpSpec(1, Fraction(2), ((1, 1), (-1, 1), (2, 1)))], 3)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines after the test run."""
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
