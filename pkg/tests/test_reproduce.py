"""Tests for the acceptance reports of the MUB and cloning results."""
import pytest

from services.reproduce import SECTIONS, reproduce, section6, section7


def test_sections_registered():
    """Sections 6 and 7 are available."""
    assert sorted(SECTIONS) == [6, 7]


def test_full_adds_qutrit_rows():
    """--full appends the d=3 rows."""
    assert len(section6(full=True)) == len(section6()) + 1
    assert len(section7(full=True)) == len(section7()) + 1


@pytest.mark.slow
def test_mub_section_passes():
    """Every MUB row passes."""
    report = reproduce(6)

    failed = [r.name for r in report.rows if r.passed is False]
    assert failed == []
    assert report.ok


@pytest.mark.slow
def test_cloning_section_passes():
    """Every cloning row passes, also with two workers."""
    report = reproduce(7, jobs=2)

    failed = [r.name for r in report.rows if r.passed is False]
    assert failed == []
    assert "PASS" in report.render()
