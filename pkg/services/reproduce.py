"""Acceptance rows for the MUB (6) and cloning (7) witness results."""
from __future__ import annotations

import logging
from typing import Callable

import numpy as np

from models.algebra import Algebra
from models.channels import from_measurement, identity_channel, map_trace
from services.catalog import (
    cloning_margins,
    cloning_test_operator,
    fourier_mub,
    gamma_threshold,
    measurement_channels,
    noisy_mub_measurements,
    perturbed_cloning_pair,
    prepare_channel,
    scan_gamma,
    xi_cc,
    xi_cc_clone,
    xi_mc,
    xi_mm,
)
from services.compatibility import check_compatibility, max_over_compatible
from services.witnesses import detects, evaluate
from utils.concurrency import run_parallel
from utils.report import ReportRow, RunReport

logger = logging.getLogger(__name__)

Check = Callable[[], ReportRow]


def _close(name: str, value: float, expected: float, tol: float) -> ReportRow:
    return ReportRow(name=name, value=float(value), expected=float(expected), passed=bool(abs(value - expected) <= tol), detail=f"tol {tol:g}")


def _flag(name: str, value, passed: bool, detail: str = "") -> ReportRow:
    return ReportRow(name=name, value=value, passed=bool(passed), detail=detail)


def _mub_zero_pair(d: int):
    mub = fourier_mub(d)
    m0, n0 = noisy_mub_measurements(d, gamma_threshold(d))
    return m0, n0, mub


def section6(full: bool = False) -> list[Check]:
    d = 2

    def threshold():
        return _close("gamma_threshold(2)", gamma_threshold(2), 1 / np.sqrt(2), 1e-12)

    def zero_at_m0():
        return _close("xi_mm(M0,N0)", evaluate(xi_mm(d), *measurement_channels(d, gamma_threshold(d))), 0.0, 1e-10)

    def uniform():
        return _close("xi_mm(uniform)", evaluate(xi_mm(d), *measurement_channels(d, 0.0)), np.sqrt(2) / 4, 1e-10)

    def projective():
        value = evaluate(xi_mm(d), *measurement_channels(d, 1.0))
        return _flag("xi_mm(projective MUB) detects", value, value < 0)

    def tight():
        return _close("min xi_mm over compatible", max_over_compatible(xi_mm(d)).value, 0.0, 1e-6)

    def below():
        verdict = check_compatibility(*measurement_channels(d, 0.70))
        return _flag("noisy MUB gamma=0.70", verdict.status, verdict.compatible, f"e*={verdict.slack:.3e}")

    def above():
        verdict = check_compatibility(*measurement_channels(d, 0.72))
        return _flag("noisy MUB gamma=0.72", verdict.status, verdict.status == "incompatible", f"e*={verdict.slack:.3e}")

    def xi_mc_zero():
        m0, n0, mub = _mub_zero_pair(d)
        return _close("xi_mc(M0, Lambda_N0)", evaluate(xi_mc(d, mub.f), from_measurement(m0), prepare_channel(n0, mub.f)), 0.0, 1e-10)

    def scan(dim: int):
        def run():
            result = scan_gamma(dim, 0.5, 1.0, 12)
            return _close(f"scan_gamma({dim}) boundary", result.estimate, gamma_threshold(dim), 1e-3)

        return run

    checks = [threshold, zero_at_m0, uniform, projective, tight, below, above, xi_mc_zero, scan(2)]
    if full:
        checks.append(scan(3))
    return checks


def section7(full: bool = False) -> list[Check]:
    d = 2

    def spectrum2():
        _, spectrum = cloning_test_operator(2)
        nonzero = spectrum[np.abs(spectrum) > 1e-10]
        ok = nonzero.shape == (4,) and np.allclose(nonzero, [1.5, 1.5, 0.5, 0.5], atol=1e-10)
        return _flag("E spectrum d=2", " ".join(f"{v:.6g}" for v in nonzero), ok)

    def spectrum3():
        _, spectrum = cloning_test_operator(3)
        return _close("E lambda_max d=3", spectrum[0], 4 / 3, 1e-10)

    def clone_zero():
        return _close("xi_cc_clone(Theta0,Lambda0)", evaluate(xi_cc_clone(d), *cloning_margins(d)), 0.0, 1e-9)

    def clone_identity():
        ident = identity_channel(Algebra.full(d))
        return _close("xi_cc_clone(id,id)", evaluate(xi_cc_clone(d), ident, ident), -2.0, 1e-12)

    def clone_bound():
        w = xi_cc_clone(d)
        best = w.delta0 - max_over_compatible(w).value
        return _close("max Tr[Theta+Lambda] compatible", best, d * (d + 1), 1e-5)

    def margins_trace():
        theta, lam = cloning_margins(d)
        return _close("Tr[Theta0]+Tr[Lambda0]", map_trace(theta) + map_trace(lam), d * (d + 1), 1e-10)

    def margins_compatible():
        verdict = check_compatibility(*cloning_margins(d))
        return _flag("cloning margins compatible", verdict.status, verdict.slack <= 1e-6, f"e*={verdict.slack:.3e}")

    def cc_at_cloning():
        return _close("xi_cc(Theta0,Lambda0)", evaluate(xi_cc(d), *cloning_margins(d)), np.sqrt(2) - 4 / 3, 1e-9)

    def measure_prepare_pair():
        m0, n0, mub = _mub_zero_pair(d)
        return prepare_channel(m0, mub.e), prepare_channel(n0, mub.f)

    def clone_at_mp():
        return _close("xi_cc_clone(Theta_M0,Lambda_N0)", evaluate(xi_cc_clone(d), *measure_prepare_pair()), 4 - np.sqrt(2), 1e-9)

    def cc_at_mp():
        return _close("xi_cc(Theta_M0,Lambda_N0)", evaluate(xi_cc(d), *measure_prepare_pair()), 0.0, 1e-9)

    def inequivalence():
        pair = perturbed_cloning_pair(d, 0.02)
        by_clone = detects(xi_cc_clone(d), *pair)
        by_cc = detects(xi_cc(d), *pair)
        return _flag("eps=0.02 detected by clone witness only", f"clone={by_clone} cc={by_cc}", by_clone and not by_cc)

    def clone_bound3():
        w = xi_cc_clone(3)
        best = w.delta0 - max_over_compatible(w).value
        return _close("max Tr[Theta+Lambda] compatible d=3", best, 12.0, 1e-5)

    checks = [spectrum2, spectrum3, clone_zero, clone_identity, margins_trace, clone_bound, margins_compatible,
              cc_at_cloning, clone_at_mp, cc_at_mp, inequivalence]
    if full:
        checks.append(clone_bound3)
    return checks


SECTIONS = {6: section6, 7: section7}


def reproduce(section: int, jobs: int | None = None, full: bool = False) -> RunReport:
    checks = SECTIONS[section](full)
    report = RunReport(command=f"reproduce --section {section}")
    report.rows.extend(run_parallel(checks, jobs))
    failed = [r.name for r in report.rows if r.passed is False]
    if failed:
        logger.warning(f"reproduce: section {section} failed rows {failed}")
    return report
