"""Compatibility decisions and guessing probabilities, all solved as block SDPs over joint channels."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from kernel.matrix import hermitian_basis, permute_factors
from models.algebra import Algebra, require_same_algebra, tensor_algebra
from models.channels import (
    BlockKey,
    Channel,
    choi_pairing,
    is_channel,
    margins,
    normalize_unital,
    random_joint_channel,
)
from models.witness import DiscriminationTask, WitnessForm
from solver.sdp import SdpBuilder, SdpSolution, solve
from utils.concurrency import run_parallel
from utils.config import settings
from utils.errors import InputError, ReasonCodes, VerificationError, abort

logger = logging.getLogger(__name__)

COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"
INCONCLUSIVE = "inconclusive"


@dataclass(eq=False)
class CompatibilityVerdict:
    status: str
    slack: float
    joint: Channel | None
    dual_multipliers: tuple[dict[BlockKey, np.ndarray], dict[BlockKey, np.ndarray]]
    offset: float
    solution: SdpSolution = field(repr=False)

    @property
    def compatible(self) -> bool:
        return self.status == COMPATIBLE

    def describe(self) -> str:
        return f"{self.status.upper()}, e*={self.slack:.6e}"


def _margin_operator(slot: int, op: np.ndarray, n: int, m1: int, m2: int) -> np.ndarray:
    """Operator on the joint block whose pairing with J equals the pairing of op with the slot margin."""
    if slot == 1:
        return np.kron(op, np.eye(m2))
    return permute_factors(np.kron(op, np.eye(m1)), [n, m2, m1], [0, 2, 1])


class _JointProgram:
    """SDP over Choi blocks of a joint channel A → B₁ ⊗ B₂ with exact unitality rows."""

    def __init__(self, in_alg: Algebra, out1: Algebra, out2: Algebra):
        self.in_alg, self.out1, self.out2 = in_alg, out1, out2
        self.out = tensor_algebra(out1, out2)
        self.builder = SdpBuilder()
        self.index: dict[tuple[int, int, int], int] = {}
        for i, n in enumerate(in_alg.blocks):
            for j1, m1 in enumerate(out1.blocks):
                for j2, m2 in enumerate(out2.blocks):
                    self.index[(i, j1, j2)] = self.builder.add_block(n * m1 * m2)
        self._objective: dict[int, np.ndarray] = {}

    def slot_terms(self, slot: int, i: int, j: int, op: np.ndarray) -> dict[int, np.ndarray]:
        n = self.in_alg.blocks[i]
        terms = {}
        other = self.out2 if slot == 1 else self.out1
        for jo in range(len(other.blocks)):
            j1, j2 = (j, jo) if slot == 1 else (jo, j)
            m1, m2 = self.out1.blocks[j1], self.out2.blocks[j2]
            terms[self.index[(i, j1, j2)]] = _margin_operator(slot, op, n, m1, m2)
        return terms

    def add_unitality(self) -> None:
        for i, n in enumerate(self.in_alg.blocks):
            for g in hermitian_basis(n):
                terms = {}
                for (ii, j1, j2), k in self.index.items():
                    if ii == i:
                        terms[k] = np.kron(g, np.eye(self.out1.blocks[j1] * self.out2.blocks[j2]))
                self.builder.add_row(terms, float(np.real(np.trace(g))))

    def add_slot_objective(self, slot: int, dual: Mapping[BlockKey, np.ndarray]) -> None:
        for (i, j), k_op in dual.items():
            for block, op in self.slot_terms(slot, i, j, k_op).items():
                self._objective[block] = self._objective.get(block, 0) + op

    def finish_objective(self) -> None:
        for block, op in self._objective.items():
            self.builder.set_objective(block, op)

    def joint_from(self, sol: SdpSolution) -> Channel:
        k2 = len(self.out2.blocks)
        blocks = {(i, j1 * k2 + j2): sol.x[k] for (i, j1, j2), k in self.index.items()}
        return normalize_unital(self.in_alg, self.out, blocks)


def _require_pair(c1: Channel, c2: Channel) -> None:
    require_same_algebra(c1.in_alg, c2.in_alg, "channel pair inputs")


def check_compatibility(c1: Channel, c2: Channel, tol: float | None = None) -> CompatibilityVerdict:
    """
    Minimise e over joint channels J subject to |⟨A_l, J⟩ − b_l| ≤ e for every margin coordinate.

    The program is always feasible. Its multipliers give a separating functional
    when e* > 0: for every compatible pair, Σ_l λ_l ⟨G_l, Φ_slot⟩ ≥ offset + e*.
    """
    _require_pair(c1, c2)
    tol = settings.decision_tol if tol is None else tol
    prog = _JointProgram(c1.in_alg, c1.out_alg, c2.out_alg)
    builder = prog.builder
    prog.add_unitality()
    e = builder.add_scalar(objective=-1.0)

    rows: list[tuple[int, BlockKey, int, int, int]] = []
    for slot, target in ((1, c1), (2, c2)):
        for (i, j), block in target.choi.items():
            size = target.in_alg.blocks[i] * target.out_alg.blocks[j]
            for r, g in enumerate(hermitian_basis(size)):
                b = float(np.real(np.sum(g * block.T)))
                terms = prog.slot_terms(slot, i, j, g)
                s1 = builder.add_scalar()
                s2 = builder.add_scalar()
                row_p = builder.add_row({**terms, e: -1.0, s1: 1.0}, b)
                row_q = builder.add_row({**terms, e: 1.0, s2: -1.0}, b)
                rows.append((slot, (i, j), r, row_p, row_q))

    problem = builder.build()
    sol = solve(problem).require_optimal("compatibility SDP")
    slack = max(0.0, -sol.primal_objective)

    duals: tuple[dict, dict] = ({}, {})
    offset = 0.0
    for slot, key, r, row_p, row_q in rows:
        lam = sol.y[row_p] + sol.y[row_q]
        target = c1 if slot == 1 else c2
        size = target.choi[key].shape[0]
        g = hermitian_basis(size)[r]
        duals[slot - 1][key] = duals[slot - 1].get(key, np.zeros((size, size), dtype=complex)) + lam * g
        offset += lam * problem.rhs[row_p]

    if slack <= tol:
        status = COMPATIBLE
    elif slack <= settings.inconclusive_tol:
        status = INCONCLUSIVE
        logger.warning(f"check_compatibility: e*={slack:.3e} inside the inconclusive band, tighten solver tolerances")
    else:
        status = INCOMPATIBLE

    joint = prog.joint_from(sol) if status == COMPATIBLE else None
    if joint is not None:
        report = is_channel(joint)
        if not report:
            abort(
                VerificationError,
                ReasonCodes.VERIFICATION_FAILED,
                f"Recovered joint channel is not a channel (psd {report.psd_violation:.3e}, unitality {report.unitality_residual:.3e}).",
            )
    logger.info(f"check_compatibility: {status} e*={slack:.6e} ({sol.iterations} iterations)")
    return CompatibilityVerdict(status, slack, joint, duals, offset, sol)


def p_prior_given(c1: Channel, c2: Channel, t: DiscriminationTask) -> float:
    """Σ_i Σ_{z∈X_i} ⟨Φ_i(E(z)), M_i(z)⟩."""
    require_same_algebra(c1.in_alg, t.in_alg, "first channel and task ensemble")
    require_same_algebra(c2.in_alg, t.in_alg, "second channel and task ensemble")
    require_same_algebra(c1.out_alg, t.out_algs[0], "first channel and first readout")
    require_same_algebra(c2.out_alg, t.out_algs[1], "second channel and second readout")
    return choi_pairing(c1, t.choi_objective(1)) + choi_pairing(c2, t.choi_objective(2))


def max_channel_pairing(in_alg: Algebra, out_alg: Algebra, dual: Mapping[BlockKey, np.ndarray]) -> tuple[float, Channel]:
    """max over channels Φ: A → B of Σ_ij Re tr(C_ij K_ij)."""
    builder = SdpBuilder()
    index = {}
    for i, n in enumerate(in_alg.blocks):
        for j, m in enumerate(out_alg.blocks):
            index[(i, j)] = builder.add_block(n * m, objective=dual[(i, j)])
    for i, n in enumerate(in_alg.blocks):
        for g in hermitian_basis(n):
            terms = {index[(i, j)]: np.kron(g, np.eye(m)) for j, m in enumerate(out_alg.blocks)}
            builder.add_row(terms, float(np.real(np.trace(g))))
    sol = solve(builder.build()).require_optimal("channel SDP")
    channel = normalize_unital(in_alg, out_alg, {key: sol.x[k] for key, k in index.items()})
    return sol.primal_objective, channel


def p_prior(t: DiscriminationTask, jobs: int | None = None) -> float:
    """Optimal guessing probability when the branch is known before the channel is chosen."""
    calls = [
        (lambda slot=slot: max_channel_pairing(t.in_alg, t.out_algs[slot - 1], t.choi_objective(slot))[0])
        for slot in (1, 2)
    ]
    value = float(sum(run_parallel(calls, jobs)))
    logger.info(f"p_prior = {value:.10f}")
    return value


def _max_joint_pairing(
    in_alg: Algebra,
    out_algs: tuple[Algebra, Algebra],
    dual1: Mapping[BlockKey, np.ndarray],
    dual2: Mapping[BlockKey, np.ndarray],
) -> tuple[float, Channel, SdpSolution]:
    prog = _JointProgram(in_alg, *out_algs)
    prog.add_unitality()
    prog.add_slot_objective(1, dual1)
    prog.add_slot_objective(2, dual2)
    prog.finish_objective()
    sol = solve(prog.builder.build()).require_optimal("joint channel SDP")
    return sol.primal_objective, prog.joint_from(sol), sol


def p_post(t: DiscriminationTask) -> float:
    """Optimal guessing probability when the branch is revealed only after a joint channel is applied."""
    value, _, _ = _max_joint_pairing(t.in_alg, t.out_algs, t.choi_objective(1), t.choi_objective(2))
    logger.info(f"p_post = {value:.10f}")
    return value


@dataclass(eq=False)
class CompatibleOptimum:
    value: float
    pair: tuple[Channel, Channel]
    joint: Channel
    solution: SdpSolution = field(repr=False)


def max_over_compatible(w: WitnessForm) -> CompatibleOptimum:
    """Minimum of the affine functional w over compatible pairs, with a pair attaining it."""
    linear, joint, sol = _max_joint_pairing(w.in_alg, w.out_algs, w.choi_dual(1), w.choi_dual(2))
    value = w.delta0 - linear
    pair = margins(joint, *w.out_algs)
    logger.info(f"max_over_compatible: min value {value:.10e}")
    return CompatibleOptimum(value, pair, joint, sol)


def random_compatible_pair(in_alg: Algebra, out1: Algebra, out2: Algebra, rng: np.random.Generator) -> tuple[Channel, Channel]:
    """Margins of a random joint channel."""
    return margins(random_joint_channel(in_alg, out1, out2, rng), out1, out2)


@dataclass
class ScanRow:
    parameter: float
    status: str
    slack: float


@dataclass
class ScanResult:
    rows: list[ScanRow]
    lo: float
    hi: float

    @property
    def estimate(self) -> float:
        return (self.lo + self.hi) / 2


def scan_boundary(
    family: Callable[[float], tuple[Channel, Channel]],
    lo: float,
    hi: float,
    steps: int,
) -> ScanResult:
    """
    Bisection for the compatibility boundary of a one-parameter family.

    ``family(lo)`` is expected compatible and ``family(hi)`` incompatible.
    Inconclusive verdicts count as incompatible.
    """
    if lo > hi:
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Scan range is empty: lo={lo} > hi={hi}.")
    rows: list[ScanRow] = []

    def compatible_at(value: float) -> bool:
        verdict = check_compatibility(*family(value))
        rows.append(ScanRow(value, verdict.status, verdict.slack))
        return verdict.compatible

    if lo == hi:
        compatible_at(lo)
        return ScanResult(rows, lo, hi)
    if not compatible_at(lo):
        logger.warning(f"scan_boundary: lower end {lo} is already incompatible")
        return ScanResult(rows, lo, lo)
    if compatible_at(hi):
        logger.warning(f"scan_boundary: upper end {hi} is still compatible")
        return ScanResult(rows, hi, hi)
    for _ in range(steps):
        mid = (lo + hi) / 2
        if compatible_at(mid):
            lo = mid
        else:
            hi = mid
    return ScanResult(rows, lo, hi)
