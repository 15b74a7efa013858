"""Witness calculus: evaluation, tightening, task conversion, separation and lifting."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kernel.matrix import is_projection, trace_norm
from models.algebra import (
    Algebra,
    AlgebraElement,
    Measurement,
    StateEnsemble,
    StateFunctional,
    is_informationally_complete,
    require_same_algebra,
    trace_state,
)
from models.channels import Channel, compose, conditional_preparation, mix, random_channel
from models.witness import DiscriminationTask, Term, WitnessForm
from services.compatibility import (
    INCOMPATIBLE,
    check_compatibility,
    max_over_compatible,
    p_post,
    p_prior,
    random_compatible_pair,
)
from utils.concurrency import run_parallel
from utils.config import settings
from utils.errors import InputError, ReasonCodes, VerificationError, abort

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10
DECOMPOSITION_TOL = 1e-8
TASK_GAP = 1e-6
W1_TOL = 1e-6


def _check_pair(w: WitnessForm, c1: Channel, c2: Channel) -> None:
    require_same_algebra(w.in_alg, c1.in_alg, "witness and first channel inputs")
    require_same_algebra(w.in_alg, c2.in_alg, "witness and second channel inputs")
    require_same_algebra(w.out_algs[0], c1.out_alg, "witness and first channel outputs")
    require_same_algebra(w.out_algs[1], c2.out_alg, "witness and second channel outputs")


def evaluate(w: WitnessForm, c1: Channel, c2: Channel) -> float:
    _check_pair(w, c1, c2)
    return w.delta0 - w.linear_part(c1, c2)


def detects(w: WitnessForm, c1: Channel, c2: Channel, tol: float | None = None) -> bool:
    tol = settings.detect_tol if tol is None else tol
    return evaluate(w, c1, c2) < -tol


def tighten(w: WitnessForm) -> WitnessForm:
    """Shift δ₀ so that the minimum over compatible pairs becomes zero."""
    shift = max_over_compatible(w).value
    logger.info(f"tighten: shifting delta0 by {-shift:.10e}")
    return w.shifted(-shift)


@dataclass(eq=False)
class TaskConstruction:
    task: DiscriminationTask
    alpha: float
    delta: float
    beta: float
    residual: float


def _functional_trace_norm(s: StateFunctional) -> float:
    return sum(trace_norm(b) for b in s.blocks)


def _decompose(terms: Sequence[Term], m: Measurement, in_alg: Algebra) -> tuple[list[StateFunctional], float]:
    """a(z) = Σ_r c_r(z) a_r where B_r = Σ_z c_r(z) M(z)."""
    frame = np.array([e.coordinates() for e in m.effects])
    inverse = np.linalg.pinv(frame.T, rcond=PINV_RCOND)
    zero = StateFunctional(in_alg, tuple(np.zeros((n, n), dtype=complex) for n in in_alg.blocks))
    parts = [zero] * len(m.outcomes)
    residual = 0.0
    for a, b in terms:
        coords = b.coordinates()
        c = inverse @ coords
        residual = max(residual, float(np.linalg.norm(frame.T @ c - coords)) / max(1.0, float(np.linalg.norm(coords))))
        parts = [p + a * float(cz) for p, cz in zip(parts, c)]
    return parts, residual


def task_from_witness(w: WitnessForm, m1: Measurement, m2: Measurement) -> TaskConstruction:
    """
    Discrimination task with W(Φ) = α[δ − P_prior(Φ‖task)] for every channel pair.

    Both readouts must be informationally complete with disjoint outcome labels.
    """
    require_same_algebra(w.out_algs[0], m1.algebra, "witness first output and m1")
    require_same_algebra(w.out_algs[1], m2.algebra, "witness second output and m2")
    for name, m in (("m1", m1), ("m2", m2)):
        if not is_informationally_complete(m):
            abort(InputError, ReasonCodes.NOT_INFORMATIONALLY_COMPLETE, f"{name} is not informationally complete.")

    parts1, res1 = _decompose(w.phi1, m1, w.in_alg)
    parts2, res2 = _decompose(w.phi2, m2, w.in_alg)
    residual = max(res1, res2)
    if residual > DECOMPOSITION_TOL:
        abort(
            InputError,
            ReasonCodes.DECOMPOSITION_RESIDUAL,
            f"Witness elements are not in the span of the readout effects (residual {residual:.3e}).",
        )

    a0 = trace_state(w.in_alg)
    parts = parts1 + parts2
    beta = 2 * w.in_alg.total_size * max(_functional_trace_norm(p) for p in parts) + 1
    shifted = [a0 * beta + p for p in parts]
    alpha = sum(s.trace for s in shifted)
    delta = (w.delta0 + 2 * beta) / alpha
    labels = m1.outcomes + m2.outcomes
    ensemble = StateEnsemble(w.in_alg, labels, tuple(s * (1 / alpha) for s in shifted))
    task = DiscriminationTask(ensemble, m1, m2)
    logger.info(f"task_from_witness: alpha={alpha:.6g} delta={delta:.10f} beta={beta:.6g} residual={residual:.2e}")
    return TaskConstruction(task, alpha, delta, beta, residual)


def witness_from_task(t: DiscriminationTask) -> WitnessForm:
    """W(Φ) = P_post − P_prior(Φ‖task); tight by construction."""
    post = p_post(t)
    prior = p_prior(t)
    if prior <= post + TASK_GAP:
        abort(
            InputError,
            ReasonCodes.DEGENERATE_TASK,
            f"Task does not witness incompatibility: p_prior={prior:.10f}, p_post={post:.10f}.",
        )
    return WitnessForm(t.in_alg, t.out_algs, post, tuple(t.terms(1)), tuple(t.terms(2)))


def sample_compatible_pairs(w: WitnessForm, rng: np.random.Generator, samples: int) -> list[tuple[Channel, Channel]]:
    return [random_compatible_pair(w.in_alg, *w.out_algs, rng) for _ in range(samples)]


def sampled_minimum(
    w: WitnessForm,
    rng: np.random.Generator | None = None,
    samples: int | None = None,
    jobs: int | None = None,
) -> float:
    """Smallest value of w over margins of random joint channels."""
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    samples = settings.verify_samples if samples is None else samples
    pairs = sample_compatible_pairs(w, rng, samples)
    values = run_parallel([(lambda p=p: evaluate(w, *p)) for p in pairs], jobs)
    return min(values)


def sample_pairs(
    in_alg: Algebra,
    out_algs: tuple[Algebra, Algebra],
    rng: np.random.Generator,
    samples: int,
    anchor: tuple[Channel, Channel] | None = None,
) -> list[tuple[Channel, Channel]]:
    """Random channel pairs, optionally mixed towards an anchor pair with a uniform weight."""
    pairs = []
    for _ in range(samples):
        c1 = random_channel(in_alg, out_algs[0], rng)
        c2 = random_channel(in_alg, out_algs[1], rng)
        if anchor is not None:
            t = float(rng.uniform())
            c1, c2 = mix(t, anchor[0], c1), mix(t, anchor[1], c2)
        pairs.append((c1, c2))
    return pairs


@dataclass
class DetectionAgreement:
    total: int
    agree: int
    only_first: int
    only_second: int

    @property
    def equivalent(self) -> bool:
        return self.agree == self.total


def detection_agreement(w1: WitnessForm, w2: WitnessForm, pairs: Sequence[tuple[Channel, Channel]]) -> DetectionAgreement:
    """Compare detection sets on sampled pairs; equality here is evidence, not proof."""
    only_first = only_second = agree = 0
    for c1, c2 in pairs:
        d1, d2 = detects(w1, c1, c2), detects(w2, c1, c2)
        if d1 == d2:
            agree += 1
        elif d1:
            only_first += 1
        else:
            only_second += 1
    return DetectionAgreement(len(pairs), agree, only_first, only_second)


def witness_from_incompatible_pair(
    c1: Channel,
    c2: Channel,
    rng: np.random.Generator | None = None,
    samples: int | None = None,
) -> WitnessForm:
    """
    Separating witness assembled from the multipliers of the compatibility SDP.

    The result is tightened and then re-verified: it must detect the pair by
    at least e*/2 and stay above −1e-6 on sampled compatible pairs.
    """
    verdict = check_compatibility(c1, c2)
    if verdict.status != INCOMPATIBLE:
        abort(
            InputError,
            ReasonCodes.PAIR_COMPATIBLE,
            f"Pair is not certified incompatible ({verdict.describe()}); no separating witness exists.",
        )
    dual1, dual2 = verdict.dual_multipliers
    raw = WitnessForm.from_duals(
        c1.in_alg,
        (c1.out_alg, c2.out_alg),
        -(verdict.offset + verdict.slack),
        {k: -v for k, v in dual1.items()},
        {k: -v for k, v in dual2.items()},
    )
    w = tighten(raw)
    value = evaluate(w, c1, c2)
    if value >= -verdict.slack / 2:
        abort(
            VerificationError,
            ReasonCodes.DUAL_EXTRACTION,
            f"Dual-derived witness only reaches {value:.3e} on the pair (e*={verdict.slack:.3e}).",
        )
    floor = sampled_minimum(w, rng, samples)
    if floor < -W1_TOL:
        abort(
            VerificationError,
            ReasonCodes.DUAL_EXTRACTION,
            f"Dual-derived witness is negative on a sampled compatible pair ({floor:.3e}).",
        )
    logger.info(f"witness_from_incompatible_pair: value {value:.6e}, sampled minimum {floor:.3e}")
    return w


def lift_witness(w: WitnessForm, p: Measurement, slot: int = 2) -> WitnessForm:
    """
    Replace the abelian output ℓ∞(X) of ``slot`` by p's algebra.

    Each element B on ℓ∞(X) becomes Σ_x B(x) P(x), i.e. W_P(Φ) = W(…, P̂∘Φ, …).
    """
    if slot not in (1, 2):
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Slot must be 1 or 2, got {slot}.")
    old = w.out_algs[slot - 1]
    if not old.is_abelian or len(old.blocks) != len(p.outcomes):
        abort(
            InputError,
            ReasonCodes.ALGEBRA_MISMATCH,
            f"Slot {slot} output {old} must be ℓ∞ with {len(p.outcomes)} points to lift through p.",
        )
    for x, e in zip(p.outcomes, p.effects):
        if not all(is_projection(b) for b in e.blocks) or all(np.allclose(b, 0) for b in e.blocks):
            abort(InputError, ReasonCodes.NON_PROJECTIVE, f"Effect {x!r} is not a nonzero projection.")

    def lift(b: AlgebraElement) -> AlgebraElement:
        total = p.algebra.zeros()
        for x, effect in enumerate(p.effects):
            total = total + effect * float(np.real(b.blocks[x][0, 0]))
        return total

    lifted = tuple((a, lift(b)) for a, b in w.terms(slot))
    outs = list(w.out_algs)
    outs[slot - 1] = p.algebra
    phi1, phi2 = (lifted, w.phi2) if slot == 1 else (w.phi1, lifted)
    return WitnessForm(w.in_alg, tuple(outs), w.delta0, phi1, phi2)


def lift_pair(c1: Channel, c2: Channel, p: Measurement, slot: int = 2, b0: StateFunctional | None = None) -> tuple[Channel, Channel]:
    """
    Replace the ℓ∞ channel in ``slot`` by Ψ∘Φ, where Ψ prepares the states read back exactly by p.

    Since P̂∘Ψ is the identity, lift_witness(w, p, slot) takes the same value on
    the lifted pair as w on the original one.
    """
    if slot not in (1, 2):
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Slot must be 1 or 2, got {slot}.")
    psi = conditional_preparation(p, b0)
    target = c1 if slot == 1 else c2
    require_same_algebra(target.out_alg, psi.in_alg, f"slot {slot} output and the readout outcomes")
    lifted = compose(psi, target)
    return (lifted, c2) if slot == 1 else (c1, lifted)
