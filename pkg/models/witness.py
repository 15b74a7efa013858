"""Affine functionals on channel pairs and the discrimination tasks that induce them."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from kernel.matrix import hermitian_basis, partial_trace
from models.algebra import (
    Algebra,
    AlgebraElement,
    Measurement,
    StateEnsemble,
    StateFunctional,
    block_element,
    block_state,
    require_same_algebra,
)
from models.channels import BlockKey, Channel, choi_pairing
from utils.errors import FieldViolation, InputError, ReasonCodes, abort

logger = logging.getLogger(__name__)

Term = tuple[StateFunctional, AlgebraElement]
ChoiDual = dict[BlockKey, np.ndarray]

DROP_TOL = 1e-14


def terms_to_dual(in_alg: Algebra, out_alg: Algebra, terms: Sequence[Term]) -> ChoiDual:
    """K_ij = Σ_r a_r,i ⊗ B_r,jᵀ, so that Σ_r ⟨Φ(a_r), B_r⟩ = Σ_ij Re tr(C_ij K_ij)."""
    dual = {}
    for i, n in enumerate(in_alg.blocks):
        for j, m in enumerate(out_alg.blocks):
            dual[(i, j)] = np.zeros((n * m, n * m), dtype=complex)
    for a, b in terms:
        for (i, j) in dual:
            dual[(i, j)] += np.kron(a.blocks[i], b.blocks[j].T)
    return dual


def dual_to_terms(in_alg: Algebra, out_alg: Algebra, dual: Mapping[BlockKey, np.ndarray]) -> list[Term]:
    """Split K_ij = Σ_r G_r ⊗ Y_r over an orthonormal Hermitian basis {G_r} of the input block."""
    terms = []
    for (i, j), k in dual.items():
        n, m = in_alg.blocks[i], out_alg.blocks[j]
        for g in hermitian_basis(n):
            y = partial_trace(np.kron(g, np.eye(m)) @ k, [n, m], keep=[1])
            if np.max(np.abs(y)) <= DROP_TOL:
                continue
            terms.append((block_state(in_alg, i, g), block_element(out_alg, j, y.T)))
    return terms


@dataclass(frozen=True, eq=False)
class WitnessForm:
    """
    W(Φ₁, Φ₂) = δ₀ − Σ_r ⟨Φ₁(a_r), B_r⟩ − Σ_s ⟨Φ₂(a_s), B_s⟩.

    Each φ term is a (selfadjoint functional on A, selfadjoint element of B_i) pair.
    """

    in_alg: Algebra
    out_algs: tuple[Algebra, Algebra]
    delta0: float
    phi1: tuple[Term, ...]
    phi2: tuple[Term, ...]

    def __post_init__(self):
        object.__setattr__(self, "out_algs", tuple(self.out_algs))
        object.__setattr__(self, "phi1", tuple(tuple(t) for t in self.phi1))
        object.__setattr__(self, "phi2", tuple(tuple(t) for t in self.phi2))
        object.__setattr__(self, "delta0", float(self.delta0))
        violations = []
        for slot, terms in ((1, self.phi1), (2, self.phi2)):
            for r, (a, b) in enumerate(terms):
                require_same_algebra(self.in_alg, a.algebra, f"phi{slot}[{r}] functional")
                require_same_algebra(self.out_algs[slot - 1], b.algebra, f"phi{slot}[{r}] element")
                if not b.is_selfadjoint(1e-10) or not AlgebraElement(a.algebra, a.blocks).is_selfadjoint(1e-10):
                    violations.append(FieldViolation(f"phi{slot}[{r}]", "Term is not selfadjoint"))
        if violations:
            abort(InputError, ReasonCodes.NUMERIC_FAILURE, "Witness terms must be selfadjoint.", fields=violations)

    def terms(self, slot: int) -> tuple[Term, ...]:
        return self.phi1 if slot == 1 else self.phi2

    def choi_dual(self, slot: int) -> ChoiDual:
        return terms_to_dual(self.in_alg, self.out_algs[slot - 1], self.terms(slot))

    def linear_part(self, c1: Channel, c2: Channel) -> float:
        return choi_pairing(c1, self.choi_dual(1)) + choi_pairing(c2, self.choi_dual(2))

    def shifted(self, delta: float) -> WitnessForm:
        return WitnessForm(self.in_alg, self.out_algs, self.delta0 + delta, self.phi1, self.phi2)

    def scaled(self, factor: float) -> WitnessForm:
        """factor·W; the functional side of every term carries the scale."""
        def scale(terms):
            return tuple((a * factor, b) for a, b in terms)

        return WitnessForm(self.in_alg, self.out_algs, factor * self.delta0, scale(self.phi1), scale(self.phi2))

    @classmethod
    def from_duals(
        cls,
        in_alg: Algebra,
        out_algs: tuple[Algebra, Algebra],
        delta0: float,
        dual1: Mapping[BlockKey, np.ndarray],
        dual2: Mapping[BlockKey, np.ndarray],
    ) -> WitnessForm:
        return cls(
            in_alg,
            out_algs,
            delta0,
            tuple(dual_to_terms(in_alg, out_algs[0], dual1)),
            tuple(dual_to_terms(in_alg, out_algs[1], dual2)),
        )


@dataclass(frozen=True, eq=False)
class DiscriminationTask:
    """Ensemble labelled by X₁ ∪ X₂ with a readout M_i on B_i for each branch."""

    ensemble: StateEnsemble
    m1: Measurement
    m2: Measurement

    def __post_init__(self):
        x1, x2 = set(self.m1.outcomes), set(self.m2.outcomes)
        if x1 & x2:
            abort(
                InputError,
                ReasonCodes.LABEL_MISMATCH,
                f"Label sets must be disjoint, shared: {sorted(x1 & x2)}.",
                fields=[FieldViolation("m2.outcomes", "Overlaps with m1.outcomes")],
            )
        if set(self.ensemble.labels) != x1 | x2:
            abort(
                InputError,
                ReasonCodes.LABEL_MISMATCH,
                "Ensemble labels must equal the union of the measurement outcomes.",
                fields=[FieldViolation("ensemble.labels", f"Got {sorted(self.ensemble.labels)}")],
            )

    @property
    def in_alg(self) -> Algebra:
        return self.ensemble.algebra

    @property
    def out_algs(self) -> tuple[Algebra, Algebra]:
        return self.m1.algebra, self.m2.algebra

    def readout(self, slot: int) -> Measurement:
        return self.m1 if slot == 1 else self.m2

    def terms(self, slot: int) -> list[Term]:
        m = self.readout(slot)
        return [(self.ensemble[z], m.effect(z)) for z in m.outcomes]

    def choi_objective(self, slot: int) -> ChoiDual:
        """Choi-space operator whose pairing with Φ_slot is Σ_{z∈X_slot} ⟨Φ(E(z)), M(z)⟩."""
        return terms_to_dual(self.in_alg, self.out_algs[slot - 1], self.terms(slot))
