"""Finite-dimensional von Neumann algebras as direct sums of matrix blocks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from kernel.matrix import (
    as_matrix,
    hermitian,
    hermitian_coordinates,
    min_eigenvalue,
    projector,
    psd_power,
)
from utils.config import settings
from utils.errors import FieldViolation, InputError, ReasonCodes, abort

logger = logging.getLogger(__name__)

IC_RANK_RTOL = 1e-9
IC_RETRIES = 3


@dataclass(frozen=True)
class Algebra:
    """Direct sum of full matrix blocks M_{n_1} ⊕ ... ⊕ M_{n_k}."""

    blocks: tuple[int, ...]

    def __post_init__(self):
        blocks = tuple(int(n) for n in self.blocks)
        if not blocks or any(n <= 0 for n in blocks):
            abort(
                InputError,
                ReasonCodes.DIMENSION_MISMATCH,
                f"Algebra needs at least one positive block, got {self.blocks}.",
                fields=[FieldViolation("blocks", "Must be a non-empty list of positive integers")],
            )
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def full(cls, d: int) -> Algebra:
        """L(C^d)."""
        return cls((d,))

    @classmethod
    def abelian(cls, x: int) -> Algebra:
        """ℓ∞(X) with |X| = x."""
        return cls((1,) * x)

    @classmethod
    def trivial(cls) -> Algebra:
        """The scalars ℂ."""
        return cls((1,))

    @property
    def dim(self) -> int:
        return sum(n * n for n in self.blocks)

    @property
    def total_size(self) -> int:
        """N = Σ n_i, the size of the faithful trace normalisation."""
        return sum(self.blocks)

    @property
    def is_abelian(self) -> bool:
        return all(n == 1 for n in self.blocks)

    def identity(self) -> AlgebraElement:
        return AlgebraElement(self, tuple(np.eye(n, dtype=complex) for n in self.blocks))

    def zeros(self) -> AlgebraElement:
        return AlgebraElement(self, tuple(np.zeros((n, n), dtype=complex) for n in self.blocks))

    def __str__(self) -> str:
        return f"Algebra{list(self.blocks)}"


def _check_blocks(algebra: Algebra, blocks: Sequence, what: str) -> tuple[np.ndarray, ...]:
    mats = tuple(as_matrix(b) for b in blocks)
    if len(mats) != len(algebra.blocks) or any(m.shape != (n, n) for m, n in zip(mats, algebra.blocks)):
        abort(
            InputError,
            ReasonCodes.DIMENSION_MISMATCH,
            f"{what} blocks {[m.shape for m in mats]} do not match {algebra}.",
        )
    return mats


def require_same_algebra(a: Algebra, b: Algebra, what: str = "operands") -> None:
    if a != b:
        abort(InputError, ReasonCodes.ALGEBRA_MISMATCH, f"Algebra mismatch between {what}: {a} vs {b}.")


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    algebra: Algebra
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", _check_blocks(self.algebra, self.blocks, "Element"))

    def __add__(self, other: AlgebraElement) -> AlgebraElement:
        require_same_algebra(self.algebra, other.algebra)
        return AlgebraElement(self.algebra, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __sub__(self, other: AlgebraElement) -> AlgebraElement:
        return self + other * -1.0

    def __mul__(self, c: complex) -> AlgebraElement:
        return AlgebraElement(self.algebra, tuple(c * b for b in self.blocks))

    __rmul__ = __mul__

    def is_selfadjoint(self, tol: float = 1e-12) -> bool:
        return all(np.max(np.abs(b - b.conj().T), initial=0.0) <= tol * max(1.0, np.max(np.abs(b), initial=0.0))
                   for b in self.blocks)

    def min_eigenvalue(self) -> float:
        return min(min_eigenvalue(b) for b in self.blocks)

    def coordinates(self) -> np.ndarray:
        """Real coordinates of the selfadjoint part, length ``algebra.dim``."""
        return np.concatenate([hermitian_coordinates(hermitian(b)) for b in self.blocks])


@dataclass(frozen=True, eq=False)
class StateFunctional:
    """Predual element, paired with the algebra by ⟨a, A⟩ = Σ_i tr(a_i A_i)."""

    algebra: Algebra
    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", _check_blocks(self.algebra, self.blocks, "State"))

    def __add__(self, other: StateFunctional) -> StateFunctional:
        require_same_algebra(self.algebra, other.algebra)
        return StateFunctional(self.algebra, tuple(a + b for a, b in zip(self.blocks, other.blocks)))

    def __mul__(self, c: complex) -> StateFunctional:
        return StateFunctional(self.algebra, tuple(c * b for b in self.blocks))

    __rmul__ = __mul__

    @property
    def trace(self) -> float:
        return float(np.real(sum(np.trace(b) for b in self.blocks)))

    def min_eigenvalue(self) -> float:
        return min(min_eigenvalue(b) for b in self.blocks)

    def is_positive(self, tol: float | None = None) -> bool:
        tol = settings.psd_tol if tol is None else tol
        return self.min_eigenvalue() >= -tol

    def is_state(self, tol: float | None = None) -> bool:
        return self.is_positive(tol) and abs(self.trace - 1.0) <= 1e-10


def pair(s: StateFunctional, e: AlgebraElement) -> complex:
    """Canonical pairing Σ_i tr(s_i e_i); real when both are selfadjoint."""
    require_same_algebra(s.algebra, e.algebra, "state and element")
    return complex(sum(np.sum(a * b.T) for a, b in zip(s.blocks, e.blocks)))


def pair_real(s: StateFunctional, e: AlgebraElement) -> float:
    return float(np.real(pair(s, e)))


def tensor_algebra(a1: Algebra, a2: Algebra) -> Algebra:
    return Algebra(tuple(n * m for n in a1.blocks for m in a2.blocks))


def is_abelian(a: Algebra) -> bool:
    return a.is_abelian


def block_state(algebra: Algebra, index: int, matrix) -> StateFunctional:
    """Functional supported on a single block."""
    blocks = [np.zeros((n, n), dtype=complex) for n in algebra.blocks]
    blocks[index] = as_matrix(matrix)
    return StateFunctional(algebra, tuple(blocks))


def block_element(algebra: Algebra, index: int, matrix) -> AlgebraElement:
    blocks = [np.zeros((n, n), dtype=complex) for n in algebra.blocks]
    blocks[index] = as_matrix(matrix)
    return AlgebraElement(algebra, tuple(blocks))


def trace_state(a: Algebra) -> StateFunctional:
    """Faithful state with blocks I_{n_i}/N; its minimum on unit-norm positives is 1/N."""
    n_total = a.total_size
    return StateFunctional(a, tuple(np.eye(n, dtype=complex) / n_total for n in a.blocks))


def vector_state(algebra: Algebra, vector, index: int = 0) -> StateFunctional:
    vec = np.asarray(vector, dtype=complex)
    return block_state(algebra, index, projector(vec / np.linalg.norm(vec)))


@dataclass(frozen=True, eq=False)
class Measurement:
    """Finite-outcome measurement: one PSD effect per label, summing to 1_A."""

    algebra: Algebra
    outcomes: tuple[str, ...]
    effects: tuple[AlgebraElement, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        outcomes = tuple(str(x) for x in self.outcomes)
        effects = tuple(self.effects)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "effects", effects)
        if len(outcomes) != len(effects) or len(set(outcomes)) != len(outcomes):
            abort(
                InputError,
                ReasonCodes.LABEL_MISMATCH,
                f"Measurement needs one effect per distinct outcome ({len(outcomes)} labels, {len(effects)} effects).",
            )
        violations = []
        for x, e in zip(outcomes, effects):
            require_same_algebra(self.algebra, e.algebra, f"measurement and effect {x!r}")
            if e.min_eigenvalue() < -settings.psd_tol:
                violations.append(FieldViolation(f"effects.{x}", f"Not PSD (min eigenvalue {e.min_eigenvalue():.3e})"))
        total = self.algebra.zeros()
        for e in effects:
            total = total + e
        residual = max(float(np.max(np.abs(b - np.eye(b.shape[0])))) for b in total.blocks)
        if residual > 1e-10:
            violations.append(FieldViolation("effects", f"Effects sum to identity only within {residual:.3e}"))
        if violations:
            abort(InputError, ReasonCodes.NOT_A_MEASUREMENT, "Effects do not form a measurement.", fields=violations)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(outcomes)})

    def effect(self, label: str) -> AlgebraElement:
        try:
            return self.effects[self._index[str(label)]]
        except KeyError:
            abort(InputError, ReasonCodes.LABEL_MISMATCH, f"Unknown outcome {label!r}.")

    def distribution(self, s: StateFunctional) -> np.ndarray:
        return np.array([pair_real(s, e) for e in self.effects])


@dataclass(frozen=True, eq=False)
class StateEnsemble:
    """Labelled subnormalised positive functionals E(z) = p(z) a_z summing to a state."""

    algebra: Algebra
    labels: tuple[str, ...]
    states: tuple[StateFunctional, ...]

    def __post_init__(self):
        labels = tuple(str(z) for z in self.labels)
        states = tuple(self.states)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "states", states)
        if len(labels) != len(states) or len(set(labels)) != len(labels):
            abort(InputError, ReasonCodes.LABEL_MISMATCH, "Ensemble needs one functional per distinct label.")
        violations = []
        for z, s in zip(labels, states):
            require_same_algebra(self.algebra, s.algebra, f"ensemble and E({z!r})")
            if not s.is_positive():
                violations.append(FieldViolation(f"states.{z}", "Not a positive functional"))
        if not self.marginal().is_state():
            violations.append(FieldViolation("states", "Σ_z E(z) is not a state"))
        if violations:
            abort(InputError, ReasonCodes.NOT_A_STATE, "Functionals do not form a state ensemble.", fields=violations)

    def __getitem__(self, label: str) -> StateFunctional:
        return self.states[self.labels.index(str(label))]

    def probability(self, label: str) -> float:
        return self[label].trace

    def marginal(self) -> StateFunctional:
        total = StateFunctional(self.algebra, tuple(np.zeros((n, n), dtype=complex) for n in self.algebra.blocks))
        for s in self.states:
            total = total + s
        return total


def delta_measurement(x: int, prefix: str = "") -> Measurement:
    """Kronecker-delta measurement on ℓ∞(X)."""
    algebra = Algebra.abelian(x)
    return Measurement(
        algebra,
        tuple(f"{prefix}{k}" for k in range(x)),
        tuple(block_element(algebra, k, [[1.0]]) for k in range(x)),
    )


def basis_measurement(vectors, prefix: str = "") -> Measurement:
    """Projective measurement on L(C^d) onto the columns of ``vectors``."""
    vecs = np.asarray(vectors, dtype=complex)
    d = vecs.shape[0]
    algebra = Algebra.full(d)
    return Measurement(
        algebra,
        tuple(f"{prefix}{k}" for k in range(vecs.shape[1])),
        tuple(AlgebraElement(algebra, (projector(vecs[:, k]),)) for k in range(vecs.shape[1])),
    )


def is_informationally_complete(m: Measurement) -> bool:
    """True iff the effects span the selfadjoint part of the algebra."""
    gram = np.array([e.coordinates() for e in m.effects])
    singular = np.linalg.svd(gram, compute_uv=False)
    if singular.size == 0 or singular[0] <= 0:
        return False
    rank = int(np.sum(singular > IC_RANK_RTOL * singular[0]))
    return rank == m.algebra.dim


def _frame_vectors(n: int) -> list[np.ndarray]:
    eye = np.eye(n, dtype=complex)
    vectors = [eye[k] for k in range(n)]
    for k in range(n):
        for l in range(k + 1, n):
            vectors.append((eye[k] + eye[l]) / np.sqrt(2))
            vectors.append((eye[k] + 1j * eye[l]) / np.sqrt(2))
    return vectors


def _frame_effects(vectors: list[np.ndarray]) -> list[np.ndarray]:
    frame = sum(projector(v) for v in vectors)
    root = psd_power(frame, -0.5)
    return [hermitian(root @ projector(v) @ root) for v in vectors]


def ic_povm(a: Algebra, prefix: str = "", seed: int | None = None) -> Measurement:
    """
    Informationally complete measurement with exactly dim(a) outcomes.

    Each block M_n contributes the n² frame vectors e_k, (e_k+e_l)/√2 and
    (e_k+i e_l)/√2, normalised by T^{-1/2} with T the frame operator.
    """
    rng = np.random.default_rng(settings.seed if seed is None else seed)
    per_block = [_frame_vectors(n) for n in a.blocks]

    for attempt in range(IC_RETRIES + 1):
        effects = []
        for index, vectors in enumerate(per_block):
            for mat in _frame_effects(vectors):
                effects.append(block_element(a, index, mat))
        m = Measurement(a, tuple(f"{prefix}{k}" for k in range(len(effects))), tuple(effects))
        if is_informationally_complete(m):
            return m
        logger.warning(f"ic_povm: frame for {a} rank deficient, resampling (attempt {attempt + 1})")
        per_block = [
            [v + 1e-3 * (rng.normal(size=v.shape) + 1j * rng.normal(size=v.shape)) for v in vectors]
            for vectors in per_block
        ]
    abort(InputError, ReasonCodes.NOT_INFORMATIONALLY_COMPLETE, f"Could not build an IC measurement on {a}.")

