"""
Channels between block algebras stored in Choi form.

Block (i, j) holds C_ij = Σ_kl Ψ_ij(E_kl) ⊗ E_kl, where Ψ = Φ* is the
Heisenberg adjoint restricted to input block i and output block j. The input
factor comes first. Complete positivity is positivity of every block, and
unitality reads Σ_j Tr_out C_ij = I.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from kernel.matrix import (
    as_matrix,
    hermitian,
    is_projection,
    max_entangled,
    min_eigenvalue,
    partial_trace,
    permute_factors,
    projector,
    psd_power,
)
from models.algebra import (
    Algebra,
    AlgebraElement,
    Measurement,
    StateFunctional,
    delta_measurement,
    require_same_algebra,
    tensor_algebra,
    trace_state,
)
from utils.config import settings
from utils.errors import FieldViolation, InputError, ReasonCodes, abort

logger = logging.getLogger(__name__)

BlockKey = tuple[int, int]


@dataclass(frozen=True, eq=False)
class Channel:
    in_alg: Algebra
    out_alg: Algebra
    choi: Mapping[BlockKey, np.ndarray]

    def __post_init__(self):
        blocks: dict[BlockKey, np.ndarray] = {}
        extra = set(self.choi) - {(i, j) for i in range(len(self.in_alg.blocks)) for j in range(len(self.out_alg.blocks))}
        if extra:
            abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Choi keys {sorted(extra)} are outside the block grid.")
        for i, n in enumerate(self.in_alg.blocks):
            for j, m in enumerate(self.out_alg.blocks):
                raw = self.choi.get((i, j))
                if raw is None:
                    blocks[(i, j)] = np.zeros((n * m, n * m), dtype=complex)
                    continue
                mat = as_matrix(raw)
                if mat.shape != (n * m, n * m):
                    abort(
                        InputError,
                        ReasonCodes.DIMENSION_MISMATCH,
                        f"Choi block ({i},{j}) has shape {mat.shape}, expected {(n * m, n * m)}.",
                    )
                blocks[(i, j)] = hermitian(mat)
        object.__setattr__(self, "choi", blocks)

    def block(self, i: int, j: int) -> np.ndarray:
        """Choi block (i, j) reshaped to the 4-index tensor [p, r, q, s]."""
        n, m = self.in_alg.blocks[i], self.out_alg.blocks[j]
        return self.choi[(i, j)].reshape(n, m, n, m)

    def keys(self):
        return self.choi.keys()

    def __str__(self) -> str:
        return f"Channel({self.in_alg} -> {self.out_alg})"


@dataclass(frozen=True)
class ChannelReport:
    psd_violation: float
    unitality_residual: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.psd_violation <= self.tol and self.unitality_residual <= self.tol

    def __bool__(self) -> bool:
        return self.ok


def unitality_operator(c: Channel, i: int) -> np.ndarray:
    """Σ_j Tr_out C_ij, which equals I_{n_i} for a channel."""
    n = c.in_alg.blocks[i]
    total = np.zeros((n, n), dtype=complex)
    for j, m in enumerate(c.out_alg.blocks):
        total += partial_trace(c.choi[(i, j)], [n, m], keep=[0])
    return total


def is_channel(c: Channel, tol: float | None = None) -> ChannelReport:
    """Report the worst PSD violation and unitality residual; truthy iff both are within ``tol``."""
    tol = settings.channel_tol if tol is None else tol
    worst_psd = max(max(0.0, -min_eigenvalue(b)) for b in c.choi.values())
    worst_unit = max(
        float(np.max(np.abs(unitality_operator(c, i) - np.eye(n))))
        for i, n in enumerate(c.in_alg.blocks)
    )
    report = ChannelReport(worst_psd, worst_unit, tol)
    if not report.ok:
        logger.debug(f"is_channel: {c} psd_violation={worst_psd:.3e} unitality={worst_unit:.3e}")
    return report


def apply(c: Channel, a: StateFunctional) -> StateFunctional:
    """Schrödinger picture Φ(a), defined by ⟨Φ(a), B⟩ = ⟨a, Φ*(B)⟩."""
    require_same_algebra(c.in_alg, a.algebra, "channel input and state")
    out = []
    for j, m in enumerate(c.out_alg.blocks):
        total = np.zeros((m, m), dtype=complex)
        for i in range(len(c.in_alg.blocks)):
            total += np.einsum("prqs,qp->rs", c.block(i, j), a.blocks[i]).T
        out.append(total)
    return StateFunctional(c.out_alg, tuple(out))


def heisenberg(c: Channel, b: AlgebraElement) -> AlgebraElement:
    """Adjoint action Φ*(B) on an element of the output algebra."""
    require_same_algebra(c.out_alg, b.algebra, "channel output and element")
    out = []
    for i, n in enumerate(c.in_alg.blocks):
        total = np.zeros((n, n), dtype=complex)
        for j in range(len(c.out_alg.blocks)):
            total += np.einsum("prqs,rs->pq", c.block(i, j), b.blocks[j])
        out.append(total)
    return AlgebraElement(c.in_alg, tuple(out))


def compose(after: Channel, before: Channel) -> Channel:
    """Channel a ↦ after(before(a))."""
    require_same_algebra(before.out_alg, after.in_alg, "composed channels")
    choi = {}
    for i, n in enumerate(before.in_alg.blocks):
        for j, l in enumerate(after.out_alg.blocks):
            total = np.zeros((n, l, n, l), dtype=complex)
            for k in range(len(before.out_alg.blocks)):
                total += np.einsum("prqu,rsut->psqt", before.block(i, k), after.block(k, j))
            choi[(i, j)] = total.reshape(n * l, n * l)
    return Channel(before.in_alg, after.out_alg, choi)


def tensor_channels(c1: Channel, c2: Channel) -> Channel:
    in_alg = tensor_algebra(c1.in_alg, c2.in_alg)
    out_alg = tensor_algebra(c1.out_alg, c2.out_alg)
    k2_in, k2_out = len(c2.in_alg.blocks), len(c2.out_alg.blocks)
    choi = {}
    for (i1, j1), b1 in c1.choi.items():
        n1, m1 = c1.in_alg.blocks[i1], c1.out_alg.blocks[j1]
        for (i2, j2), b2 in c2.choi.items():
            n2, m2 = c2.in_alg.blocks[i2], c2.out_alg.blocks[j2]
            choi[(i1 * k2_in + i2, j1 * k2_out + j2)] = permute_factors(
                np.kron(b1, b2), [n1, m1, n2, m2], [0, 2, 1, 3]
            )
    return Channel(in_alg, out_alg, choi)


def margin(c: Channel, factor: int, out1: Algebra, out2: Algebra) -> Channel:
    """Restriction of a joint channel to output factor 1 or 2."""
    require_same_algebra(c.out_alg, tensor_algebra(out1, out2), "joint channel output and factor product")
    if factor not in (1, 2):
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Margin factor must be 1 or 2, got {factor}.")
    kept = out1 if factor == 1 else out2
    k2 = len(out2.blocks)
    choi = {}
    for i, n in enumerate(c.in_alg.blocks):
        for j1, m1 in enumerate(out1.blocks):
            for j2, m2 in enumerate(out2.blocks):
                key = (i, j1 if factor == 1 else j2)
                part = partial_trace(c.choi[(i, j1 * k2 + j2)], [n, m1, m2], keep=[0, factor])
                choi[key] = choi.get(key, 0) + part
    return Channel(c.in_alg, kept, choi)


def margins(c: Channel, out1: Algebra, out2: Algebra) -> tuple[Channel, Channel]:
    return margin(c, 1, out1, out2), margin(c, 2, out1, out2)


def from_measurement(m: Measurement) -> Channel:
    """Channel into ℓ∞(X) whose adjoint sends δ_x to the effect M(x)."""
    out_alg = Algebra.abelian(len(m.outcomes))
    choi = {}
    for x, effect in enumerate(m.effects):
        for i, block in enumerate(effect.blocks):
            choi[(i, x)] = block
    return Channel(m.algebra, out_alg, choi)


def measure_and_prepare(m: Measurement, prep: Sequence[StateFunctional]) -> Channel:
    if len(prep) != len(m.outcomes):
        abort(
            InputError,
            ReasonCodes.LABEL_MISMATCH,
            f"Need one prepared state per outcome ({len(m.outcomes)}), got {len(prep)}.",
        )
    out_alg = prep[0].algebra
    violations = []
    for x, s in zip(m.outcomes, prep):
        require_same_algebra(out_alg, s.algebra, "prepared states")
        if not s.is_state():
            violations.append(FieldViolation(f"prep.{x}", "Not a state"))
    if violations:
        abort(InputError, ReasonCodes.NOT_A_STATE, "Prepared functionals must be states.", fields=violations)

    choi = {}
    for i in range(len(m.algebra.blocks)):
        for j in range(len(out_alg.blocks)):
            choi[(i, j)] = sum(np.kron(e.blocks[i], s.blocks[j].T) for e, s in zip(m.effects, prep))
    return Channel(m.algebra, out_alg, choi)


def depolarizing(d: int, gamma: float) -> Channel:
    """a ↦ γ a + (1−γ) tr(a) I/d on L(C^d); CP only for γ in [−1/(d²−1), 1]."""
    omega = np.sqrt(d) * max_entangled(d)
    choi = gamma * projector(omega) + (1 - gamma) * np.eye(d * d) / d
    return Channel(Algebra.full(d), Algebra.full(d), {(0, 0): choi})


def identity_channel(a: Algebra) -> Channel:
    choi = {(i, i): n * projector(max_entangled(n)) for i, n in enumerate(a.blocks)}
    return Channel(a, a, choi)


def trivial_channel(a: Algebra) -> Channel:
    """The unique channel into ℂ."""
    return Channel(a, Algebra.trivial(), {(i, 0): np.eye(n) for i, n in enumerate(a.blocks)})


def broadcast_abelian(x: int) -> Channel:
    """Γ: ℓ¹(X) → ℓ¹(X×X), f ↦ f(x) δ_xy; both margins are the identity."""
    a = Algebra.abelian(x)
    return Channel(a, tensor_algebra(a, a), {(k, k * x + k): np.eye(1) for k in range(x)})


def projection_channel(p: AlgebraElement, prep: Sequence[StateFunctional]) -> Channel:
    """
    a ↦ ⟨a, P⟩ b₁ + ⟨a, 1 − P⟩ b₂ for a projection P.

    Two such channels with disjointly supported outputs are compatible only
    when their projections commute.
    """
    if not all(is_projection(b) for b in p.blocks):
        abort(InputError, ReasonCodes.NON_PROJECTIVE, "P is not a projection.")
    m = Measurement(p.algebra, ("1", "2"), (p, p.algebra.identity() - p))
    return measure_and_prepare(m, prep)


def conditional_preparation(p: Measurement, b0: StateFunctional | None = None) -> Channel:
    """
    Ψ: ℓ¹(X) → B, f ↦ Σ_x f(x) b_{0,x} with b_{0,x} = P(x) b₀ P(x) / ⟨b₀, P(x)⟩.

    ``p`` must be projective and ``b0`` faithful (defaults to the normalised
    trace), so that reading the output with ``p`` returns f.
    """
    b0 = trace_state(p.algebra) if b0 is None else b0
    require_same_algebra(p.algebra, b0.algebra, "projective measurement and b0")
    if b0.min_eigenvalue() <= settings.psd_tol or not b0.is_state():
        abort(InputError, ReasonCodes.NOT_A_STATE, "b0 must be a faithful state.")
    for x, e in zip(p.outcomes, p.effects):
        if not all(is_projection(b) for b in e.blocks) or all(np.allclose(b, 0) for b in e.blocks):
            abort(InputError, ReasonCodes.NON_PROJECTIVE, f"Effect {x!r} is not a nonzero projection.")
    prep = []
    for e in p.effects:
        blocks = tuple(q @ s @ q for q, s in zip(e.blocks, b0.blocks))
        weight = float(sum(np.real(np.trace(b)) for b in blocks))
        prep.append(StateFunctional(p.algebra, tuple(b / weight for b in blocks)))
    return measure_and_prepare(delta_measurement(len(p.outcomes)), prep)


def map_trace(c: Channel) -> float:
    """Trace of Φ as a linear map on the algebra (input and output must coincide)."""
    require_same_algebra(c.in_alg, c.out_alg, "map_trace input and output")
    total = 0.0
    for i, n in enumerate(c.in_alg.blocks):
        omega = np.sqrt(n) * max_entangled(n)
        total += float(np.real(omega.conj() @ c.choi[(i, i)] @ omega))
    return total


def mix(t: float, c1: Channel, c2: Channel) -> Channel:
    """Convex combination t·c1 + (1−t)·c2."""
    require_same_algebra(c1.in_alg, c2.in_alg, "mixed channel inputs")
    require_same_algebra(c1.out_alg, c2.out_alg, "mixed channel outputs")
    return Channel(c1.in_alg, c1.out_alg, {k: t * c1.choi[k] + (1 - t) * c2.choi[k] for k in c1.choi})


def choi_pairing(c: Channel, dual: Mapping[BlockKey, np.ndarray]) -> float:
    """Σ_ij Re tr(C_ij K_ij) for a Choi-space operator K."""
    return float(sum(np.real(np.sum(c.choi[k] * np.asarray(v).T)) for k, v in dual.items()))


def normalize_unital(in_alg: Algebra, out_alg: Algebra, blocks: Mapping[BlockKey, np.ndarray]) -> Channel:
    """
    Congruence by T_i^{-1/2} ⊗ I with T_i = Σ_j Tr_out G_ij.

    Turns any family of PSD blocks with invertible T_i into a channel while
    keeping positivity.
    """
    raw = Channel(in_alg, out_alg, blocks)
    choi = {}
    for i, n in enumerate(in_alg.blocks):
        root = psd_power(unitality_operator(raw, i), -0.5)
        for j, m in enumerate(out_alg.blocks):
            left = np.kron(root, np.eye(m))
            choi[(i, j)] = left @ raw.choi[(i, j)] @ left
    return Channel(in_alg, out_alg, choi)


def random_channel(in_alg: Algebra, out_alg: Algebra, rng: np.random.Generator, rank: int | None = None) -> Channel:
    """Random channel from Ginibre Choi blocks normalised to unitality."""
    blocks = {}
    for i, n in enumerate(in_alg.blocks):
        for j, m in enumerate(out_alg.blocks):
            k = n * m if rank is None else rank
            g = rng.normal(size=(n * m, k)) + 1j * rng.normal(size=(n * m, k))
            blocks[(i, j)] = g @ g.conj().T
    return normalize_unital(in_alg, out_alg, blocks)


def random_joint_channel(in_alg: Algebra, out1: Algebra, out2: Algebra, rng: np.random.Generator) -> Channel:
    return random_channel(in_alg, tensor_algebra(out1, out2), rng)


def random_state(a: Algebra, rng: np.random.Generator) -> StateFunctional:
    blocks = []
    for n in a.blocks:
        g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        blocks.append(g @ g.conj().T)
    total = sum(float(np.real(np.trace(b))) for b in blocks)
    return StateFunctional(a, tuple(b / total for b in blocks))
