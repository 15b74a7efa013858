"""Concrete MUB and cloning witnesses, the channels they are evaluated on, and the cloning test operator."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import unitary_group

from kernel.matrix import flip, hermitian_basis, herm_eig, max_entangled, projector
from models.algebra import (
    Algebra,
    AlgebraElement,
    Measurement,
    basis_measurement,
    block_element,
    block_state,
    vector_state,
)
from models.channels import (
    Channel,
    compose,
    conditional_preparation,
    depolarizing,
    from_measurement,
    projection_channel,
)
from models.witness import WitnessForm
from services.compatibility import ScanResult, scan_boundary
from services.witnesses import lift_witness
from utils.errors import InputError, ReasonCodes, abort

logger = logging.getLogger(__name__)


def _require_dim(d: int) -> None:
    if d < 2:
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Dimension must be at least 2, got {d}.")


@dataclass(frozen=True, eq=False)
class MubPair:
    """Computational basis e and Fourier basis f as column matrices."""

    d: int
    e: np.ndarray
    f: np.ndarray

    def overlaps(self) -> np.ndarray:
        return np.abs(self.e.conj().T @ self.f) ** 2


def fourier_mub(d: int) -> MubPair:
    _require_dim(d)
    x = np.arange(d)
    f = np.exp(2j * np.pi * np.outer(x, x) / d) / np.sqrt(d)
    return MubPair(d, np.eye(d, dtype=complex), f)


def gamma_threshold(d: int) -> float:
    """Noise level below which the noisy MUB measurements become compatible."""
    _require_dim(d)
    root = np.sqrt(d)
    return float((root + 2) / (2 * (root + 1)))


def _delta(x_alg: Algebra, x: int) -> AlgebraElement:
    return block_element(x_alg, x, [[1.0]])


def xi_mm(d: int) -> WitnessForm:
    """Equally weighted MUB witness on pairs of d-outcome measurements."""
    mub = fourier_mub(d)
    a = Algebra.full(d)
    x_alg = Algebra.abelian(d)
    phi1 = tuple((block_state(a, 0, projector(mub.e[:, x]) / (2 * d)), _delta(x_alg, x)) for x in range(d))
    phi2 = tuple((block_state(a, 0, projector(mub.f[:, x]) / (2 * d)), _delta(x_alg, x)) for x in range(d))
    delta0 = np.sqrt(d) * (np.sqrt(d) + 1) / (2 * d)
    return WitnessForm(a, (x_alg, x_alg), delta0, phi1, phi2)


def _noisy_basis(vectors: np.ndarray, gamma: float, prefix: str) -> Measurement:
    d = vectors.shape[0]
    a = Algebra.full(d)
    effects = tuple(
        AlgebraElement(a, (gamma * projector(vectors[:, x]) + (1 - gamma) * np.eye(d) / d,))
        for x in range(d)
    )
    return Measurement(a, tuple(f"{prefix}{x}" for x in range(d)), effects)


def noisy_mub_measurements(d: int, gamma: float) -> tuple[Measurement, Measurement]:
    if not 0.0 <= gamma <= 1.0:
        abort(InputError, ReasonCodes.NOT_A_MEASUREMENT, f"Noise parameter must lie in [0, 1], got {gamma}.")
    mub = fourier_mub(d)
    return _noisy_basis(mub.e, gamma, "e"), _noisy_basis(mub.f, gamma, "f")


def measurement_channels(d: int, gamma: float) -> tuple[Channel, Channel]:
    m, n = noisy_mub_measurements(d, gamma)
    return from_measurement(m), from_measurement(n)


def scan_gamma(d: int, lo: float = 0.5, hi: float = 1.0, steps: int = 12) -> ScanResult:
    """Bisect γ for the compatibility boundary of the noisy MUB measurements."""
    return scan_boundary(lambda gamma: measurement_channels(d, gamma), lo, hi, steps)


def prepare_channel(m: Measurement, basis: np.ndarray) -> Channel:
    """Measure with m, then prepare the basis vector labelled by the outcome (Ψ∘M̂ for the readout onto basis)."""
    return compose(conditional_preparation(basis_measurement(basis)), from_measurement(m))


def projection_pair(d: int) -> tuple[Channel, Channel]:
    """
    Two-outcome channels built on the projections onto e₀ and f₀.

    Both prepare the disjointly supported states |e₀⟩⟨e₀| and |e₁⟩⟨e₁| on L(C^d);
    the projections do not commute, so the pair is incompatible.
    """
    mub = fourier_mub(d)
    out = Algebra.full(d)
    prep = (vector_state(out, mub.e[:, 0]), vector_state(out, mub.e[:, 1]))
    return tuple(
        projection_channel(AlgebraElement(out, (projector(basis[:, 0]),)), prep) for basis in (mub.e, mub.f)
    )


def xi_mc(d: int, h: np.ndarray | None = None) -> WitnessForm:
    """ξ_mm with its second slot lifted through the projective measurement onto h."""
    h = fourier_mub(d).f if h is None else np.asarray(h, dtype=complex)
    return lift_witness(xi_mm(d), basis_measurement(h), slot=2)


def xi_cc(d: int, g: np.ndarray | None = None, h: np.ndarray | None = None) -> WitnessForm:
    """Both slots of ξ_mm lifted, with the 1/(2d) factor dropped."""
    mub = fourier_mub(d)
    g = mub.e if g is None else np.asarray(g, dtype=complex)
    h = mub.f if h is None else np.asarray(h, dtype=complex)
    lifted = lift_witness(lift_witness(xi_mm(d), basis_measurement(g), slot=1), basis_measurement(h), slot=2)
    return lifted.scaled(2 * d)


def xi_cc_clone(d: int, basis: np.ndarray | None = None) -> WitnessForm:
    """
    Cloning witness d(d+1) − Tr[Θ] − Tr[Λ].

    The map trace is written as Σ_r ⟨Φ(G_r), G_r⟩ over an orthonormal Hermitian
    basis rotated by ``basis``; the value does not depend on that choice.
    """
    _require_dim(d)
    a = Algebra.full(d)
    u = np.eye(d, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    terms = tuple(
        (block_state(a, 0, u @ g @ u.conj().T), block_element(a, 0, u @ g @ u.conj().T))
        for g in hermitian_basis(d)
    )
    return WitnessForm(a, (a, a), d * (d + 1), terms, terms)


def cloning_margins(d: int) -> tuple[Channel, Channel]:
    """Both margins of the optimal symmetric 1→2 cloner."""
    _require_dim(d)
    gamma = gamma_threshold(d * d)
    return depolarizing(d, gamma), depolarizing(d, gamma)


def perturbed_cloning_pair(d: int, eps: float) -> tuple[Channel, Channel]:
    """(1+ε)Θ₀ − ε·tr(·)I/d on both sides; slightly better than optimal cloning for ε > 0."""
    gamma = (1 + eps) * gamma_threshold(d * d)
    return depolarizing(d, gamma), depolarizing(d, gamma)


def cloning_test_operator(d: int) -> tuple[np.ndarray, np.ndarray]:
    """E = (F⊗I)(I⊗|ω⟩⟨ω|)(F⊗I) + I⊗|ω⟩⟨ω| on (C^d)^{⊗3}, and its spectrum in descending order."""
    _require_dim(d)
    eye = np.eye(d)
    omega = projector(max_entangled(d))
    swap = np.kron(flip(d), eye)
    right = np.kron(eye, omega)
    e = swap @ right @ swap + right
    spectrum, _ = herm_eig(e)
    return e, spectrum


def random_basis(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random orthonormal basis as the columns of a unitary."""
    return np.asarray(unitary_group.rvs(d, random_state=rng), dtype=complex).reshape(d, d)
