"""Dense complex matrix primitives shared by every other package."""
from __future__ import annotations

import logging
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from utils.errors import InputError, ReasonCodes, SolverError, abort

logger = logging.getLogger(__name__)

ComplexMatrix = np.ndarray
HermitianMatrix = np.ndarray

HERMITIAN_RTOL = 1e-12
ABS_FLOOR = 1e-14


def as_matrix(m) -> ComplexMatrix:
    """Return ``m`` as a finite 2-D complex array."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2:
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Expected a matrix, got shape {arr.shape}.")
    if not np.all(np.isfinite(arr)):
        abort(InputError, ReasonCodes.NUMERIC_FAILURE, "Matrix has non-finite entries.")
    return arr


def scale_of(m: np.ndarray) -> float:
    """Largest absolute entry, floored, used for relative tolerances."""
    return max(float(np.max(np.abs(m))) if m.size else 0.0, ABS_FLOOR)


def hermitian(m, *, strict: bool = False) -> HermitianMatrix:
    """
    Symmetrize ``m`` into a Hermitian matrix.

    With ``strict`` the input must already be Hermitian within 1e-12 of its
    largest entry.
    """
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Hermitian matrix must be square, got {arr.shape}.")
    if strict:
        deviation = float(np.max(np.abs(arr - arr.conj().T))) if arr.size else 0.0
        if deviation > HERMITIAN_RTOL * scale_of(arr):
            abort(
                InputError,
                ReasonCodes.NUMERIC_FAILURE,
                f"Matrix is not Hermitian (deviation {deviation:.3e}).",
            )
    return (arr + arr.conj().T) / 2


def kron(a, b) -> ComplexMatrix:
    return np.kron(as_matrix(a), as_matrix(b))


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> ComplexMatrix:
    """Trace out every tensor factor of ``m`` whose index is not in ``keep``."""
    arr = as_matrix(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if arr.shape != (total, total):
        abort(
            InputError,
            ReasonCodes.DIMENSION_MISMATCH,
            f"Matrix of shape {arr.shape} does not match factor dims {dims}.",
        )
    keep = sorted(set(keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"Kept factors {keep} out of range for {len(dims)} factors.")

    t = arr.reshape(dims + dims)
    n = len(dims)
    for axis in sorted(set(range(len(dims))) - set(keep), reverse=True):
        t = np.trace(t, axis1=axis, axis2=axis + n)
        n -= 1
    kept = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kept, kept)


def permute_factors(m, dims: Sequence[int], order: Sequence[int]) -> ComplexMatrix:
    """Reorder tensor factors: factor ``order[k]`` of the input becomes factor ``k``."""
    arr = as_matrix(m)
    dims = [int(d) for d in dims]
    n = len(dims)
    t = arr.reshape(dims + dims)
    t = t.transpose(list(order) + [n + k for k in order])
    total = int(np.prod(dims))
    return t.reshape(total, total)


def herm_eig(h) -> tuple[np.ndarray, ComplexMatrix]:
    """Eigenvalues in descending order and the matching unitary of eigenvectors."""
    arr = hermitian(h)
    try:
        values, vectors = np.linalg.eigh(arr)
    except np.linalg.LinAlgError as e:
        logger.error(f"herm_eig failed on a {arr.shape} matrix: {e}")
        abort(SolverError, ReasonCodes.NUMERIC_FAILURE, f"Hermitian eigensolver did not converge: {e}")
    return values[::-1].copy(), vectors[:, ::-1].copy()


def min_eigenvalue(h) -> float:
    arr = hermitian(h)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(arr)[0])


def trace_norm(m) -> float:
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        abort(InputError, ReasonCodes.DIMENSION_MISMATCH, f"trace_norm needs a square matrix, got {arr.shape}.")
    return float(np.linalg.svd(arr, compute_uv=False).sum())


def psd_power(h, power: float, floor: float = 0.0) -> HermitianMatrix:
    """Fractional power of a PSD matrix, clipping eigenvalues below ``floor``."""
    values, vectors = np.linalg.eigh(hermitian(h))
    values = np.clip(values, floor, None)
    with np.errstate(divide="ignore"):
        scaled = np.where(values > 0, values ** power, 0.0)
    return hermitian((vectors * scaled) @ vectors.conj().T)


def is_projection(p, tol: float = 1e-10) -> bool:
    arr = as_matrix(p)
    return float(np.max(np.abs(arr @ arr - arr))) <= tol * max(1.0, scale_of(arr))


@lru_cache(maxsize=64)
def _hermitian_basis(n: int) -> np.ndarray:
    basis = np.zeros((n * n, n, n), dtype=complex)
    r = 0
    for k in range(n):
        basis[r, k, k] = 1.0
        r += 1
    for k in range(n):
        for l in range(k + 1, n):
            basis[r, k, l] = basis[r, l, k] = 1 / np.sqrt(2)
            r += 1
            basis[r, k, l] = 1j / np.sqrt(2)
            basis[r, l, k] = -1j / np.sqrt(2)
            r += 1
    basis.setflags(write=False)
    return basis


def hermitian_basis(n: int) -> np.ndarray:
    """
    Orthonormal basis of the real space of n×n Hermitian matrices.

    Ordered as diagonal units, then for each k<l the symmetric and the
    antisymmetric (imaginary) combination. Shape (n², n, n).
    """
    return _hermitian_basis(int(n))


def hermitian_coordinates(h) -> np.ndarray:
    """Real coordinates of a Hermitian matrix in ``hermitian_basis``."""
    arr = as_matrix(h)
    basis = hermitian_basis(arr.shape[0])
    return np.real(np.einsum("rab,ba->r", basis, arr))


def real_vector(h) -> np.ndarray:
    """Real vector whose dot products reproduce Re tr(A X) for Hermitian A, X."""
    arr = as_matrix(h)
    return np.concatenate([arr.real.ravel(), arr.imag.ravel()])


def max_entangled(d: int, basis: np.ndarray | None = None) -> np.ndarray:
    """Normalized vector d^{-1/2} Σ_i e_i ⊗ e_i for the columns of ``basis``."""
    vectors = np.eye(d, dtype=complex) if basis is None else np.asarray(basis, dtype=complex)
    return sum(np.kron(vectors[:, i], vectors[:, i]) for i in range(d)) / np.sqrt(d)


def flip(d: int) -> ComplexMatrix:
    """Swap operator F(u ⊗ v) = v ⊗ u on C^d ⊗ C^d."""
    f = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            f[j * d + i, i * d + j] = 1.0
    return f


def projector(v) -> HermitianMatrix:
    vec = np.asarray(v, dtype=complex).ravel()
    return np.outer(vec, vec.conj())
