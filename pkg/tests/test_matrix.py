"""Tests for the dense matrix kernel."""
import numpy as np
import pytest

from kernel.matrix import (
    as_matrix,
    flip,
    herm_eig,
    hermitian,
    hermitian_basis,
    hermitian_coordinates,
    is_projection,
    kron,
    max_entangled,
    min_eigenvalue,
    partial_trace,
    permute_factors,
    psd_power,
    trace_norm,
)
from utils.errors import InputError, ReasonCodes


def _random_hermitian(rng, n):
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (g + g.conj().T) / 2


def test_as_matrix_rejects_vectors():
    """A 1-D array is not a matrix."""
    with pytest.raises(InputError) as exc_info:
        as_matrix([1.0, 2.0])

    assert exc_info.value.reason == ReasonCodes.DIMENSION_MISMATCH


def test_as_matrix_rejects_nan():
    """Non-finite entries are refused."""
    with pytest.raises(InputError) as exc_info:
        as_matrix([[1.0, np.nan], [0.0, 1.0]])

    assert exc_info.value.reason == ReasonCodes.NUMERIC_FAILURE


def test_strict_hermitian_rejects_asymmetric():
    """Strict mode refuses a matrix that is visibly non-Hermitian."""
    with pytest.raises(InputError):
        hermitian([[0.0, 1.0], [0.0, 0.0]], strict=True)


def test_hermitian_symmetrizes():
    """Non-strict mode returns the Hermitian part."""
    h = hermitian([[0.0, 2.0], [0.0, 0.0]])

    assert np.allclose(h, [[0.0, 1.0], [1.0, 0.0]])


def test_partial_trace_of_product(rng):
    """Tracing out one factor of a ⊗ b leaves tr(b)·a."""
    a = _random_hermitian(rng, 2)
    b = _random_hermitian(rng, 3)

    kept = partial_trace(kron(a, b), [2, 3], keep=[0])

    assert np.allclose(kept, np.trace(b) * a)


def test_partial_trace_middle_factor(rng):
    """Keeping the outer factors of a ⊗ b ⊗ c gives tr(b)·a ⊗ c."""
    a, b, c = (_random_hermitian(rng, n) for n in (2, 3, 2))

    kept = partial_trace(np.kron(np.kron(a, b), c), [2, 3, 2], keep=[0, 2])

    assert np.allclose(kept, np.trace(b) * np.kron(a, c))


def test_partial_trace_shape_mismatch():
    """Factor dimensions must multiply to the matrix size."""
    with pytest.raises(InputError):
        partial_trace(np.eye(4), [2, 3], keep=[0])


def test_permute_factors_swaps_kron(rng):
    """Reordering factors [1, 0] turns a ⊗ b into b ⊗ a."""
    a = _random_hermitian(rng, 2)
    b = _random_hermitian(rng, 3)

    swapped = permute_factors(np.kron(a, b), [2, 3], [1, 0])

    assert np.allclose(swapped, np.kron(b, a))


def test_flip_swaps_vectors(rng):
    """F(u ⊗ v) = v ⊗ u."""
    u = rng.normal(size=3) + 1j * rng.normal(size=3)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)

    assert np.allclose(flip(3) @ np.kron(u, v), np.kron(v, u))


def test_herm_eig_descending(rng):
    """Eigenvalues come back largest first with matching eigenvectors."""
    h = _random_hermitian(rng, 4)

    values, vectors = herm_eig(h)

    assert np.all(np.diff(values) <= 0)
    assert np.allclose(vectors @ np.diag(values) @ vectors.conj().T, h)


def test_min_eigenvalue():
    """Smallest eigenvalue of a diagonal matrix."""
    assert min_eigenvalue(np.diag([3.0, -0.5, 1.0])) == pytest.approx(-0.5)


def test_trace_norm():
    """Trace norm sums absolute eigenvalues of a Hermitian matrix."""
    assert trace_norm(np.diag([1.0, -2.0])) == pytest.approx(3.0)


def test_psd_power_inverse_root(rng):
    """T^{-1/2} T T^{-1/2} = I for a positive definite T."""
    g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    t = g @ g.conj().T + np.eye(3)

    root = psd_power(t, -0.5)

    assert np.allclose(root @ t @ root, np.eye(3))


def test_hermitian_basis_orthonormal():
    """The basis is orthonormal under Re tr(G_r G_s)."""
    basis = hermitian_basis(3)

    gram = np.real(np.einsum("rab,sba->rs", basis, basis))

    assert basis.shape == (9, 3, 3)
    assert np.allclose(gram, np.eye(9))


def test_hermitian_coordinates_reconstruct(rng):
    """Σ_r c_r G_r recovers the matrix."""
    h = _random_hermitian(rng, 3)

    coords = hermitian_coordinates(h)

    assert np.allclose(np.einsum("r,rab->ab", coords, hermitian_basis(3)), h)


def test_max_entangled_normalized():
    """The maximally entangled vector has unit norm."""
    assert np.linalg.norm(max_entangled(4)) == pytest.approx(1.0)


def test_is_projection():
    """Rank-one projectors pass, scaled ones do not."""
    p = np.array([[1.0, 0.0], [0.0, 0.0]])

    assert is_projection(p)
    assert not is_projection(0.5 * p)
