"""Complex dense linear-algebra kernels shared by the channel, protocol and
estimator modules.

All routines operate on 2-D ``numpy`` arrays of dtype ``complex128`` and are
pure functions of their inputs. Randomness always comes from an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DimensionError",
    "ParameterError",
    "EigenPair",
    "as_cmatrix",
    "dft_matrix",
    "hermitian_eig_desc",
    "pseudo_inverse",
    "kron",
    "complex_gaussian",
    "numerical_rank",
]

# eigenvalues at or below ZERO_EIG_REL * lambda_max count as numerically zero
ZERO_EIG_REL = 1e-10


class DimensionError(ValueError):
    """Raised when matrix shapes are inconsistent with an operation."""


class ParameterError(ValueError):
    """Raised when a scalar parameter is outside its admissible range."""


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalues in non-increasing order and the matching unit eigenvectors
    stored column-wise."""

    values: np.ndarray
    vectors: np.ndarray


def as_cmatrix(a, name="matrix"):
    """Coerce ``a`` to a finite 2-D complex128 array."""
    arr = np.asarray(a, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} contains NaN or Inf entries")
    return arr


def dft_matrix(rows: int, cols: int | None = None) -> np.ndarray:
    """First ``cols`` columns of the unitary ``rows x rows`` DFT matrix.

    Entry ``(m, n)`` is ``exp(-2j*pi*m*n/rows) / sqrt(rows)``.
    """
    if cols is None:
        cols = rows
    if rows < 1 or cols < 1:
        raise DimensionError(f"dft_matrix needs positive sizes, got ({rows}, {cols})")
    if cols > rows:
        raise DimensionError(f"dft_matrix: cols={cols} exceeds rows={rows}")
    m = np.arange(rows)[:, None]
    n = np.arange(cols)[None, :]
    return np.exp(-2j * np.pi * m * n / rows) / np.sqrt(rows)


def hermitian_eig_desc(a) -> EigenPair:
    """Eigendecomposition of a Hermitian matrix with eigenvalues sorted in
    descending order.

    The input is symmetrized as ``(A + A^H)/2`` before factoring. Ties keep the
    ascending-order position reversed via a stable sort, so repeated runs give
    identical output.
    """
    a = as_cmatrix(a, "A")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"hermitian_eig_desc needs a square matrix, got {a.shape}")
    a = 0.5 * (a + a.conj().T)
    values, vectors = np.linalg.eigh(a)
    order = np.argsort(-values, kind="stable")
    return EigenPair(values=values[order], vectors=vectors[:, order])


def pseudo_inverse(a, rel_tol: float = 1e-12) -> np.ndarray:
    """Moore-Penrose inverse via the SVD.

    Singular values below ``rel_tol * sigma_max`` are treated as zero.
    """
    if rel_tol <= 0:
        raise ParameterError("rel_tol must be positive")
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"pseudo_inverse needs a non-empty 2-D matrix, got shape {a.shape}")
    a = as_cmatrix(a, "A")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((a.shape[1], a.shape[0]), dtype=np.complex128)
    keep = s > rel_tol * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (vh.conj().T * s_inv) @ u.conj().T


def kron(a, b) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` equals ``A[i, j] * B``."""
    return np.kron(as_cmatrix(a, "A"), as_cmatrix(b, "B"))


def complex_gaussian(rng: np.random.Generator, rows: int, cols: int, variance: float = 1.0) -> np.ndarray:
    """I.i.d. circularly-symmetric complex Gaussian matrix.

    Real and imaginary parts are independent ``N(0, variance/2)``.
    """
    if variance < 0:
        raise ParameterError(f"variance must be nonnegative, got {variance}")
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * (re + 1j * im)


def numerical_rank(a, rel_tol: float = 1e-8) -> int:
    """Number of singular values above ``rel_tol * sigma_max``."""
    s = np.linalg.svd(as_cmatrix(a), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))
