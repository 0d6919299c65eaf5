"""Dense linear-algebra substrate shared by the estimators.

Everything operates on plain float64 ``numpy`` arrays.  Matrices are 2-d
row-major arrays, vectors 1-d arrays; desk-scale dimensions only, so all
routines are dense and direct.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_matrix", "as_vector", "gram", "pseudo_inverse", "cholesky"]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2-d array, raising ValueError otherwise."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float64 1-d array, raising ValueError otherwise."""
    v = np.asarray(a, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def gram(x: np.ndarray) -> np.ndarray:
    """Gram matrix X'X, symmetrized to suppress rounding asymmetry."""
    x = as_matrix(x, "design")
    g = x.T @ x
    return (g + g.T) / 2.0


def pseudo_inverse(m: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a symmetric PSD matrix.

    Uses the symmetric eigendecomposition: eigenvalues above
    ``rtol * max_eigenvalue`` are inverted, the rest zeroed.  Only Gram
    matrices are ever inverted here, so symmetry is a hard precondition.

    Parameters
    ----------
    m : (d, d) symmetric positive semi-definite array.
    rtol : relative eigenvalue cutoff; defaults to ``1e-10 * d``.
    """
    m = as_matrix(m, "matrix")
    d = m.shape[0]
    if m.shape[1] != d:
        raise ValueError(f"pseudo_inverse needs a square matrix, got {m.shape}")
    if not np.allclose(m, m.T, rtol=0.0, atol=1e-8 * (1.0 + np.abs(m).max())):
        raise ValueError("pseudo_inverse requires a symmetric matrix")
    if rtol is None:
        rtol = 1e-10 * d
    w, q = np.linalg.eigh((m + m.T) / 2.0)
    cutoff = rtol * max(w.max(initial=0.0), 0.0)
    inv_w = np.where(w > cutoff, 1.0, 0.0) / np.where(w > cutoff, w, 1.0)
    out = (q * inv_w) @ q.T
    return (out + out.T) / 2.0


def cholesky(s: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor L with LL' = S.

    Raises ``np.linalg.LinAlgError`` when S is not positive definite.
    """
    s = as_matrix(s, "matrix")
    return np.linalg.cholesky(s)
