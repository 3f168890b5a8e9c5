"""Dense linear-algebra primitives used throughout the package.

Everything operates on plain float64 ``numpy`` arrays and returns new
arrays; inputs are never mutated.  Eigenvalue work is delegated to LAPACK
(Hessenberg-QR for general spectra, tridiagonal QR for symmetric ones) and
the matrix exponential to SciPy's scaling-and-squaring Pade implementation.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionError

#: absolute tolerance for treating a matrix as symmetric
SYMMETRY_TOL = 1e-8


def as_matrix(value, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array and require finite entries."""
    m = np.asarray(value, dtype=float)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_square(value, name: str = "matrix") -> np.ndarray:
    m = as_matrix(value, name)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def kron(a, b) -> np.ndarray:
    """Kronecker product, shape (ra*rb, ca*cb)."""
    return np.kron(as_matrix(a, "a"), as_matrix(b, "b"))


def block_diag(blocks) -> np.ndarray:
    """Assemble square blocks along the diagonal, zeros elsewhere."""
    mats = [as_square(b, f"block {k}") for k, b in enumerate(blocks)]
    if not mats:
        return np.zeros((0, 0))
    return scipy.linalg.block_diag(*mats)


def symmetrize(m) -> np.ndarray:
    m = as_square(m)
    return (m + m.T) / 2.0


def spectral_radius(m) -> float:
    """Largest eigenvalue modulus over the (possibly complex) spectrum.

    Raises ``numpy.linalg.LinAlgError`` if the QR iteration fails to
    converge.
    """
    m = as_square(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def min_eig_symmetric(m, tol: float = SYMMETRY_TOL) -> float:
    """Smallest eigenvalue of ``(M + M') / 2``.

    The input must be symmetric within ``tol``; it is explicitly
    symmetrized first so solver output that is symmetric only up to
    roundoff is handled.
    """
    m = as_square(m)
    if m.size == 0:
        return np.inf
    if float(np.max(np.abs(m - m.T))) > tol:
        raise ValueError(f"matrix is not symmetric within {tol:g}")
    return float(np.linalg.eigvalsh((m + m.T) / 2.0)[0])


def expm(m) -> np.ndarray:
    """Matrix exponential (scaling-and-squaring with Pade approximants)."""
    return scipy.linalg.expm(as_square(m))
