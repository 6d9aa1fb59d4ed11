"""Dense symmetric-matrix kernels: eigendecomposition, Cholesky, PSD projection.

Thin deterministic wrappers over LAPACK (via numpy.linalg) that pin down the
conventions the rest of the package relies on: descending eigenvalues, a
fixed eigenvector sign, and a jitter ladder for nearly-singular Cholesky
factorizations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_ATOL = 1e-10


class NumericalError(RuntimeError):
    """A dense factorization failed beyond the configured recovery policy."""


def symmetrize(a, tol: float = SYMMETRY_ATOL) -> np.ndarray:
    """Validate symmetry within tol and return the symmetrized (A + A^T)/2."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if a.size else 1.0)
    gap = float(np.abs(a - a.T).max()) if a.size else 0.0
    if gap > tol * scale:
        raise ValueError(f"matrix is not symmetric: max |A - A^T| = {gap:g}")
    return 0.5 * (a + a.T)


@dataclass
class EigenPairs:
    """Full spectrum of a symmetric matrix, eigenvalues sorted descending.

    eigenvectors holds orthonormal columns aligned with eigenvalues; each
    column's largest-magnitude component is made positive so the output is
    deterministic.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigen(a) -> EigenPairs:
    """Eigendecomposition of a symmetric matrix with fixed ordering and signs."""
    a = symmetrize(a)
    try:
        vals, vecs = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails
        raise NumericalError(f"symmetric eigendecomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vecs = vecs[:, order]
    # sign convention: the largest-|component| entry of each column is positive
    lead = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[lead, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return EigenPairs(eigenvalues=vals, eigenvectors=vecs * signs)


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal jitter ladder: start at `start`, double until above `max_jitter`."""

    start: float = 1e-10
    max_jitter: float = 1e-6


DEFAULT_JITTER = JitterPolicy()


def cholesky(a, policy: JitterPolicy = DEFAULT_JITTER) -> np.ndarray:
    """Lower-triangular L with L L^T = A + eps*I for the smallest workable eps.

    Tries eps = 0 first, then walks the jitter ladder. Raises NumericalError
    once the ladder is exhausted.
    """
    a = symmetrize(a)
    eps = 0.0
    eye = np.eye(a.shape[0])
    while True:
        try:
            return np.linalg.cholesky(a + eps * eye)
        except np.linalg.LinAlgError:
            if eps == 0.0:
                eps = policy.start
            elif eps * 2.0 <= policy.max_jitter:
                eps *= 2.0
            else:
                raise NumericalError(
                    f"Cholesky failed for dim {a.shape[0]} even with jitter {eps:g}"
                ) from None


def psd_project(a) -> np.ndarray:
    """Nearest positive-semidefinite matrix: clip eigenvalues at zero, rebuild."""
    pairs = sym_eigen(a)
    clipped = np.maximum(pairs.eigenvalues, 0.0)
    out = (pairs.eigenvectors * clipped) @ pairs.eigenvectors.T
    return 0.5 * (out + out.T)
