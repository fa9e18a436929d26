"""Symmetric-matrix helpers: Grammian square root and positive-definitization."""
from __future__ import annotations

import numpy as np

from .errors import AsymmetryError, DomainError, NotPSDError

#: eigenvalues in [-EIG_TOL * rho^*, 0) are treated as rounding noise
EIG_TOL = 1e-10


def _check_symmetric(a, rtol=1e-9):
    scale = max(np.abs(a).max(initial=0.0), 1e-300)
    if np.abs(a - np.swapaxes(a, -1, -2)).max(initial=0.0) > rtol * scale:
        raise AsymmetryError("matrix is not symmetric")


def psd_sqrt(a) -> np.ndarray:
    """Symmetric PSD square root ``Q diag(sqrt(lam)) Q^T``.

    Works on a single matrix or a stack ``(..., d, d)``.  Eigenvalues slightly
    below zero (relative to the largest) are clipped; anything more negative
    raises :class:`NotPSDError`.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DomainError(f"expected square matrix, got shape {a.shape}")
    _check_symmetric(a)
    sym = 0.5 * (a + np.swapaxes(a, -1, -2))
    lam, q = np.linalg.eigh(sym)
    top = np.abs(lam).max(axis=-1, keepdims=True)
    if np.any(lam < -EIG_TOL * top):
        raise NotPSDError(f"smallest eigenvalue {lam.min():.3e} is below tolerance")
    root = np.sqrt(np.clip(lam, 0.0, None))
    out = (q * root[..., None, :]) @ np.swapaxes(q, -1, -2)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def min_eigenvalue(a) -> float:
    return float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])


def positive_definitize(v, m: int, delta_star: float):
    """Keep ``v`` if its smallest eigenvalue is at least ``delta_star * m``,
    otherwise replace it by ``(delta_star * m) * I``.

    Returns ``(matrix, replaced)``.
    """
    v = np.asarray(v, dtype=float)
    if not delta_star > 0:
        raise DomainError(f"delta_star must be positive, got {delta_star}")
    _check_symmetric(v)
    floor = delta_star * m
    if min_eigenvalue(v) >= floor:
        return v, False
    return floor * np.eye(v.shape[0]), True
