"""Small linear-algebra helpers shared across the package."""

from __future__ import annotations

import numpy as np


def symmetrize(M: np.ndarray) -> np.ndarray:
    """Return (M + M.T)/2."""
    return 0.5 * (M + M.T)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(M)).max())


def is_psd(M: np.ndarray, tol: float = 1e-10) -> bool:
    """Check symmetry and eigenvalue floor of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        return False
    if np.linalg.norm(M - M.T) > 1e-12 * max(1.0, np.linalg.norm(M)):
        return False
    return bool(np.linalg.eigvalsh(symmetrize(M)).min() >= -tol)


def psd_clip(M: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Project a symmetric matrix onto the PSD cone (eigenvalue clipping)."""
    Ms = symmetrize(np.asarray(M, dtype=float))
    w, V = np.linalg.eigh(Ms)
    return symmetrize(V @ np.diag(np.maximum(w, floor)) @ V.T)


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix; negative eigenvalues clipped at 0."""
    Ms = symmetrize(np.asarray(M, dtype=float))
    w, V = np.linalg.eigh(Ms)
    return V @ np.diag(np.sqrt(np.maximum(w, 0.0))) @ V.T


def rel_fro_error(M: np.ndarray, ref: np.ndarray) -> float:
    """Frobenius-norm error of M relative to ref."""
    return float(np.linalg.norm(M - ref) / max(np.linalg.norm(ref), 1e-300))


def numerical_rank(M: np.ndarray, rtol: float = 1e-8) -> int:
    """Rank by singular values above rtol * sigma_max."""
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))
