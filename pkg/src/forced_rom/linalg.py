"""Dense real matrix kernels: least squares, exact and randomized SVD, eigenvalue moduli.

Matrices are plain 2-D ``numpy`` float64 arrays. Every routine is a pure function
of its inputs (plus an explicit seed for the randomized SVD).
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceFailure, InvalidRank, RankDeficient, ShapeError

EIG_SIZE_CAP = 512


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self):
        return self.s.shape[0]

    def reconstruct(self):
        return (self.u * self.s) @ self.vt


def _as_matrix(a, name="a"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def qr_solve_least_squares(design, targets):
    """Return ``C`` minimizing ``||design @ C - targets||_F`` via a thin QR factorization.

    Raises RankDeficient when ``design`` does not have full column rank.
    """
    design = _as_matrix(design, "design")
    targets = np.asarray(targets, dtype=np.float64)
    squeeze = targets.ndim == 1
    if squeeze:
        targets = targets[:, None]
    targets = _as_matrix(targets, "targets")
    m, p = design.shape
    if targets.shape[0] != m:
        raise ShapeError(f"design has {m} rows but targets has {targets.shape[0]}")
    if m < p:
        raise RankDeficient(np.linalg.matrix_rank(design), p)

    q, r = np.linalg.qr(design, mode="reduced")
    diag = np.abs(np.diag(r))
    tol = max(m, p) * np.finfo(np.float64).eps * (diag.max() if p else 0.0)
    if p and (diag.min() <= tol):
        raise RankDeficient(np.linalg.matrix_rank(r), p)
    coef = scipy.linalg.solve_triangular(r, q.T @ targets, lower=False)
    return coef[:, 0] if squeeze else coef


def svd_exact(a):
    """Thin SVD of ``a`` (LAPACK divide and conquer)."""
    a = _as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"SVD did not converge: {exc}") from exc
    return SvdResult(u, s, vt)


def svd_randomized(a, rank, oversample=10, power_iters=2, seed=0):
    """Top-``rank`` singular triplets by a Gaussian range sketch with power iterations.

    The sketch basis is re-orthonormalized between every multiplication so that
    power iterations do not lose the trailing directions to round-off.
    """
    a = _as_matrix(a)
    n_rows, n_cols = a.shape
    if rank < 1 or oversample < 0 or power_iters < 0:
        raise InvalidRank(f"rank={rank}, oversample={oversample}, power_iters={power_iters}")
    if rank + oversample > min(n_rows, n_cols):
        raise InvalidRank(
            f"rank + oversample = {rank + oversample} exceeds min dimension {min(n_rows, n_cols)}"
        )
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((n_cols, rank + oversample))
    q, _ = np.linalg.qr(a @ omega)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(a.T @ q)
        q, _ = np.linalg.qr(a @ z)
    small = svd_exact(q.T @ a)
    u = q @ small.u
    return SvdResult(u[:, :rank], small.s[:rank], small.vt[:rank])


def eig_magnitudes(a, size_cap=EIG_SIZE_CAP):
    """Moduli of all eigenvalues of a square matrix, sorted non-increasing."""
    a = _as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ShapeError(f"eigenvalues need a square matrix, got {a.shape}")
    if n > size_cap:
        raise ShapeError(f"matrix of order {n} exceeds the small-matrix cap {size_cap}")
    if n == 0:
        return np.zeros(0)
    try:
        lam = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(f"eigenvalue iteration did not converge: {exc}") from exc
    return np.sort(np.abs(lam))[::-1]


def spectral_radius(a):
    mags = eig_magnitudes(a)
    return float(mags[0]) if mags.size else 0.0
