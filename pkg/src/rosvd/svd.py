"""Dense SVD by one-sided (Hestenes) Jacobi rotations, plus head/tail truncation.

The rotation kernel is compiled with numba.  It works on the transposed
matrix so that every column of ``A`` is a contiguous row in memory, and it
sweeps the column pairs in cyclic-by-row order, which keeps results
bit-reproducible for a given input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numba
import numpy as np

from .errors import NumericInputError, TruncationError

ORTHOGONALITY_TOL = 1e-12
MAX_SWEEPS = 30
_SIGN_EPS = 1e-12


@numba.njit(cache=True)
def _jacobi_sweeps(W, Vt, tol, max_sweeps, null_tol2):
    n, m = W.shape
    for sweep in range(max_sweeps):
        worst = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for i in range(m):
                    wp = W[p, i]
                    wq = W[q, i]
                    alpha += wp * wp
                    beta += wq * wq
                    gamma += wp * wq
                if alpha <= null_tol2 or beta <= null_tol2:
                    continue
                defect = abs(gamma) / np.sqrt(alpha * beta)
                if defect > worst:
                    worst = defect
                if defect <= tol:
                    continue
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    wp = W[p, i]
                    wq = W[q, i]
                    W[p, i] = c * wp - s * wq
                    W[q, i] = s * wp + c * wq
                for i in range(n):
                    vp = Vt[p, i]
                    vq = Vt[q, i]
                    Vt[p, i] = c * vp - s * vq
                    Vt[q, i] = s * vp + c * vq
        if worst < tol:
            return sweep + 1
    return max_sweeps


@dataclass(frozen=True)
class SvdFactorization:
    """``A = U @ diag(S) @ V.T`` with full square ``U`` (m×m) and ``V`` (n×n)."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray
    sweeps: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[0], self.V.shape[0]

    @property
    def rank_bound(self) -> int:
        return len(self.S)

    def compose(self, weights: np.ndarray | None = None) -> np.ndarray:
        """Rebuild ``U diag(w) V^T``; ``weights`` defaults to ``S``."""
        w = self.S if weights is None else weights
        r = len(w)
        return (self.U[:, :r] * w) @ self.V[:, :r].T


@dataclass(frozen=True)
class TruncationSpec:
    mode: Literal["head", "tail"]
    k: int

    def __post_init__(self):
        if self.mode not in ("head", "tail"):
            raise TruncationError(f"unknown truncation mode {self.mode!r}")
        if int(self.k) != self.k or self.k < 1:
            raise TruncationError(f"truncation rank must be a positive integer, got {self.k!r}")

    def mask(self, r: int) -> np.ndarray:
        if self.k > r:
            raise TruncationError(f"k={self.k} exceeds min(m, n)={r}")
        keep = np.zeros(r, dtype=bool)
        if self.mode == "head":
            keep[: self.k] = True
        else:
            keep[r - self.k :] = True
        return keep


def _complete_basis(Q: np.ndarray, filled: np.ndarray) -> np.ndarray:
    """Fill the columns of ``Q`` not flagged in ``filled`` with an orthonormal
    basis of the complement of the flagged ones."""
    m = Q.shape[0]
    k = int(filled.sum())
    if k == m:
        return Q
    if k == 0:
        complement = np.eye(m)
    else:
        full, _ = np.linalg.qr(Q[:, filled], mode="complete")
        complement = full[:, k:]
    Q[:, ~filled] = complement
    return Q


def _canonical_signs(U: np.ndarray, V: np.ndarray, r: int) -> None:
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > _SIGN_EPS)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            if j < r:
                V[:, j] = -V[:, j]


def svd(A, *, tol: float = ORTHOGONALITY_TOL, max_sweeps: int = MAX_SWEEPS) -> SvdFactorization:
    """Full singular value decomposition of a real matrix.

    Accepts a 2-D array-like or any object exposing a ``values`` array (such
    as a :class:`~rosvd.sim.ResponseMatrix`).  Singular values come back in
    descending order; the first entry above 1e-12 in magnitude of every
    column of ``U`` is made nonnegative (with the matching column of ``V``
    flipped) so that results are byte-stable.
    """
    a = np.asarray(getattr(A, "values", A), dtype=np.float64)
    if a.ndim != 2 or 0 in a.shape:
        raise NumericInputError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericInputError("matrix contains non-finite entries")

    transposed = a.shape[0] < a.shape[1]
    work = a.T if transposed else a
    m, n = work.shape

    W = np.array(work.T, dtype=np.float64, order="C", copy=True)
    Vt = np.eye(n)
    fro = float(np.linalg.norm(a))
    null_tol = max(m, n) * np.finfo(float).eps * fro
    sweeps = _jacobi_sweeps(W, Vt, tol, max_sweeps, null_tol * null_tol)

    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    order = np.argsort(-norms, kind="stable")
    norms = norms[order]
    W = W[order]
    V = np.ascontiguousarray(Vt[order].T)

    live = norms > null_tol
    S = np.where(live, norms, 0.0)
    U = np.zeros((m, m))
    U[:, :n][:, live] = (W[live] / norms[live, None]).T
    filled = np.zeros(m, dtype=bool)
    filled[:n] = live
    U = _complete_basis(U, filled)
    if transposed:
        # A^T = U S V^T  =>  A = V S U^T
        U, V = V, U
    _canonical_signs(U, V, n)
    return SvdFactorization(U=U, S=S, V=V, sweeps=int(sweeps))


def reconstruct(F: SvdFactorization, spec: TruncationSpec) -> np.ndarray:
    """Head (largest ``k``) or tail (smallest ``k``) truncated reconstruction."""
    keep = spec.mask(len(F.S))
    return F.compose(np.where(keep, F.S, 0.0))


def spectrum_report(A) -> list[tuple[int, float]]:
    F = svd(A)
    return [(i + 1, float(s)) for i, s in enumerate(F.S)]


def truncation_error(F: SvdFactorization, k: int) -> float:
    """Frobenius error of the best rank-``k`` approximation, from ``S`` alone."""
    return float(np.sqrt(np.sum(F.S[k:] ** 2)))
