"""Dense matrix primitives: SVD, rank-r hard thresholding, singular value
shrinkage and projections onto finite-dimensional matrix subspaces.

Matrices are plain 2-D float64 ``numpy`` arrays. Every function returns a new
array and never mutates its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import math

import numpy as np
import scipy.linalg
from scipy.linalg import lapack as _lapack

from .errors import InvalidInputError, InvalidRankError

# spanOf drops a candidate whose orthogonal residual falls below this fraction
# of the largest input norm.
SPAN_DROP_TOL = 1e-10


class SvdFactors(NamedTuple):
    """Thin SVD ``M = left @ diag(singular) @ right.T``."""

    left: np.ndarray
    singular: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular) @ self.right.T


@dataclass(frozen=True)
class SubspaceProjector:
    """Orthonormal basis (under the trace inner product) of a matrix subspace.

    ``basis`` has shape ``(d, rows, cols)``; ``d`` may be zero.
    """

    basis: np.ndarray
    ambient_rows: int
    ambient_cols: int

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def flat_basis(self) -> np.ndarray:
        """Basis as a ``(rows*cols, d)`` matrix with orthonormal columns."""
        return self.basis.reshape(self.dim, -1).T

    def coordinates(self, X: np.ndarray) -> np.ndarray:
        return self.basis.reshape(self.dim, -1) @ np.ravel(X)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return project_span(X, self)


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must be a non-empty 2-D array, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def svd(M) -> SvdFactors:
    """Thin singular value decomposition of a finite real matrix.

    Singular values are returned nonincreasing. LAPACK ``gesdd`` is used, which
    is deterministic for a fixed input and reconstructs to ~1e-15 relative.
    """
    A = as_matrix(M)
    U, s, Vt = scipy.linalg.svd(A, full_matrices=False, check_finite=False)
    return SvdFactors(U, s, Vt.T)


def _check_rank(shape, r) -> int:
    if int(r) != r or not 1 <= r <= min(shape):
        raise InvalidRankError(f"rank budget {r} outside [1, {min(shape)}] for shape {shape}")
    return int(r)


def truncated_svd(W, r: int, warm_right: np.ndarray | None = None,
                  max_sweeps: int = 12) -> SvdFactors:
    """Leading ``r`` singular triplets of ``W``.

    With ``warm_right`` (an ``n2 x r`` matrix whose span approximates the
    leading right singular subspace) a block subspace iteration with
    Rayleigh-Ritz extraction is run first. It is accepted only when the Ritz
    residual ``||W V - U S||_F`` drops below ``1e-12 ||W||_F``; otherwise the
    result falls back to a full SVD, also used as soon as one sweep fails to
    cut the residual tenfold. Iterative solvers pass the factors of the
    previous iterate, which is typically within a tiny perturbation of ``W``.
    """
    A = np.asarray(W, dtype=np.float64)
    r = _check_rank(A.shape, r)
    if warm_right is not None and warm_right.shape == (A.shape[1], r):
        wnorm = math.sqrt(float(np.einsum("ij,ij->", A, A)))
        if wnorm == 0.0:
            return SvdFactors(np.zeros((A.shape[0], r)), np.zeros(r), np.zeros((A.shape[1], r)))
        # raw LAPACK calls: the numpy wrappers dominate the cost at this size
        Y = A @ warm_right
        prev = math.inf
        for _ in range(max_sweeps if math.isfinite(wnorm) else 0):
            qr, tau, _, info = _lapack.dgeqrf(Y)
            if info != 0:
                break
            Q, _, info = _lapack.dorgqr(qr, tau)
            if info != 0:
                break
            u, s, vt, info = _lapack.dgesdd(Q.T @ A, full_matrices=0)
            if info != 0:
                break
            V = vt.T
            U = Q @ u
            Y = A @ V
            R = Y - U * s
            resid = math.sqrt(float(np.einsum("ij,ij->", R, R)))
            if resid <= 1e-12 * wnorm:
                return SvdFactors(U, s, V)
            if resid > 0.1 * prev:
                break  # small spectral gap: iteration would crawl
            prev = resid
    f = svd(A)
    return SvdFactors(f.left[:, :r], f.singular[:r], f.right[:, :r])


def hard_threshold_rank(W, r: int) -> np.ndarray:
    """Nearest matrix of rank at most ``r`` in Frobenius norm (truncated SVD).

    When singular values tie at position ``r`` the first ``r`` triplets in
    LAPACK's order are kept; the result is then one minimizer among several.
    """
    A = as_matrix(W)
    r = _check_rank(A.shape, r)
    if r == min(A.shape):
        return A.copy()
    f = svd(A)
    return (f.left[:, :r] * f.singular[:r]) @ f.right[:, :r].T


def soft_threshold_singular(W, tau: float) -> np.ndarray:
    """Shrink every singular value by ``tau`` and floor at zero."""
    if not tau >= 0:
        raise InvalidInputError(f"threshold must be nonnegative, got {tau}")
    A = as_matrix(W)
    if tau == 0:
        return A.copy()
    f = svd(A)
    s = np.maximum(f.singular - tau, 0.0)
    keep = s > 0
    return (f.left[:, keep] * s[keep]) @ f.right[:, keep].T


def numerical_rank(M, rel_tol: float = 1e-8) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rel_tol * s[0]))


def span_of(mats: Sequence[np.ndarray]) -> SubspaceProjector:
    """Orthonormal basis of the linear span of ``mats``.

    Modified Gram-Schmidt with one re-orthogonalisation pass; candidates whose
    residual norm is below ``SPAN_DROP_TOL`` times the largest input norm are
    treated as dependent and dropped.
    """
    if len(mats) == 0:
        raise InvalidInputError("span_of needs at least one matrix")
    arrs = [np.asarray(M, dtype=np.float64) for M in mats]
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs) or len(shape) != 2:
        raise InvalidInputError("span_of: all matrices must share one 2-D shape")
    scale = max(np.linalg.norm(a) for a in arrs)
    basis: list[np.ndarray] = []
    if scale > 0:
        for a in arrs:
            v = a.ravel().copy()
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > SPAN_DROP_TOL * scale:
                basis.append(v / nv)
    B = np.array(basis).reshape(len(basis), *shape) if basis else np.zeros((0, *shape))
    return SubspaceProjector(B, shape[0], shape[1])


def project_span(X, P: SubspaceProjector) -> np.ndarray:
    """Orthogonal projection ``sum_i <B_i, X> B_i`` onto the span of ``P``."""
    A = np.asarray(X, dtype=np.float64)
    if A.shape != (P.ambient_rows, P.ambient_cols):
        raise InvalidInputError(
            f"shape {A.shape} does not match subspace ambient "
            f"{(P.ambient_rows, P.ambient_cols)}")
    if P.dim == 0:
        return np.zeros_like(A)
    flat = P.basis.reshape(P.dim, -1)
    return (flat.T @ (flat @ A.ravel())).reshape(A.shape)
