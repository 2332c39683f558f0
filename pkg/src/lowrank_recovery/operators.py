"""Linear measurement maps, the least-squares objective and its gradients.

A measurement map sends an ``n1 x n2`` matrix to ``m`` scalars
``y_l = <A_l, X>``. Two kinds are supported:

* ``dense``: explicit sensing matrices stored as an ``(m, n1, n2)`` array;
* ``entry``: entry sampling, ``A_l = scale * e_i e_j^T`` for observed ``(i, j)``.

The objective is ``F(X) = (1/m) ||y - A(X)||^2`` and for an index batch ``b``
the stochastic objective is ``f_b(X) = (1/|b|) sum_{l in b} (y_l - <A_l, X>)^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import InvalidInputError
from .linalg import SubspaceProjector

DENSE = "dense"
ENTRY = "entry"


@dataclass(frozen=True, eq=False)
class MeasurementOp:
    kind: Literal["dense", "entry"]
    shape: tuple[int, int]
    sensing: np.ndarray | None = None
    rows: np.ndarray | None = None
    cols: np.ndarray | None = None
    scale: float = 1.0
    _flat: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def dense_ensemble(cls, sensing) -> "MeasurementOp":
        A = np.array(sensing, dtype=np.float64)
        if A.ndim != 3 or A.shape[0] < 1:
            raise InvalidInputError("sensing must have shape (m, n1, n2) with m >= 1")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("sensing matrices must be finite")
        A.setflags(write=False)
        flat = A.reshape(A.shape[0], -1)
        return cls(DENSE, (A.shape[1], A.shape[2]), sensing=A, _flat=flat)

    @classmethod
    def entry_sampling(cls, indices, shape, scale: float | None = None) -> "MeasurementOp":
        """Entry sampling at ``indices`` (pairs ``(row, col)``).

        ``scale`` defaults to ``sqrt(n1 * n2)`` so that ``(1/m) ||A(X)||^2`` is an
        unbiased estimate of ``||X||_F^2`` under uniform sampling.
        """
        n1, n2 = int(shape[0]), int(shape[1])
        idx = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
        if idx.shape[0] < 1:
            raise InvalidInputError("entry sampling needs at least one index")
        rows, cols = idx[:, 0].copy(), idx[:, 1].copy()
        if rows.min() < 0 or rows.max() >= n1 or cols.min() < 0 or cols.max() >= n2:
            raise InvalidInputError("sampled index out of bounds")
        if np.unique(rows * n2 + cols).size != rows.size:
            raise InvalidInputError("sampled indices must be distinct")
        if scale is None:
            scale = float(np.sqrt(n1 * n2))
        if not scale > 0:
            raise InvalidInputError(f"scale must be positive, got {scale}")
        rows.setflags(write=False)
        cols.setflags(write=False)
        return cls(ENTRY, (n1, n2), rows=rows, cols=cols, scale=float(scale))

    @property
    def m(self) -> int:
        return self.sensing.shape[0] if self.kind == DENSE else self.rows.size

    @property
    def flat(self) -> np.ndarray:
        """``(m, n1*n2)`` view of dense sensing matrices."""
        return self._flat

    def check_shape(self, X) -> np.ndarray:
        A = np.asarray(X, dtype=np.float64)
        if A.shape != self.shape:
            raise InvalidInputError(f"matrix shape {A.shape} does not match operator {self.shape}")
        return A

    def apply_flat(self, x: np.ndarray, idx: np.ndarray | None = None) -> np.ndarray:
        """Apply to vectorised matrices ``x`` of shape ``(n1*n2,)`` or ``(n1*n2, d)``."""
        if self.kind == DENSE:
            F = self._flat if idx is None else self._flat[idx]
            return F @ x
        lin = self.rows * self.shape[1] + self.cols
        if idx is not None:
            lin = lin[idx]
        return self.scale * x[lin]

    def adjoint(self, v, idx: np.ndarray | None = None) -> np.ndarray:
        """``sum_l v_l A_l`` over all functionals, or over ``idx`` if given."""
        v = np.asarray(v, dtype=np.float64)
        if self.kind == DENSE:
            F = self._flat if idx is None else self._flat[idx]
            return (F.T @ v).reshape(self.shape)
        out = np.zeros(self.shape)
        if idx is None:
            out[self.rows, self.cols] = self.scale * v
        else:
            out[self.rows[idx], self.cols[idx]] = self.scale * v
        return out


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    op: MeasurementOp
    y: np.ndarray
    rank: int
    truth: np.ndarray | None = None
    noiseless: bool = False

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        if y.size != self.op.m:
            raise InvalidInputError(f"y has {y.size} entries, operator has {self.op.m}")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("measurements must be finite")
        object.__setattr__(self, "y", y)
        if not 1 <= self.rank <= min(self.op.shape):
            raise InvalidInputError(f"rank budget {self.rank} out of range for {self.op.shape}")
        if self.truth is not None:
            T = self.op.check_shape(self.truth)
            object.__setattr__(self, "truth", T)
            if self.noiseless:
                r = apply_op(self.op, T) - y
                if np.max(np.abs(r)) > 1e-12 * max(1.0, np.max(np.abs(y))):
                    raise InvalidInputError("noiseless instance: y differs from A(truth)")

    @property
    def m(self) -> int:
        return self.op.m

    @property
    def shape(self) -> tuple[int, int]:
        return self.op.shape


def apply_op(op: MeasurementOp, X) -> np.ndarray:
    return op.apply_flat(op.check_shape(X).ravel())


def residual_sq(inst: ProblemInstance, X) -> float:
    """``||y - A(X)||_2^2``."""
    r = inst.y - apply_op(inst.op, X)
    return float(r @ r)


def objective(inst: ProblemInstance, X) -> float:
    return residual_sq(inst, X) / inst.m


def _gradient(inst: ProblemInstance, X: np.ndarray, idx: np.ndarray | None) -> np.ndarray:
    op = inst.op
    x = X.ravel()
    y = inst.y if idx is None else inst.y[idx]
    count = op.m if idx is None else idx.size
    return op.adjoint((2.0 / count) * (op.apply_flat(x, idx) - y), idx)


def full_gradient(inst: ProblemInstance, X) -> np.ndarray:
    """``(2/m) sum_l A_l (<A_l, X> - y_l)``."""
    return _gradient(inst, inst.op.check_shape(X), None)


def check_batch(inst: ProblemInstance, batch) -> np.ndarray | None:
    """Validate an index batch; returns sorted indices, or ``None`` for the full set."""
    b = np.asarray(batch, dtype=np.int64).ravel()
    if b.size == 0:
        raise InvalidInputError("empty index batch")
    if b.min() < 0 or b.max() >= inst.m:
        raise InvalidInputError("batch index out of range")
    b = np.sort(b)
    if np.any(b[1:] == b[:-1]):
        raise InvalidInputError("batch indices must be distinct")
    return None if b.size == inst.m else b


def stochastic_gradient(inst: ProblemInstance, X, batch) -> np.ndarray:
    """``(2/|b|) sum_{l in b} A_l (<A_l, X> - y_l)``.

    A batch covering all ``m`` indices takes the exact same code path as
    ``full_gradient`` so the two agree bit for bit.
    """
    return _gradient(inst, inst.op.check_shape(X), check_batch(inst, batch))


def variance_reduced_direction(inst: ProblemInstance, X_t, snapshot, gk, batch) -> np.ndarray:
    """SVRG direction ``grad f_b(X_t) - grad f_b(snapshot) + gk``.

    ``gk`` must be the full gradient at ``snapshot``. For a full batch the two
    correction terms cancel identically and the full gradient at ``X_t`` is
    returned directly.
    """
    idx = check_batch(inst, batch)
    X_t = inst.op.check_shape(X_t)
    if idx is None:
        return _gradient(inst, X_t, None)
    snapshot = inst.op.check_shape(snapshot)
    return _gradient(inst, X_t, idx) - _gradient(inst, snapshot, idx) + gk


def gradient_difference(inst: ProblemInstance, X, Y, batch) -> np.ndarray:
    """``grad f_b(X) - grad f_b(Y) = (2/|b|) sum_{l in b} A_l <A_l, X - Y>``.

    Equal to the difference of two ``stochastic_gradient`` calls up to
    rounding, without touching ``y``.
    """
    op = inst.op
    idx = check_batch(inst, batch)
    D = op.check_shape(X) - op.check_shape(Y)
    count = op.m if idx is None else idx.size
    return op.adjoint((2.0 / count) * op.apply_flat(D.ravel(), idx), idx)


def draw_batch(rng: np.random.Generator, m: int, size: int) -> np.ndarray:
    """Uniform batch without replacement; successive draws are independent."""
    if size >= m:
        return np.arange(m)
    if size == 1:
        return np.array([rng.integers(m)])
    return rng.choice(m, size=size, replace=False)


def draw_batches(rng: np.random.Generator, m: int, size: int, count: int) -> np.ndarray:
    """``count`` independent batches as the rows of a ``(count, min(size, m))`` array."""
    if size >= m:
        return np.tile(np.arange(m), (count, 1))
    if size == 1:
        return rng.integers(m, size=(count, 1))
    return np.stack([rng.choice(m, size=size, replace=False) for _ in range(count)])


def batch_lipschitz(op: MeasurementOp, size: int) -> float:
    """A smoothness constant of ``grad f_b`` valid for every batch of ``size``.

    Entry sampling: distinct entries give orthogonal functionals, so the
    Hessian ``(2/|b|) sum A_l A_l^T`` has norm ``2 scale^2 / |b|``. Dense
    ensembles use the batch-independent bound ``2 max_l ||A_l||_F^2``.
    """
    if size < 1:
        raise InvalidInputError("batch size must be positive")
    if op.kind == ENTRY:
        return 2.0 * op.scale ** 2 / min(size, op.m)
    return 2.0 * float(np.max(np.einsum("ij,ij->i", op.flat, op.flat)))


def subspace_gram(op: MeasurementOp, P: SubspaceProjector, batch=None) -> np.ndarray:
    """Gram form ``G_ij = (1/|b|) <A_b(B_i), A_b(B_j)>`` on the basis of ``P``."""
    if P.dim == 0:
        raise InvalidInputError("subspace has an empty basis")
    if (P.ambient_rows, P.ambient_cols) != op.shape:
        raise InvalidInputError("subspace ambient shape does not match operator")
    idx = None if batch is None else np.asarray(batch, dtype=np.int64).ravel()
    count = op.m if idx is None else idx.size
    AB = op.apply_flat(P.flat_basis(), idx)
    return (AB.T @ AB) / count


def estimate_subspace_rip(op: MeasurementOp, P: SubspaceProjector, batch=None) -> tuple[float, float]:
    """Extreme values of ``(1/m) ||A(Z)||^2 / ||Z||_F^2`` over nonzero ``Z`` in span(P).

    Computed exactly as the extreme eigenvalues of the Gram form. With
    ``batch`` the functionals are restricted to it and normalised by ``1/|b|``.
    """
    ev = np.linalg.eigvalsh(subspace_gram(op, P, batch))
    return float(ev[0]), float(ev[-1])


def singleton_upper(op: MeasurementOp, P: SubspaceProjector) -> float:
    """``max_l`` of the top Gram eigenvalue restricted to the single functional ``l``.

    Each single-functional Gram form is rank one, ``a_l a_l^T`` with
    ``a_l = A_l(B)``, so its top eigenvalue is ``||a_l||^2``.
    """
    AB = op.apply_flat(P.flat_basis())
    return float(np.max(np.sum(AB * AB, axis=1)))
