"""Partitioned ERM instances and the saddle-point function built on them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvalidPartitionError, NoClosedFormError, ShapeError
from .losses import ElasticNet, L2, LossFamily, local_conj

POWER_MAX_ITER = 200
POWER_RTOL = 1e-8
POWER_SEED = 0


@dataclass(frozen=True)
class Partition:
    """Contiguous index ranges ``[bounds[b], bounds[b+1])`` covering ``0..total-1``."""

    bounds: tuple

    def __post_init__(self):
        b = tuple(int(x) for x in self.bounds)
        if len(b) < 2 or b[0] != 0 or any(lo >= hi for lo, hi in zip(b, b[1:])):
            raise InvalidPartitionError(f"bad partition bounds {b}")
        object.__setattr__(self, "bounds", b)

    @property
    def count(self):
        return len(self.bounds) - 1

    @property
    def total(self):
        return self.bounds[-1]

    @property
    def sizes(self):
        return np.diff(self.bounds)

    def slice(self, b):
        return slice(self.bounds[b], self.bounds[b + 1])

    def ranges(self):
        return [(lo, hi) for lo, hi in zip(self.bounds, self.bounds[1:])]

    def owner(self, index):
        """Block containing a global index."""
        return int(np.searchsorted(self.bounds, index, side="right") - 1)

    @classmethod
    def from_sizes(cls, sizes):
        return cls(tuple(np.concatenate([[0], np.cumsum(sizes)]).astype(int)))


def build_even_partition(total, blocks):
    """Split ``total`` indices into ``blocks`` contiguous ranges.

    Sizes differ by at most one; the remainder goes to the lower-index blocks.
    """
    total, blocks = int(total), int(blocks)
    if blocks < 1 or blocks > total:
        raise InvalidPartitionError(f"cannot split {total} indices into {blocks} blocks")
    base, rem = divmod(total, blocks)
    sizes = [base + 1 if b < rem else base for b in range(blocks)]
    return Partition.from_sizes(sizes)


def power_spectral_norm(A, max_iter=POWER_MAX_ITER, rtol=POWER_RTOL, seed=POWER_SEED):
    """Largest singular value of ``A`` by power iteration on ``A^T A``.

    Deterministic (fixed-seed start vector).  The estimate approaches the
    true value from below.
    """
    nrow, ncol = A.shape
    if nrow == 0 or ncol == 0 or (sp.issparse(A) and A.nnz == 0):
        return 0.0
    v = np.random.default_rng(seed).standard_normal(ncol)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        x = A @ v
        z = A.T @ x
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        new = float(np.sqrt(nz))  # ||A^T A v|| -> sigma_max^2 for converged v
        v = z / nz
        if abs(new - est) <= rtol * new:
            break
        est = new
    # ||A v|| for unit v is a certified lower bound
    return float(np.linalg.norm(A @ v))


class BlockMatrix:
    """Data matrix partitioned into an ``m x n`` grid of CSR blocks.

    Per-block spectral and Frobenius norms, and the Frobenius norms of the
    row and column stripes, are cached at construction.
    """

    def __init__(self, X, row_part, col_part):
        X = sp.csr_matrix(X, dtype=float)
        X.sum_duplicates()
        if X.shape != (row_part.total, col_part.total):
            raise ShapeError(
                f"matrix shape {X.shape} does not match partitions ({row_part.total}, {col_part.total})"
            )
        self.X = X
        self.row_part = row_part
        self.col_part = col_part
        m, n = row_part.count, col_part.count
        self.blocks = [
            [sp.csr_matrix(X[row_part.slice(i), col_part.slice(k)]) for k in range(n)] for i in range(m)
        ]
        self.blocks_T = [[b.T.tocsr() for b in row] for row in self.blocks]
        self.frobenius = np.array([[float(np.linalg.norm(b.data)) for b in row] for row in self.blocks])
        self.spectral = np.array([[power_spectral_norm(b) for b in row] for row in self.blocks])
        self.spectral = np.minimum(self.spectral, self.frobenius)
        sq = self.frobenius**2
        self.row_frobenius_sq = sq.sum(axis=1)
        self.col_frobenius_sq = sq.sum(axis=0)
        self.nnz = np.array([[b.nnz for b in row] for row in self.blocks])

    @property
    def m(self):
        return self.row_part.count

    @property
    def n(self):
        return self.col_part.count

    @property
    def shape(self):
        return self.X.shape

    def block(self, i, k):
        return self.blocks[i][k]

    def assemble(self):
        return sp.bmat(self.blocks, format="csr")

    def frobenius_sq(self):
        return float((self.frobenius**2).sum())

    def spectral_norm(self):
        return power_spectral_norm(self.X)

    def row_norms(self):
        return np.sqrt(np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel())


def partition_matrix(rows, row_part, col_part):
    """Cut a sparse (or dense) matrix into a :class:`BlockMatrix`."""
    return BlockMatrix(rows, row_part, col_part)


@dataclass
class SaddleState:
    """Primal ``w`` (length d) and dual ``alpha`` (length N) as flat arrays."""

    w: np.ndarray
    alpha: np.ndarray

    def copy(self):
        return SaddleState(self.w.copy(), self.alpha.copy())

    def __sub__(self, other):
        return SaddleState(self.w - other.w, self.alpha - other.alpha)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.alpha)))


class ErmProblem:
    """ERM ``(1/N) sum_j phi_j(x_j^T w) + g(w)`` distributed over a block grid.

    ``gamma[i] = (N/m) nu`` is the strong convexity of each ``f_i^*``.
    """

    def __init__(self, data, labels, loss, regularizer):
        if not isinstance(loss, LossFamily):
            raise TypeError("loss must be a LossFamily instance")
        labels = np.asarray(labels, dtype=float)
        if labels.shape != (data.shape[0],):
            raise ShapeError("one label per row required")
        if np.any(data.row_part.sizes < 1):
            raise InvalidPartitionError("every worker must own at least one row")
        self.data = data
        self.labels = labels
        self.loss = loss
        self.reg = regularizer
        self.nu = float(loss.nu)
        self.lam = float(regularizer.lam)
        N = data.shape[0]
        self.scale = self.m / N  # c = m/N in f_i = c * sum phi_j
        self.gamma = np.full(self.m, N * self.nu / self.m)
        if not (self.lam > 0 and self.nu > 0):
            raise ValueError("lam and nu must be positive")

    @property
    def m(self):
        return self.data.m

    @property
    def n(self):
        return self.data.n

    @property
    def N(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def y_block(self, i):
        return self.labels[self.data.row_part.slice(i)]

    def zero_state(self):
        return SaddleState(np.zeros(self.d), np.zeros(self.N))

    def check_state(self, state):
        if state.w.shape != (self.d,) or state.alpha.shape != (self.N,):
            raise ShapeError(f"state shapes {state.w.shape}, {state.alpha.shape} do not match ({self.d},), ({self.N},)")

    def dual_from_primal(self, w):
        """``alpha_i = grad f_i(X_i w)`` for every worker."""
        return self.scale * self.loss.deriv(self.data.X @ w, self.labels)

    def with_regularizer(self, reg):
        return ErmProblem(self.data, self.labels, self.loss, reg)


def conj_sum(problem, alpha):
    """``sum_i f_i^*(alpha_i)``."""
    return local_conj(problem.loss, alpha, problem.labels, problem.scale)


def lagrangian(problem, state):
    problem.check_state(state)
    X = problem.data.X
    m = problem.m
    coupling = float(state.alpha @ (X @ state.w)) / m
    return coupling - conj_sum(problem, state.alpha) / m + problem.reg.value(state.w)


def primal_value(problem, w):
    if w.shape != (problem.d,):
        raise ShapeError("w has the wrong length")
    margins = problem.data.X @ w
    return float(np.mean(problem.loss.value(margins, problem.labels))) + problem.reg.value(w)


def dual_value(problem, alpha):
    if alpha.shape != (problem.N,):
        raise ShapeError("alpha has the wrong length")
    if not isinstance(problem.reg, (L2, ElasticNet)):
        raise NoClosedFormError(f"no closed-form conjugate for {problem.reg!r}")
    z = -(problem.data.X.T @ alpha) / problem.m
    return -conj_sum(problem, alpha) / problem.m - problem.reg.conj(z)


def primal_from_dual(problem, alpha):
    """Minimizer of the Lagrangian over ``w`` for fixed ``alpha``."""
    return problem.reg.conj_grad(-(problem.data.X.T @ alpha) / problem.m)


def duality_gap(problem, state):
    try:
        return primal_value(problem, state.w) - dual_value(problem, state.alpha)
    except DomainError:
        return np.inf


def omega(problem, a, b):
    """Weighted squared distance ``lam ||dw||^2 + (1/m) sum_i gamma_i ||dalpha_i||^2``."""
    dw = a.w - b.w
    da = a.alpha - b.alpha
    parts = problem.data.row_part
    dual = sum(problem.gamma[i] * float(np.dot(da[parts.slice(i)], da[parts.slice(i)])) for i in range(problem.m))
    return problem.lam * float(np.dot(dw, dw)) + dual / problem.m
