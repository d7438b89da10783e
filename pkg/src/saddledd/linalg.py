"""Sparse and dense kernels: restrictions, Cholesky, symmetric eigensolvers.

Sparse matrices are ``scipy.sparse.csr_matrix`` objects in canonical form
(sorted unique column indices, no stored zeros). Dense matrices are plain
``numpy`` arrays.
"""
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import DEFAULT_TOLERANCES


class NotSPDError(np.linalg.LinAlgError):
    """Raised by :func:`chol` when a non-positive pivot is met."""

    def __init__(self, pivot, msg=None):
        self.pivot = pivot
        super().__init__(msg or f"matrix is not positive definite (pivot {pivot})")


class DimensionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# sparse helpers

def as_csr(M) -> sp.csr_matrix:
    """Return ``M`` as a canonical CSR matrix (a copy for sparse input)."""
    if sp.issparse(M):
        out = sp.csr_matrix(M, dtype=float, copy=True)
    else:
        out = sp.csr_matrix(np.asarray(M, dtype=float))
    out.sum_duplicates()
    out.eliminate_zeros()
    out.sort_indices()
    return out


def is_canonical(M: sp.csr_matrix) -> bool:
    if not sp.isspmatrix_csr(M):
        return False
    if np.any(np.diff(M.indptr) < 0):
        return False
    if M.nnz and np.any(M.data == 0.0):
        return False
    for i in range(M.shape[0]):
        cols = M.indices[M.indptr[i]:M.indptr[i + 1]]
        if np.any(np.diff(cols) <= 0):
            return False
    return True


def sym_defect(M) -> float:
    """``max|M - M^T|`` relative to ``max|M|`` (0 for the zero matrix)."""
    if sp.issparse(M):
        diff = abs(M - M.T).max() if M.nnz else 0.0
        scale = abs(M).max() if M.nnz else 0.0
    else:
        M = np.asarray(M)
        diff = np.abs(M - M.T).max() if M.size else 0.0
        scale = np.abs(M).max() if M.size else 0.0
    return float(diff / scale) if scale > 0 else 0.0


def is_symmetric(M, tol=None) -> bool:
    tol = DEFAULT_TOLERANCES.sym_check if tol is None else tol
    return M.shape[0] == M.shape[1] and sym_defect(M) <= tol


def spmv(M, x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] != M.shape[1]:
        raise DimensionError(f"cannot multiply {M.shape} matrix by vector of length {x.shape[0]}")
    return M @ x


def restriction(idx, n) -> sp.csr_matrix:
    """Boolean restriction selecting the entries ``idx`` of a length-``n`` vector."""
    idx = np.asarray(idx, dtype=np.int64)
    k = idx.size
    return sp.csr_matrix((np.ones(k), idx, np.arange(k + 1)), shape=(k, n))


def selected_indices(R) -> np.ndarray:
    """Indices selected by a 0/1 restriction matrix; raises if ``R`` is not one."""
    R = sp.csr_matrix(R)
    counts = np.diff(R.indptr)
    if np.any(counts != 1) or np.any(R.data != 1.0):
        raise ValueError("R is not a 0/1 selection matrix with one unit entry per row")
    return R.indices.copy()


def triple_product(R, A, dense=False):
    """``R A R^T`` for a boolean restriction ``R``: the principal submatrix of ``A``."""
    idx = selected_indices(R)
    if R.shape[1] != A.shape[0]:
        raise DimensionError("restriction and matrix sizes do not match")
    sub = sp.csr_matrix(A)[idx][:, idx]
    return sub.toarray() if dense else as_csr(sub)


def column_support(M) -> np.ndarray:
    """Indices of the columns of ``M`` holding at least one nonzero."""
    M = sp.csc_matrix(M)
    M.eliminate_zeros()
    return np.flatnonzero(np.diff(M.indptr))


def row_support(M) -> np.ndarray:
    M = sp.csr_matrix(M)
    M.eliminate_zeros()
    return np.flatnonzero(np.diff(M.indptr))


# ---------------------------------------------------------------------------
# Cholesky

class CholFactor:
    """Cholesky factor ``L L^T = P M P^T`` of a symmetric positive definite matrix.

    The dense variant keeps ``L`` as an array and ``perm`` as the identity.
    The sparse variant wraps a SuperLU factorization computed with symmetric
    ordering and diagonal pivoting, from which ``L`` is recovered.
    """

    def __init__(self, L, perm=None, lu=None):
        self.L = L
        self.n = L.shape[0]
        self.perm = np.arange(self.n) if perm is None else np.asarray(perm)
        self._lu = lu

    @property
    def is_sparse(self):
        return self._lu is not None

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._lu is not None:
            return self._lu.solve(b)
        if self.n == 0:
            return np.zeros_like(b)
        return sla.cho_solve((self.L, True), b, check_finite=False)

    def solve_L(self, b):
        """Apply ``L^{-1}`` (dense factors only, identity permutation)."""
        if self.n == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        return sla.solve_triangular(self.L, b, lower=True, check_finite=False)

    def solve_LT(self, b):
        """Apply ``L^{-T}``."""
        if self.n == 0:
            return np.zeros_like(np.asarray(b, dtype=float))
        return sla.solve_triangular(self.L, b, lower=True, trans="T", check_finite=False)

    def reconstruct(self):
        """Return ``P^T L L^T P`` (dense) which should equal the input matrix."""
        L = self.L.toarray() if sp.issparse(self.L) else self.L
        LLt = L @ L.T
        out = np.empty_like(LLt)
        out[np.ix_(self.perm, self.perm)] = LLt
        return out


def chol(M, tol=None) -> CholFactor:
    """Cholesky factorization; dense below ``dense_cutoff``, sparse above.

    Raises
    ------
    NotSPDError
        With the 0-based index of the first non-positive pivot.
    """
    tol = DEFAULT_TOLERANCES if tol is None else tol
    n = M.shape[0]
    if M.shape[0] != M.shape[1]:
        raise DimensionError("chol needs a square matrix")
    if sp.issparse(M) and n > tol.dense_cutoff:
        return _sparse_chol(sp.csc_matrix(M))
    Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if n == 0:
        return CholFactor(np.zeros((0, 0)))
    L, info = sla.lapack.dpotrf(Md, lower=1, clean=1)
    if info > 0:
        raise NotSPDError(info - 1)
    if info < 0:
        raise ValueError("invalid input to dpotrf")
    return CholFactor(L)


def _sparse_chol(M: sp.csc_matrix) -> CholFactor:
    lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                   options={"SymmetricMode": True})
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotSPDError(-1, "sparse factorization needed off-diagonal pivoting")
    d = lu.U.diagonal()
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise NotSPDError(int(bad[0]))
    L = lu.L @ sp.diags(np.sqrt(d))
    # L L^T = P_r M P_c^T with the permutation stored so that row perm[k] -> k
    perm = np.empty_like(lu.perm_c)
    perm[lu.perm_c] = np.arange(len(perm))
    return CholFactor(sp.csr_matrix(L), perm=perm, lu=lu)


# ---------------------------------------------------------------------------
# eigen-solvers

class EigResult(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray


class GenEigResult(NamedTuple):
    """Generalized eigenpairs of a pencil ``(L, Rm)``.

    ``values``/``vectors`` hold the finite pairs on range(Rm), with the vectors
    Rm-orthonormal. ``inf_vectors`` span the part of ker(Rm) on which L is
    nonzero (eigenvalue +inf); ``null_vectors`` span the common kernel,
    which is excluded from the pencil.
    """
    values: np.ndarray
    vectors: np.ndarray
    inf_vectors: np.ndarray
    null_vectors: np.ndarray


def sym_eig(M) -> EigResult:
    """Full spectrum of a symmetric matrix, ascending, orthonormal vectors."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if not is_symmetric(M):
        raise ValueError("sym_eig needs a symmetric matrix")
    w, V = sla.eigh(0.5 * (M + M.T))
    return EigResult(w, V)


def _range_split(M, drop):
    w, V = sla.eigh(0.5 * (M + M.T))
    top = max(w[-1], 0.0) if w.size else 0.0
    keep = w > drop * top if top > 0 else np.zeros(w.size, dtype=bool)
    return w[keep], V[:, keep], V[:, ~keep]


def gen_sym_eig(L, Rm, drop_tol=None) -> GenEigResult:
    """Generalized eigenproblem ``L v = lambda Rm v`` for symmetric PSD ``L``, ``Rm``.

    ``Rm`` is whitened on its range (eigenvalues above ``drop_tol * lambda_max``)
    and the compressed standard problem is solved there. Kernel directions
    of ``Rm`` are returned separately as ``inf_vectors`` when ``L`` does not
    vanish on them.
    """
    drop = DEFAULT_TOLERANCES.eig_drop if drop_tol is None else drop_tol
    L = L.toarray() if sp.issparse(L) else np.asarray(L, dtype=float)
    Rm = Rm.toarray() if sp.issparse(Rm) else np.asarray(Rm, dtype=float)
    if L.shape != Rm.shape or L.shape[0] != L.shape[1]:
        raise DimensionError("pencil matrices must be square and of equal size")
    n = L.shape[0]
    if n == 0:
        z = np.zeros((0, 0))
        return GenEigResult(np.zeros(0), z, z, z)
    s, Q, K = _range_split(Rm, drop)
    W = Q / np.sqrt(s)
    Lw = W.T @ L @ W
    mu, Y = sla.eigh(0.5 * (Lw + Lw.T))
    vectors = W @ Y
    if K.shape[1]:
        Lk = K.T @ L @ K
        wk, Vk = sla.eigh(0.5 * (Lk + Lk.T))
        scale = max(np.abs(L).max(), 1e-300)
        nz = wk > drop * scale
        inf_vectors, null_vectors = K @ Vk[:, nz], K @ Vk[:, ~nz]
    else:
        inf_vectors = null_vectors = np.zeros((n, 0))
    return GenEigResult(mu, vectors, inf_vectors, null_vectors)


class PseudoInverse:
    """Moore-Penrose inverse of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues at or below ``drop_tol * lambda_max`` are discarded.
    """

    def __init__(self, M, drop_tol=None):
        drop = DEFAULT_TOLERANCES.pinv_drop if drop_tol is None else drop_tol
        M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        self.n = M.shape[0]
        if self.n == 0:
            self.values, self.basis = np.zeros(0), np.zeros((0, 0))
            return
        w, V = sla.eigh(0.5 * (M + M.T))
        top = w[-1]
        keep = w > drop * top if top > 0 else np.zeros(w.size, dtype=bool)
        self.values = w[keep]
        self.basis = V[:, keep]

    @property
    def rank(self):
        return self.values.size

    def __call__(self, g):
        g = np.asarray(g, dtype=float)
        if self.rank == 0:
            return np.zeros_like(g)
        c = self.basis.T @ g
        c = c / self.values if c.ndim == 1 else c / self.values[:, None]
        return self.basis @ c

    def matrix(self):
        return (self.basis / self.values) @ self.basis.T


def pseudo_apply(M, drop_tol, g):
    """Return ``M^+ g`` for symmetric PSD ``M`` (0 when ``M`` vanishes)."""
    return PseudoInverse(M, drop_tol)(g)


def select_independent(G, drop_tol=None):
    """Pivoted Gram-Schmidt on a Gram matrix whose columns are first scaled
    to unit norm.

    At every step the column with the largest remaining squared norm
    (orthogonal to the columns already kept) is taken; the pass stops once
    that norm falls to ``drop_tol``. Returns the kept indices in pivot order,
    the column scaling, and the Cholesky factor of the scaled Gram matrix
    restricted to the kept columns. Columns are never mixed, so locality of
    the underlying vectors is preserved.
    """
    drop = DEFAULT_TOLERANCES.coarse_drop if drop_tol is None else drop_tol
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    diag = np.diag(G).copy()
    scale = np.zeros(n)
    pos = diag > 0
    scale[pos] = 1.0 / np.sqrt(diag[pos])
    Gs = G * scale[:, None] * scale[None, :]
    resid = np.where(pos, 1.0, 0.0)
    L = np.zeros((n, n))
    kept = []
    for r in range(n):
        k = int(np.argmax(resid))
        if resid[k] <= drop:
            break
        piv = np.sqrt(resid[k])
        col = (Gs[:, k] - L[:, :r] @ L[k, :r]) / piv
        L[:, r] = col
        resid = resid - col ** 2
        resid[k] = 0.0
        resid[kept] = 0.0
        kept.append(k)
    kept = np.asarray(kept, dtype=np.int64)
    r = kept.size
    return kept, scale[kept], CholFactor(L[kept, :r].copy())


def as_dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def local_solver(M, tol=None):
    """Factor an SPD local matrix dense or sparse depending on its size."""
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if sp.issparse(M) and M.shape[0] <= tol.dense_cutoff:
        M = M.toarray()
    return chol(M, tol)


def maybe_dense(M, tol=None):
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if sp.issparse(M) and M.shape[0] <= tol.dense_cutoff:
        return M.toarray()
    return M
