"""Two-level Schwarz preconditioners for the SPD block ``A``.

``asm2`` is the additive two-level method

    M_A^{-1} = R_0^T (R_0 A R_0^T)^{-1} R_0 + sum_i R_i^T (R_i A R_i^T)^{-1} R_i

and ``soras`` replaces each local inverse by ``D_i (A_i^Rob)^{-1} D_i``.
The coarse space is spanned by extensions by zero of local eigenvectors
(GenEO).
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .config import DEFAULT_TOLERANCES
from .decomposition import Decomposition, SaddleSystem
from .linalg import CholFactor, as_dense, chol, gen_sym_eig, local_solver, select_independent

log = logging.getLogger(__name__)


def parallel_map(fn, items, threads=1):
    """Map over subdomains, optionally with a thread pool; order is preserved."""
    if threads is None or threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


@dataclass
class CoarseSpaceA:
    Z: sp.csc_matrix                 # n x dim(V0), columns R_i^T D_i p
    factor: CholFactor               # Cholesky of Z^T A Z
    owner: np.ndarray                # subdomain owning each column
    eigenvalues: List[np.ndarray] = field(default_factory=list)
    threshold: float = np.inf

    @property
    def dim(self):
        return self.Z.shape[1]


def _lift_columns(vectors, rows, weights, n):
    k = vectors.shape[1]
    if k == 0:
        return sp.csc_matrix((n, 0))
    vals = (weights[:, None] * vectors).ravel(order="F")
    r = np.tile(rows, k)
    c = np.repeat(np.arange(k), rows.size)
    M = sp.csc_matrix((vals, (r, c)), shape=(n, k))
    M.eliminate_zeros()
    return M


def _factor_coarse(Z, A, drop):
    """Drop dependent columns (Gram-Schmidt in the A inner product), then factor."""
    if Z.shape[1] == 0:
        return Z, np.zeros(0, dtype=np.int64), CholFactor(np.zeros((0, 0)))
    G = as_dense(Z.T @ (A @ Z))
    G = 0.5 * (G + G.T)
    kept, scale, factor = select_independent(G, drop)
    return sp.csc_matrix(Z[:, kept] @ sp.diags(scale)), kept, factor


def geneo_threshold(tau):
    """Eigenvalue threshold ``1 / tau``; ``tau = 0`` disables the coarse space."""
    return np.inf if tau <= 0 else 1.0 / tau


def build_geneo_A(sys: SaddleSystem, dec: Decomposition, tau_A: float, tol=None,
                  threads=1) -> CoarseSpaceA:
    """Per subdomain solve ``D_i A_i D_i p = lambda A_i^neu p`` and keep the
    eigenvectors with ``lambda > 1 / tau_A`` (kernel directions of the
    Neumann matrix count as ``lambda = +inf``)."""
    tol = DEFAULT_TOLERANCES if tol is None else tol
    thr = geneo_threshold(tau_A)

    def local(s):
        Ai = as_dense(s.A_loc)
        DAD = s.D[:, None] * Ai * s.D[None, :]
        res = gen_sym_eig(DAD, as_dense(s.A_neu), tol.eig_drop)
        sel = res.vectors[:, res.values > thr * (1 + tol.select_margin)]
        if tau_A > 0:
            sel = np.hstack([sel, res.inf_vectors])
        if res.null_vectors.shape[1]:
            log.warning("subdomain %d: %d directions null for both pencil matrices",
                        s.id, res.null_vectors.shape[1])
        return res.values, sel

    out = parallel_map(local, dec.subdomains, threads)
    blocks, owner, eigs = [], [], []
    for s, (vals, sel) in zip(dec, out):
        blocks.append(_lift_columns(sel, s.primal, s.D, sys.n))
        owner += [s.id] * sel.shape[1]
        eigs.append(vals)
    Z = sp.hstack(blocks, format="csc") if blocks else sp.csc_matrix((sys.n, 0))
    Z, kept, factor = _factor_coarse(Z, sys.A, tol.coarse_drop)
    return CoarseSpaceA(Z=Z, factor=factor, owner=np.asarray(owner, dtype=np.int64)[kept],
                        eigenvalues=eigs, threshold=thr)


def empty_coarse_A(n) -> CoarseSpaceA:
    return CoarseSpaceA(Z=sp.csc_matrix((n, 0)), factor=CholFactor(np.zeros((0, 0))),
                        owner=np.zeros(0, dtype=np.int64))


@dataclass
class LocalSolver:
    """``K_i``: the local inverse entering the preconditioner for subdomain i."""
    rows: np.ndarray
    factor: CholFactor
    matrix: object                         # the factored local matrix
    weights: Optional[np.ndarray] = None   # D_i for SORAS, None for ASM

    def __call__(self, r_loc):
        if self.weights is None:
            return self.factor.solve(r_loc)
        w = self.weights if r_loc.ndim == 1 else self.weights[:, None]
        return w * self.factor.solve(w * r_loc)

    def matrix_B(self, Bt):
        """``Bt K_i Bt^T`` as a dense matrix."""
        X = self(as_dense(Bt).T) if Bt.shape[0] else np.zeros((self.rows.size, 0))
        return as_dense(Bt @ X)


def robin_matrix(s, rho):
    """Neumann matrix plus ``rho`` on the diagonal of the interface dofs."""
    A_rob = as_dense(s.A_neu).copy()
    if s.interface is not None and s.interface.size:
        A_rob[s.interface, s.interface] += rho
    return A_rob


@dataclass
class PrimalPrecond:
    mode: str
    n: int
    locals: List[LocalSolver]
    coarse: CoarseSpaceA
    threads: int = 1

    @property
    def dim_V0(self):
        return self.coarse.dim

    def coarse_part(self, r):
        c = self.coarse
        if c.dim == 0:
            return np.zeros_like(r)
        return c.Z @ c.factor.solve(c.Z.T @ r)

    def __call__(self, r):
        return apply_MA_inv(self, r)


def build_primal_precond(sys: SaddleSystem, dec: Decomposition, mode="asm2",
                         tau_A=0.5, rho_robin=1.0, coarse=None, tol=None,
                         threads=1) -> PrimalPrecond:
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if mode not in ("asm2", "soras"):
        raise ValueError(f"unknown mode {mode!r}")

    def local(s):
        if mode == "asm2":
            return LocalSolver(s.primal, local_solver(s.A_loc, tol), s.A_loc)
        A_rob = robin_matrix(s, rho_robin)
        return LocalSolver(s.primal, chol(A_rob, tol), A_rob, weights=s.D)

    locs = parallel_map(local, dec.subdomains, threads)
    if coarse is None:
        coarse = build_geneo_A(sys, dec, tau_A, tol, threads)
    return PrimalPrecond(mode=mode, n=sys.n, locals=locs, coarse=coarse, threads=threads)


def apply_MA_inv(P: PrimalPrecond, r):
    r = np.asarray(r, dtype=float)
    if r.shape[0] != P.n:
        raise ValueError("residual has the wrong length")
    parts = parallel_map(lambda L: L(r[L.rows]), P.locals, P.threads)
    out = P.coarse_part(r)
    for L, z in zip(P.locals, parts):
        out[L.rows] += z
    return out


def spectrum_MA(sys: SaddleSystem, P: PrimalPrecond, tol=None):
    """``(lambda_min, lambda_max)`` of ``M_A^{-1} A`` by dense assembly."""
    from .problems import oracle_assemble, preconditioned_spectrum
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if sys.n > tol.oracle_cap:
        raise ValueError("spectrum_MA is a dense oracle; problem too large")
    Minv = oracle_assemble(P, sys.n)
    w = preconditioned_spectrum(sys.A, Minv)
    return float(w[0]), float(w[-1])
