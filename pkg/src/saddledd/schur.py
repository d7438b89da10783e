"""Dual-space operators: the Schur complement ``S``, its approximation
``M_S = S0 + S1`` and the two-level preconditioner ``M_S1^{-1}``.

With ``K_i`` the local inverse of the primal preconditioner (``A_i^{-1}`` for
ASM, ``D_i (A_i^Rob)^{-1} D_i`` for SORAS), every subdomain carries the local
dual Schur matrix

    T_i = Ct_i + Bt_i K_i Bt_i^T,

and ``S1 = sum_i Rt_i^T T_i Rt_i``. The coarse part of ``M_A`` produces
``S0 = B Z (Z^T A Z)^{-1} Z^T B^T``.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .config import DEFAULT_SOLVER, DEFAULT_TOLERANCES
from .decomposition import Decomposition, SaddleSystem
from .linalg import (CholFactor, PseudoInverse, as_csr, as_dense, gen_sym_eig,
                     select_independent)
from .schwarz import LocalSolver, PrimalPrecond, geneo_threshold, parallel_map

log = logging.getLogger(__name__)


@dataclass
class LocalDualSchur:
    dual: np.ndarray
    weights: np.ndarray          # Dt_i
    T: np.ndarray
    pinv: PseudoInverse
    solver: LocalSolver
    Bt: sp.csr_matrix
    Ct: np.ndarray

    def augmented_solve(self, g):
        """Solve ``T p = g`` through the sparse augmented system

            -[[A_i, (Bt W)^T], [Bt W, -Ct]] [u; p] = [0; g]

        where ``A_i`` is the factored local matrix and ``W`` the SORAS weights
        (identity in ASM mode).
        """
        Aloc = sp.csr_matrix(self.solver.matrix)
        Bt = sp.csr_matrix(self.Bt)
        if self.solver.weights is not None:
            Bt = Bt @ sp.diags(self.solver.weights)
        nloc, k = Aloc.shape[0], Bt.shape[0]
        K = sp.bmat([[Aloc, Bt.T], [Bt, -sp.csr_matrix(self.Ct)]], format="csc")
        rhs = np.concatenate([np.zeros(nloc), np.asarray(g, dtype=float)])
        x = spla.spsolve(-K, rhs)
        return x[nloc:nloc + k]


def build_local_dual_schur(sys: SaddleSystem, dec: Decomposition, MA: PrimalPrecond,
                           tol=None, threads=1) -> List[LocalDualSchur]:
    """Assemble every ``T_i`` densely, column by column through local solves."""
    tol = DEFAULT_TOLERANCES if tol is None else tol

    def local(pair):
        s, solver = pair
        T = s.Ct + solver.matrix_B(s.Bt)
        T = 0.5 * (T + T.T)
        return LocalDualSchur(dual=s.dual, weights=s.Dt, T=T,
                              pinv=PseudoInverse(T, tol.pinv_drop), solver=solver,
                              Bt=s.Bt, Ct=s.Ct)

    return parallel_map(local, list(zip(dec.subdomains, MA.locals)), threads)


def assemble_S1(m, local: List[LocalDualSchur]) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for L in local:
        k = L.dual.size
        rows.append(np.repeat(L.dual, k))
        cols.append(np.tile(L.dual, k))
        vals.append(L.T.ravel())
    if not rows:
        return sp.csr_matrix((m, m))
    return as_csr(sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows),
                                                        np.concatenate(cols))), shape=(m, m)))


@dataclass
class CoarseSpaceS1:
    Z: sp.csc_matrix             # m x dim(W0), columns Rt_i^T Dt_i P_ik (scaled)
    factor: CholFactor           # Cholesky of Z^T S1 Z
    Y: sp.csc_matrix             # S1 Z
    owner: np.ndarray
    eigenvalues: List[np.ndarray] = field(default_factory=list)
    n_inf: List[int] = field(default_factory=list)
    threshold: float = np.inf

    @property
    def dim(self):
        return self.Z.shape[1]


def empty_coarse_S1(m) -> CoarseSpaceS1:
    return CoarseSpaceS1(Z=sp.csc_matrix((m, 0)), factor=CholFactor(np.zeros((0, 0))),
                         Y=sp.csc_matrix((m, 0)), owner=np.zeros(0, dtype=np.int64))


@dataclass
class DualPrecondState:
    """Everything needed to apply ``S0``, ``S1``, ``M_S`` and ``M_S1^{-1}``."""
    sys: SaddleSystem
    dec: Decomposition
    MA: PrimalPrecond
    W: sp.csc_matrix              # B Z = Rt_0^T Bt_0  (m x dim V0)
    dual0: np.ndarray             # support of W (rows of Rt_0)
    local: List[LocalDualSchur]
    S1: sp.csr_matrix
    coarse: CoarseSpaceS1
    threads: int = 1

    @property
    def m(self):
        return self.sys.m

    @property
    def L0(self) -> CholFactor:
        return self.MA.coarse.factor

    @property
    def Bt0(self):
        return as_csr(self.W)[self.dual0]

    def __call__(self, g):
        return apply_MS1_inv(self, g)


# ---------------------------------------------------------------------------
# operators

def apply_S1(state: DualPrecondState, p):
    p = np.asarray(p, dtype=float)
    parts = parallel_map(lambda L: L.T @ p[L.dual], state.local, state.threads)
    out = np.zeros_like(p)
    for L, y in zip(state.local, parts):
        out[L.dual] += y
    return out


def apply_S0(state: DualPrecondState, p):
    if state.W.shape[1] == 0:
        return np.zeros_like(np.asarray(p, dtype=float))
    return state.W @ state.L0.solve(state.W.T @ p)


def apply_MS(state: DualPrecondState, p):
    """``M_S p = S0 p + S1 p``."""
    return apply_S0(state, p) + apply_S1(state, p)


def apply_MS_direct(state: DualPrecondState, p):
    """``M_S p = C p + B M_A^{-1} B^T p``, the unsplit form."""
    sys = state.sys
    return sys.C @ p + sys.B @ state.MA(sys.B.T @ p)


class SchurOperator:
    """``p -> C p + B A^{-1} B^T p`` with the inner solve done by PCG(M_A).

    Counts inner iterations and A-solves across calls.
    """

    def __init__(self, sys: SaddleSystem, MA, inner_tol=None, maxit=None):
        self.sys = sys
        self.MA = MA
        self.inner_tol = DEFAULT_SOLVER.outer_tol * DEFAULT_SOLVER.inner_factor \
            if inner_tol is None else inner_tol
        self.maxit = DEFAULT_SOLVER.maxit if maxit is None else maxit
        self.n_solves = 0
        self.inner_iterations = 0

    def __call__(self, p):
        from .krylov import ConvergenceError, pcg
        p = np.asarray(p, dtype=float)
        rhs = self.sys.B.T @ p
        x, rep = pcg(lambda v: self.sys.A @ v, self.MA, rhs, self.inner_tol, self.maxit)
        if not rep.converged:
            raise ConvergenceError("inner A-solve of the Schur operator", rep)
        self.n_solves += 1
        self.inner_iterations += rep.iterations
        return self.sys.C @ p + self.sys.B @ x


def apply_S(sys: SaddleSystem, MA, p, inner_tol=None):
    return SchurOperator(sys, MA, inner_tol)(p)


# ---------------------------------------------------------------------------
# coarse space of S1 and the two-level preconditioner

def _lift(vectors, rows, weights, m):
    k = vectors.shape[1]
    if k == 0:
        return sp.csc_matrix((m, 0))
    vals = (weights[:, None] * vectors).ravel(order="F")
    M = sp.csc_matrix((vals, (np.tile(rows, k), np.repeat(np.arange(k), rows.size))),
                      shape=(m, k))
    M.eliminate_zeros()
    return M


def local_geneo_pencil(state: DualPrecondState, i: int):
    """Left and right matrices of the dual GenEO pencil of subdomain ``i``:

        Dt_i (Rt_i S1 Rt_i^T) Dt_i   and   T_i.
    """
    L = state.local[i]
    S1_loc = as_dense(state.S1[L.dual][:, L.dual])
    left = L.weights[:, None] * S1_loc * L.weights[None, :]
    return left, L.T


def local_left_from_neighbors(state: DualPrecondState, i: int):
    """Same left matrix as :func:`local_geneo_pencil`, summed over ``O(i)``."""
    L = state.local[i]
    pos = np.full(state.m, -1, dtype=np.int64)
    pos[L.dual] = np.arange(L.dual.size)
    acc = np.zeros((L.dual.size, L.dual.size))
    for j in state.dec.neighbors[i]:
        Lj = state.local[j]
        loc = pos[Lj.dual]
        inside = loc >= 0
        if inside.any():
            acc[np.ix_(loc[inside], loc[inside])] += Lj.T[np.ix_(inside, inside)]
    return L.weights[:, None] * acc * L.weights[None, :]


def build_geneo_S1(state: DualPrecondState, dec: Decomposition, tau_S1: float,
                   tol=None) -> CoarseSpaceS1:
    """Solve the dual pencil on every subdomain, keep ``lambda > 1 / tau_S1``
    (plus the kernel of ``T_i``), lift as ``Rt_i^T Dt_i P_ik`` and remove
    dependent columns in the S1 inner product."""
    tol = DEFAULT_TOLERANCES if tol is None else tol
    thr = geneo_threshold(tau_S1)

    def local(i):
        left = local_left_from_neighbors(state, i)
        T = state.local[i].T
        if not np.any(T):
            log.info("subdomain %d: zero dual Schur matrix, no coarse vectors", i)
            return np.zeros(0), np.zeros((T.shape[0], 0)), 0
        res = gen_sym_eig(left, T, tol.eig_drop)
        sel = res.vectors[:, res.values > thr * (1 + tol.select_margin)]
        n_inf = 0
        if tau_S1 > 0:
            sel = np.hstack([sel, res.inf_vectors])
            n_inf = res.inf_vectors.shape[1]
        return res.values, sel, n_inf

    out = parallel_map(local, range(dec.N), state.threads)
    blocks, owner, eigs, n_inf = [], [], [], []
    for i, (vals, sel, ninf) in enumerate(out):
        L = state.local[i]
        blocks.append(_lift(sel, L.dual, L.weights, state.m))
        owner += [i] * sel.shape[1]
        eigs.append(vals)
        n_inf.append(ninf)
    m = state.m
    Z = sp.hstack(blocks, format="csc") if blocks else sp.csc_matrix((m, 0))
    if Z.shape[1] == 0:
        cs = empty_coarse_S1(m)
        cs.eigenvalues, cs.n_inf, cs.threshold = eigs, n_inf, thr
        return cs
    Y = sp.csc_matrix(state.S1 @ Z)
    G = as_dense(Z.T @ Y)
    kept, scale, factor = select_independent(0.5 * (G + G.T), tol.coarse_drop)
    Dsc = sp.diags(scale)
    return CoarseSpaceS1(Z=sp.csc_matrix(Z[:, kept] @ Dsc), factor=factor,
                         Y=sp.csc_matrix(Y[:, kept] @ Dsc),
                         owner=np.asarray(owner, dtype=np.int64)[kept],
                         eigenvalues=eigs, n_inf=n_inf, threshold=thr)


def apply_M1_inv(state: DualPrecondState, g):
    """One-level part ``sum_i Rt_i^T Dt_i T_i^+ Dt_i Rt_i g``."""
    g = np.asarray(g, dtype=float)
    parts = parallel_map(lambda L: L.weights * L.pinv(L.weights * g[L.dual]),
                         state.local, state.threads)
    out = np.zeros_like(g)
    for L, y in zip(state.local, parts):
        out[L.dual] += y
    return out


def apply_MS1_inv(state: DualPrecondState, g):
    """``Z G^{-1} Z^T g + (I - P0) M1^{-1} (I - P0^T) g`` with
    ``P0 = Z G^{-1} Z^T S1`` and ``G = Z^T S1 Z``."""
    g = np.asarray(g, dtype=float)
    c = state.coarse
    if c.dim == 0:
        return apply_M1_inv(state, g)
    coarse = c.Z @ c.factor.solve(c.Z.T @ g)
    h = g - c.Y @ c.factor.solve(c.Z.T @ g)          # (I - P0^T) g
    v = apply_M1_inv(state, h)
    v = v - c.Z @ c.factor.solve(c.Y.T @ v)          # (I - P0) v
    return coarse + v


def apply_P0(state: DualPrecondState, x):
    c = state.coarse
    if c.dim == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    return c.Z @ c.factor.solve(c.Y.T @ x)


def build_dual_state(sys: SaddleSystem, dec: Decomposition, MA: PrimalPrecond,
                     tau_S1: Optional[float] = None, tol=None, threads=1) -> DualPrecondState:
    """Local dual Schur matrices, ``S0`` data, ``S1`` and its coarse space.

    ``tau_S1=None`` uses ``1 / k0``.
    """
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if dec.neighbors is None:
        from .decomposition import compute_k0_and_neighbors
        compute_k0_and_neighbors(dec)
    local = build_local_dual_schur(sys, dec, MA, tol, threads)
    S1 = assemble_S1(sys.m, local)
    W = sp.csc_matrix(sys.B @ MA.coarse.Z)
    dual0 = np.flatnonzero(np.diff(as_csr(W).indptr))
    state = DualPrecondState(sys=sys, dec=dec, MA=MA, W=W, dual0=dual0, local=local,
                             S1=S1, coarse=empty_coarse_S1(sys.m), threads=threads)
    if tau_S1 is None:
        tau_S1 = 1.0 / dec.k0
    state.coarse = build_geneo_S1(state, dec, tau_S1, tol)
    return state


# ---------------------------------------------------------------------------
# analysis helpers

def alpha_bound(k0, tau_S1):
    return max(1.0, k0 / tau_S1) if tau_S1 > 0 else np.inf


def estimate_cR(state: DualPrecondState, dec: Decomposition, tol=None):
    """Largest generalized Rayleigh quotient of the local continuity pencils.

    Returns ``np.inf`` when some ``T_i`` has a kernel direction on which the
    left matrix does not vanish.
    """
    tol = DEFAULT_TOLERANCES if tol is None else tol
    best = 0.0
    for i in range(dec.N):
        left = local_left_from_neighbors(state, i)
        res = gen_sym_eig(left, state.local[i].T, tol.eig_drop)
        if res.inf_vectors.shape[1]:
            return np.inf
        if res.values.size:
            best = max(best, float(res.values[-1]))
    return best


def verify_stable_decomposition(state: DualPrecondState, p):
    """``(b(P, P), a(p, p))`` for the decomposition ``P_i = Rt_i p``.

    ``b`` sums the local quadratic forms, ``a`` uses the assembled S1.
    """
    p = np.asarray(p, dtype=float)
    b = sum(float(p[L.dual] @ (L.T @ p[L.dual])) for L in state.local)
    a = float(p @ (state.S1 @ p))
    return b, a


def recombine(state: DualPrecondState, parts):
    """``sum_i Rt_i^T Dt_i P_i``."""
    out = np.zeros(state.m)
    for L, P in zip(state.local, parts):
        out[L.dual] += L.weights * P
    return out
