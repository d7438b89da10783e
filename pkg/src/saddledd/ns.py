"""The preconditioner ``N_S = S0 + M_S1`` applied by a Sherman-Morrison
(Woodbury) correction.

Writing ``S0 = U U^T`` with ``U = W L0^{-T}``, ``W = B Z`` and ``L0 L0^T = Z^T A Z``,

    N_S^{-1} G = M_S1^{-1} (G - U y),   M_A0 y = U^T M_S1^{-1} G,
    M_A0 = I + U^T M_S1^{-1} U.

``M_A0`` has the size of the primal coarse space; it is assembled once and
factored by dense Cholesky.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import CholFactor, as_csr, as_dense, chol, column_support
from .schur import DualPrecondState, apply_M1_inv, apply_MS1_inv, apply_S0


@dataclass
class MA0System:
    matrix: np.ndarray
    factor: CholFactor
    assembly_time: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.matrix.shape[0]


def _U_T(state, x):
    """``L0^{-1} W^T x`` (``x`` vector or block)."""
    return state.L0.solve_L(state.W.T @ x)


def _U(state, y):
    """``W L0^{-T} y``."""
    return state.W @ state.L0.solve_LT(y)


def _coupling_local(state: DualPrecondState):
    """Per subdomain, the block ``Dt_i Rt_i (I - P0^T) W`` restricted to its
    nonzero columns.

    ``(I - P0^T) W = W - Y H`` with ``Y = S1 Z`` and ``H = G^{-1} Z^T W``.
    ``Z^T W`` is a product of two coarse bases made of local vectors, so it
    is sparse; only the rows of ``H`` matching the nonzero columns of
    ``Rt_i Y`` (at most a few neighbours' coarse vectors) enter subdomain ``i``.
    """
    c = state.coarse
    Wr = as_csr(state.W)
    H = None
    if c.dim:
        ZtW = as_dense(c.Z.T @ state.W)
        H = c.factor.solve(ZtW)
        Yr = as_csr(c.Y)
    blocks = []
    for L in state.local:
        Wi = Wr[L.dual]
        cols = column_support(Wi)
        Xi = as_dense(Wi[:, cols]) if cols.size else np.zeros((L.dual.size, 0))
        if H is not None:
            Yi = Yr[L.dual]
            ycols = column_support(Yi)
            if ycols.size:
                Hi = H[ycols]
                hcols = np.flatnonzero(np.any(Hi != 0, axis=0))
                allc = np.union1d(cols, hcols)
                X = np.zeros((L.dual.size, allc.size))
                X[:, np.searchsorted(allc, cols)] = Xi
                X -= as_dense(Yi[:, ycols]) @ Hi[:, allc]
                cols, Xi = allc, X
        blocks.append((cols, L.weights[:, None] * Xi))
    return blocks, H


def assemble_MA0(state: DualPrecondState) -> MA0System:
    """``M_A0 = I + L0^{-1} (W^T M_S1^{-1} W) L0^{-T}`` by local products.

    ``W^T M_S1^{-1} W = (Z^T W)^T G^{-1} (Z^T W) + sum_i X_i^T T_i^+ X_i`` where
    ``X_i`` are the local blocks of :func:`_coupling_local`, each touching a
    bounded set of coarse columns.
    """
    t0 = time.perf_counter()
    n0 = state.W.shape[1]
    K = np.zeros((n0, n0))
    blocks, H = _coupling_local(state)
    if H is not None:
        ZtW = as_dense(state.coarse.Z.T @ state.W)
        K += ZtW.T @ H
    widths = []
    for L, (cols, X) in zip(state.local, blocks):
        widths.append(int(cols.size))
        if cols.size:
            K[np.ix_(cols, cols)] += X.T @ L.pinv(X)
    K = 0.5 * (K + K.T)
    M = np.eye(n0) + state.L0.solve_L(state.L0.solve_L(K).T).T if n0 else np.zeros((0, 0))
    M = 0.5 * (M + M.T)
    factor = chol(M)
    return MA0System(matrix=M, factor=factor, assembly_time=time.perf_counter() - t0,
                     stats={"max_local_columns": max(widths, default=0)})


def assemble_MA0_dense(state: DualPrecondState) -> np.ndarray:
    """Naive assembly: apply ``M_S1^{-1}`` to every column of ``U``."""
    n0 = state.W.shape[1]
    if n0 == 0:
        return np.zeros((0, 0))
    U = _U(state, np.eye(n0))
    MU = np.column_stack([apply_MS1_inv(state, U[:, k]) for k in range(n0)])
    return np.eye(n0) + U.T @ MU


def apply_NS_inv(state: DualPrecondState, ma0: MA0System, g):
    """Four-step application of ``N_S^{-1}``."""
    g = np.asarray(g, dtype=float)
    g1 = apply_MS1_inv(state, g)                   # 1. G' = M_S1^{-1} G
    if ma0.dim == 0:
        return g1
    rhs = _U_T(state, g1)                          # 2. L0^{-1} Bt0^T Rt0 G'
    y = ma0.factor.solve(rhs)                      # 3. M_A0 y = rhs
    return apply_MS1_inv(state, g - _U(state, y))  # 4. P = M_S1^{-1}(G - U y)


class NSPreconditioner:
    def __init__(self, state: DualPrecondState, ma0: MA0System):
        self.state = state
        self.ma0 = ma0

    def __call__(self, g):
        return apply_NS_inv(self.state, self.ma0, g)


def apply_NS(state: DualPrecondState, MS1_dense: np.ndarray, x):
    """``N_S x = S0 x + M_S1 x`` with ``M_S1`` given densely (oracle use)."""
    return apply_S0(state, x) + MS1_dense @ x


def block_system_solve(state: DualPrecondState, MS1_dense: np.ndarray, g):
    """Solve ``[[M_S1, U], [U^T, -I]] [P; y] = [G; 0]`` densely."""
    n0 = state.W.shape[1]
    U = _U(state, np.eye(n0)) if n0 else np.zeros((state.m, 0))
    K = np.block([[MS1_dense, U], [U.T, -np.eye(n0)]])
    x = np.linalg.solve(K, np.concatenate([g, np.zeros(n0)]))
    return x[:state.m]


def check_sparsity_assumptions(state: DualPrecondState):
    """Nonzero-column counts of ``Dt_i Rt_i B^T R_0`` (here ``Dt_i Rt_i W``)
    and ``Dt_i Rt_i S1 Z_S1`` for every subdomain."""
    Wr = as_csr(state.W)
    Yr = as_csr(state.coarse.Y)
    a3, a4 = [], []
    for L in state.local:
        # Dt_i is a positive diagonal, it does not change the column support
        a3.append(int(column_support(Wr[L.dual]).size))
        a4.append(int(column_support(Yr[L.dual]).size))
    return {"primal_coupling_counts": a3, "dual_coupling_counts": a4,
            "primal_coupling_max": max(a3, default=0), "dual_coupling_max": max(a4, default=0),
            "dim_V0": int(state.W.shape[1]), "dim_W0": int(state.coarse.dim)}


def sweep_warning(reports, slack=1):
    """True when the max counts grow across a sweep by more than ``slack``."""
    out = {}
    for key in ("primal_coupling_max", "dual_coupling_max"):
        vals = [r[key] for r in reports]
        out[key] = (max(vals) - min(vals)) > slack if vals else False
    return out


def first_two_terms(state: DualPrecondState):
    """The first two terms of the per-subdomain expansion of
    ``W^T (I - P0) M1^{-1} (I - P0^T) W``, summed over subdomains.

    first:  sum_i W^T Rt_i^T Dt_i T_i^+ Dt_i Rt_i W
    second: -sum_i W^T Rt_i^T Dt_i T_i^+ Dt_i Rt_i P0^T W
    """
    W = as_dense(state.W)
    c = state.coarse
    P0tW = as_dense(c.Y) @ c.factor.solve(as_dense(c.Z.T @ state.W)) if c.dim \
        else np.zeros_like(W)
    first = W.T @ np.column_stack([apply_M1_inv(state, W[:, k]) for k in range(W.shape[1])]) \
        if W.shape[1] else np.zeros((0, 0))
    second = -W.T @ np.column_stack([apply_M1_inv(state, P0tW[:, k])
                                     for k in range(W.shape[1])]) \
        if W.shape[1] else np.zeros((0, 0))
    return first, second


@dataclass
class SaddlePreconditioners:
    """The three setup products: ``M_A^{-1}``, the dual state and ``M_A0``."""
    MA: object
    dual: DualPrecondState
    ma0: MA0System
    times: dict = field(default_factory=dict)

    @property
    def NS(self):
        return NSPreconditioner(self.dual, self.ma0)


def build_preconditioners(sys, dec, mode="asm2", tau_A=0.5, tau_S1=None, rho_robin=1.0,
                          tol=None, threads=1) -> SaddlePreconditioners:
    """Run the setup in order: primal preconditioner, then the dual
    preconditioner and its coarse space, then the assembly and factorization
    of ``M_A0``."""
    from .schur import build_dual_state
    from .schwarz import build_primal_precond
    times = {}
    t = time.perf_counter()
    MA = build_primal_precond(sys, dec, mode=mode, tau_A=tau_A, rho_robin=rho_robin,
                              tol=tol, threads=threads)
    times["setup_MA"] = time.perf_counter() - t
    t = time.perf_counter()
    dual = build_dual_state(sys, dec, MA, tau_S1=tau_S1, tol=tol, threads=threads)
    times["setup_MS1"] = time.perf_counter() - t
    t = time.perf_counter()
    ma0 = assemble_MA0(dual)
    times["setup_MA0"] = time.perf_counter() - t
    return SaddlePreconditioners(MA=MA, dual=dual, ma0=ma0, times=times)


__all__ = ["SaddlePreconditioners", "build_preconditioners", "MA0System", "assemble_MA0",
           "assemble_MA0_dense", "apply_NS_inv", "apply_NS", "NSPreconditioner",
           "block_system_solve", "check_sparsity_assumptions", "sweep_warning",
           "first_two_terms"]
