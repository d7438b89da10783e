"""Preconditioned conjugate gradients and the block saddle point solver.

Convergence is measured by the preconditioned residual norm
``sqrt(r^T M^{-1} r)`` relative to ``sqrt(b^T M^{-1} b)``.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from .config import DEFAULT_SOLVER

log = logging.getLogger(__name__)


@dataclass
class PcgReport:
    iterations: int = 0
    final_relres: float = 0.0
    residual_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lanczos_cond_estimate: float = 1.0
    converged: bool = True
    lanczos_extremes: tuple = (np.nan, np.nan)

    def to_dict(self):
        return {"iterations": int(self.iterations),
                "final_relres": float(self.final_relres),
                "lanczos_cond_estimate": float(self.lanczos_cond_estimate),
                "lanczos_extremes": [float(v) for v in self.lanczos_extremes],
                "converged": bool(self.converged),
                "residual_history": [float(v) for v in self.residual_history]}


class ConvergenceError(RuntimeError):
    """A Krylov stage did not reach its tolerance."""

    def __init__(self, stage, report: PcgReport):
        self.stage = stage
        self.report = report
        super().__init__(f"{stage}: no convergence after {report.iterations} iterations "
                         f"(relative residual {report.final_relres:.3e})")


class IndefiniteOperatorError(ArithmeticError):
    """``p^T A p <= 0`` or ``r^T M^{-1} r < 0`` inside CG."""


def _lanczos_extremes(alphas, betas):
    """Extreme eigenvalues of the CG Lanczos tridiagonal matrix."""
    k = len(alphas)
    if k == 0:
        return np.nan, np.nan
    a = np.asarray(alphas)
    b = np.asarray(betas[:k - 1])
    diag = 1.0 / a
    diag[1:] += b / a[:-1]
    off = np.sqrt(np.maximum(b, 0.0)) / a[:-1]
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    w = np.linalg.eigvalsh(T)
    return float(w[0]), float(w[-1])


def _finish(x, hist, alphas, betas, tol, it):
    lo, hi = _lanczos_extremes(alphas, betas)
    cond = hi / lo if np.isfinite(lo) and lo > 0 else (1.0 if not alphas else np.inf)
    rel = hist[-1] if hist else 0.0
    return x, PcgReport(iterations=it, final_relres=float(rel),
                        residual_history=np.asarray(hist), lanczos_cond_estimate=float(cond),
                        converged=bool(rel <= tol), lanczos_extremes=(lo, hi))


def _start(apply_op, apply_prec, b, x0):
    b = np.asarray(b, dtype=float)
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply_op(x)
    return b, x, r


def pcg(apply_op: Callable, apply_prec: Optional[Callable], b, tol=1e-8, maxit=None,
        x0=None):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    apply_op, apply_prec : callable
        Symmetric positive (semi)definite operator and SPD preconditioner.
        ``apply_prec=None`` means no preconditioning.
    b : ndarray
        Right-hand side.
    tol : float
        Relative preconditioned residual tolerance.
    maxit : int, optional
        Iteration cap; on reaching it the report has ``converged=False``.

    Returns
    -------
    x : ndarray
    report : PcgReport
    """
    maxit = DEFAULT_SOLVER.maxit if maxit is None else maxit
    prec = apply_prec if apply_prec is not None else (lambda v: v.copy())
    b, x, r = _start(apply_op, prec, b, x0)
    zb = prec(b)
    bnorm = np.sqrt(max(float(b @ zb), 0.0))
    if bnorm == 0.0:
        return np.zeros_like(b), PcgReport(residual_history=np.zeros(1))
    z = prec(r) if x0 is not None else zb
    rz = float(r @ z)
    if rz < 0:
        raise IndefiniteOperatorError("preconditioner is not positive definite")
    hist = [np.sqrt(rz) / bnorm]
    alphas, betas = [], []
    p = z.copy()
    it = 0
    while hist[-1] > tol and it < maxit:
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0:
            raise IndefiniteOperatorError(f"p^T A p = {pq:.3e} at iteration {it}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = prec(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise IndefiniteOperatorError("preconditioner is not positive definite")
        beta = rz_new / rz
        alphas.append(alpha)
        betas.append(beta)
        rz = rz_new
        p = z + beta * p
        it += 1
        hist.append(np.sqrt(rz) / bnorm)
    return _finish(x, hist, alphas, betas, tol, it)


def fcg(apply_op: Callable, apply_prec: Optional[Callable], b, tol=1e-8, maxit=None,
        x0=None, mmax=None):
    """Flexible conjugate gradients.

    Each new direction is A-orthogonalized against the last ``mmax``
    directions, which keeps the method robust when the operator or the
    preconditioner is applied inexactly (for instance through inner iterative
    solves). With exact linear operators it reproduces :func:`pcg`.
    The condition estimate is the Lanczos estimate built from the step
    lengths, which is only indicative in the inexact case.
    """
    maxit = DEFAULT_SOLVER.maxit if maxit is None else maxit
    mmax = DEFAULT_SOLVER.fcg_mmax if mmax is None else mmax
    prec = apply_prec if apply_prec is not None else (lambda v: v.copy())
    b, x, r = _start(apply_op, prec, b, x0)
    zb = prec(b)
    bnorm = np.sqrt(max(float(b @ zb), 0.0))
    if bnorm == 0.0:
        return np.zeros_like(b), PcgReport(residual_history=np.zeros(1))
    z = prec(r) if x0 is not None else zb
    rz = float(r @ z)
    if rz < 0:
        raise IndefiniteOperatorError("preconditioner is not positive definite")
    hist = [np.sqrt(rz) / bnorm]
    alphas, betas = [], []
    P, Q, PQ = [], [], []
    it = 0
    while hist[-1] > tol and it < maxit:
        p = z.copy()
        for pj, qj, dj in zip(P, Q, PQ):
            p -= (float(z @ qj) / dj) * pj
        q = apply_op(p)
        pq = float(p @ q)
        if pq <= 0:
            raise IndefiniteOperatorError(f"p^T A p = {pq:.3e} at iteration {it}")
        alpha = float(p @ r) / pq
        x += alpha * p
        r -= alpha * q
        P.append(p)
        Q.append(q)
        PQ.append(pq)
        if len(P) > mmax:
            P.pop(0)
            Q.pop(0)
            PQ.pop(0)
        z = prec(r)
        rz_new = float(r @ z)
        if rz_new < 0:
            raise IndefiniteOperatorError("preconditioner is not positive definite")
        alphas.append(alpha)
        betas.append(rz_new / rz)
        rz = rz_new
        it += 1
        hist.append(np.sqrt(rz) / bnorm)
    return _finish(x, hist, alphas, betas, tol, it)


# ---------------------------------------------------------------------------
# block solver

@dataclass
class SaddleSolution:
    U: np.ndarray
    P: np.ndarray
    reports: Dict[str, PcgReport]
    total_A_solves: int
    block_relres: float = 0.0
    refinements: int = 0

    def to_dict(self):
        return {"reports": {k: v.to_dict() for k, v in self.reports.items()},
                "total_A_solves": int(self.total_A_solves),
                "block_relres": float(self.block_relres),
                "refinements": int(self.refinements)}


def block_residual(sys, U, P, F_U, F_P):
    """``(F_U - A U - B^T P, F_P - B U + C P)``."""
    rU = F_U - sys.A @ U - sys.B.T @ P
    rP = F_P - sys.B @ U + sys.C @ P
    return rU, rP


def _stage(name, solver, op, prec, b, tol, maxit, **kw):
    x, rep = solver(op, prec, b, tol, maxit, **kw)
    if not rep.converged:
        raise ConvergenceError(name, rep)
    return x, rep


def _merge(total, rep):
    if total is None:
        return rep
    return PcgReport(iterations=total.iterations + rep.iterations,
                     final_relres=rep.final_relres,
                     residual_history=np.concatenate([total.residual_history,
                                                      rep.residual_history]),
                     lanczos_cond_estimate=rep.lanczos_cond_estimate,
                     converged=rep.converged, lanczos_extremes=rep.lanczos_extremes)


def solve_saddle(sys, precs, F_U, F_P, tol=None, inner_tol=None, flexible=None,
                 maxit=None, max_refine=None, stage_factor=None) -> SaddleSolution:
    """Solve ``[[A, B^T], [B, -C]] [U; P] = [F_U; F_P]``.

    Each pass runs the five block steps

    1. ``A G_U = F_U`` by PCG with ``M_A^{-1}``;
    2. ``G_P = F_P - B G_U``;
    3. ``(C + B A^{-1} B^T) P = -G_P`` by (flexible) PCG with ``N_S^{-1}``,
       the operator applying ``A^{-1}`` by inner PCG at ``inner_tol``;
    4. ``G_U = F_U - B^T P``;
    5. ``A U = G_U`` by PCG with ``M_A^{-1}``.

    Because step 3 only has inexact ``A^{-1}``, passes are repeated on the
    block residual (iterative refinement) until the relative block residual
    is at most ``tol`` or ``max_refine`` extra passes were spent.

    Parameters
    ----------
    sys : SaddleSystem
    precs : SaddlePreconditioners
        Bundle with ``MA`` (primal) and ``NS`` (dual) preconditioners.
    F_U, F_P : ndarray
    tol : float
        Target for ``||block residual|| / ||(F_U, F_P)||``. In each pass step 3
        is asked for ``max(tol', inner_tol)`` and steps 1 and 5 for
        ``stage_factor * tol'``, where ``tol'`` is ``tol`` rescaled to the
        norm of the pass residual.

    Raises
    ------
    ConvergenceError
        Naming the step that failed.
    """
    from .schur import SchurOperator
    d = DEFAULT_SOLVER
    tol = d.outer_tol if tol is None else tol
    inner_tol = d.inner_factor * tol if inner_tol is None else inner_tol
    flexible = d.flexible if flexible is None else flexible
    maxit = d.maxit if maxit is None else maxit
    max_refine = d.max_refine if max_refine is None else max_refine
    stage_tol = (d.stage_factor if stage_factor is None else stage_factor) * tol
    outer = fcg if flexible else pcg

    F_U = np.asarray(F_U, dtype=float)
    F_P = np.asarray(F_P, dtype=float)
    if F_U.shape != (sys.n,) or F_P.shape != (sys.m,):
        raise ValueError("right-hand side has the wrong shape")
    U = np.zeros(sys.n)
    P = np.zeros(sys.m)
    fnorm = np.sqrt(F_U @ F_U + F_P @ F_P)
    reports = {}
    if fnorm == 0.0:
        zero = PcgReport(residual_history=np.zeros(1))
        return SaddleSolution(U, P, {"step1": zero, "step3": zero, "step5": zero}, 0)

    def opA(v):
        return sys.A @ v

    MA = precs.MA
    if sys.m == 0:
        U, rep = _stage("step 1 (A G_U = F_U)", pcg, opA, MA, F_U, stage_tol, maxit)
        rU, _ = block_residual(sys, U, P, F_U, F_P)
        return SaddleSolution(U, P, {"step1": rep}, 1,
                              block_relres=float(np.linalg.norm(rU) / fnorm))

    schur = SchurOperator(sys, MA, inner_tol=inner_tol, maxit=maxit)
    n_solves = 0
    rU, rP = F_U, F_P
    rel = np.inf
    for k in range(max_refine + 1):
        # tolerances of this pass, relative to its own right-hand side
        gain = min(1.0, fnorm / np.sqrt(rU @ rU + rP @ rP))
        # the Schur operator is only inner_tol accurate: ask step 3 for no
        # more than that and leave the remaining digits to the next pass
        tol3 = min(max(tol * gain, inner_tol), 0.5)
        tol15 = min(stage_tol * gain, 0.5)
        GU, rep1 = _stage("step 1 (A G_U = F_U)", pcg, opA, MA, rU, tol15, maxit)
        GP = rP - sys.B @ GU
        dP, rep3 = _stage("step 3 (Schur solve with N_S)", outer, schur, precs.NS, -GP,
                          tol3, maxit)
        GU = rU - sys.B.T @ dP
        dU, rep5 = _stage("step 5 (A U = G_U)", pcg, opA, MA, GU, tol15, maxit)
        n_solves += 2
        U += dU
        P += dP
        for name, rep in (("step1", rep1), ("step3", rep3), ("step5", rep5)):
            reports[name] = _merge(reports.get(name), rep)
        rU, rP = block_residual(sys, U, P, F_U, F_P)
        rel = float(np.sqrt(rU @ rU + rP @ rP) / fnorm)
        log.info("pass %d: block residual %.3e, step 3 iterations %d", k, rel,
                 rep3.iterations)
        if rel <= tol:
            break
    sol = SaddleSolution(U, P, reports, n_solves + schur.n_solves, block_relres=rel,
                         refinements=k)
    if rel > tol:
        raise ConvergenceError("block residual after refinement",
                               PcgReport(iterations=k + 1, final_relres=rel, converged=False))
    return sol


def write_residual_csv(reports: Dict[str, PcgReport], path):
    """One row per (stage, iteration, relative residual)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "iteration", "relres"])
        for name, rep in reports.items():
            for k, v in enumerate(rep.residual_history):
                w.writerow([name, k, repr(float(v))])
