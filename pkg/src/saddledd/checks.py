"""Numerical checks of the structural identities and spectral bounds.

Every check returns a :class:`CheckResult`; the ``verify`` command prints
them as a table and the test-suite asserts on them.
"""
from dataclasses import asdict, dataclass

import numpy as np

from .decomposition import (C_reassembly_defect, dual_pou_defect, primal_pou_defect,
                            support_mismatch)
from .ns import (MA0System, apply_NS, apply_NS_inv, assemble_MA0_dense,
                 check_sparsity_assumptions)
from .problems import oracle_assemble, preconditioned_spectrum
from .schur import (alpha_bound, apply_MS, apply_MS1_inv, apply_MS_direct,
                    verify_stable_decomposition)


@dataclass
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    detail: str = ""

    def to_dict(self):
        d = asdict(self)
        d["value"] = float(d["value"])
        d["limit"] = float(d["limit"])
        d["passed"] = bool(d["passed"])
        return d

    def line(self):
        flag = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{flag}  {self.name:<28} {self.value:.3e} <= {self.limit:.1e}{extra}"


def _rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb > 0 else 1.0)


def check_pou(dec, tol=1e-15):
    p, d = primal_pou_defect(dec), dual_pou_defect(dec)
    return [CheckResult("primal partition of unity", p, tol, p <= tol),
            CheckResult("dual partition of unity", d, tol, d <= tol)]


def check_support(sys, dec):
    k = support_mismatch(sys, dec)
    return CheckResult("dual support identity", k, 0, k == 0, "mismatched entries")


def check_C(sys, dec, tol=1e-12):
    v = C_reassembly_defect(sys, dec)
    return CheckResult("local C reassembly", v, tol, v <= tol, "relative max norm")


def check_MS_paths(state, probes=100, tol=1e-10, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        p = rng.standard_normal(state.m)
        worst = max(worst, _rel(apply_MS(state, p), apply_MS_direct(state, p)))
    return CheckResult("M_S split vs direct", worst, tol, worst <= tol, f"{probes} probes")


def check_stable_decomposition(state, vectors=100, tol=1e-12, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(vectors):
        b, a = verify_stable_decomposition(state, rng.standard_normal(state.m))
        worst = max(worst, abs(b - a) / abs(a))
    return CheckResult("stable decomposition c_T=1", worst, tol, worst <= tol,
                       f"{vectors} vectors")


def dual_spectrum(state):
    """Eigenvalues of the pencil ``(S1, M_S1)`` by dense assembly."""
    Minv = oracle_assemble(lambda g: apply_MS1_inv(state, g), state.m)
    return preconditioned_spectrum(state.S1.toarray(), Minv)


def check_alpha(state, tau_S1, lower_tol=1e-8, upper_tol=1e-6):
    """All eigenvalues of ``(S1, M_S1)`` in ``[1 - lower_tol, alpha (1 + upper_tol)]``.

    With ``tau_S1 = 0`` (no dual coarse space) the one-level bound ``k0`` is used.
    """
    k0 = state.dec.k0
    alpha = float(k0) if tau_S1 == 0 else alpha_bound(k0, tau_S1)
    w = dual_spectrum(state)
    ok = w[0] >= 1 - lower_tol and w[-1] <= alpha * (1 + upper_tol)
    return CheckResult("dual spectral bound", float(w[-1]), alpha * (1 + upper_tol), bool(ok),
                       f"lambda in [{w[0]:.12f}, {w[-1]:.6f}], alpha={alpha:g}, "
                       f"dim W0={state.coarse.dim}")


def check_woodbury(state, ma0: MA0System, probes=100, tol=1e-9, seed=2):
    """``||N_S (N_S^{-1} g) - g|| <= tol ||g||`` with a dense ``M_S1``."""
    MS1 = np.linalg.inv(oracle_assemble(lambda g: apply_MS1_inv(state, g), state.m))
    MS1 = 0.5 * (MS1 + MS1.T)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        g = rng.standard_normal(state.m)
        worst = max(worst, _rel(apply_NS(state, MS1, apply_NS_inv(state, ma0, g)), g))
    return CheckResult("Sherman-Morrison round trip", worst, tol, worst <= tol,
                       f"{probes} probes")


def check_MA0(state, ma0: MA0System, tol=1e-9):
    dense = assemble_MA0_dense(state)
    v = float(np.abs(ma0.matrix - dense).max()) if dense.size else 0.0
    return CheckResult("M_A0 local vs naive", v, tol, v <= tol, f"dim {dense.shape[0]}")


def check_block_solution(sys, sol, F_U, F_P, tol=1e-8, dense_tol=1e-6):
    from .problems import DenseOracle
    out = [CheckResult("block residual", sol.block_relres, tol, sol.block_relres <= tol)]
    if sys.n + sys.m <= 5000:
        x = np.concatenate(DenseOracle(sys).solve(F_U, F_P))
        y = np.concatenate([sol.U, sol.P])
        v = _rel(y, x)
        out.append(CheckResult("match dense solve", v, dense_tol, v <= dense_tol))
    return out


def assumption_report(state):
    return check_sparsity_assumptions(state)


def check_coupling_locality(state):
    """Nonzero-column counts of the coupling blocks against their structural bound.

    A column of ``W = B Z`` owned by subdomain ``j`` can only reach the dual
    set of ``i`` when the dual sets of ``i`` and ``j`` meet; a column of
    ``S1 Z_S1`` owned by ``j`` only when ``j`` is a (two-step) neighbour of
    ``i``. The counts are therefore bounded by the coarse columns owned by
    those neighbours, independently of the number of subdomains.
    """
    dec = state.dec
    rep = check_sparsity_assumptions(state)
    own_A = np.bincount(state.MA.coarse.owner, minlength=dec.N)
    own_S = np.bincount(state.coarse.owner, minlength=dec.N)
    out = []
    for name, counts, own, sets in (
            ("primal coarse coupling", rep["primal_coupling_counts"], own_A, dec.overlap_sets),
            ("dual coarse coupling", rep["dual_coupling_counts"], own_S, dec.neighbors)):
        excess = max(c - int(own[sets[i]].sum()) for i, c in enumerate(counts))
        out.append(CheckResult(name, excess, 0, excess <= 0,
                               f"max {max(counts)} columns per subdomain"))
    return out
