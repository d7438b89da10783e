"""Numerical tolerances and size cutoffs shared by every module.

All thresholds live here so that no module hard-codes its own magic numbers.
"""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # eigenvalues of the right-hand pencil matrix below eig_drop * lambda_max
    # are treated as kernel directions
    eig_drop: float = 1e-12
    # relative drop tolerance of the pseudo-inverse of local Schur matrices
    pinv_drop: float = 1e-10
    # GenEO selection keeps lambda > threshold * (1 + select_margin), so that
    # eigenvalues equal to the threshold up to round-off are not selected
    select_margin: float = 1e-8
    # Gram-Schmidt pivot drop (relative squared norm) for coarse bases
    coarse_drop: float = 1e-10
    # symmetry check for matrices flagged symmetric
    sym_check: float = 1e-12
    # minimum eigenvalue accepted for PSD element matrices (relative)
    psd_check: float = 1e-10
    # local matrices up to this size are stored and factored dense
    dense_cutoff: int = 2000
    # hard cap on the dimension of dense oracle assemblies
    oracle_cap: int = 5000


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class SolverDefaults:
    outer_tol: float = 1e-8
    # inner A-solves inside the Schur operator use inner_factor * outer_tol
    inner_factor: float = 1e-2
    # the primal stages of the block solve use stage_factor * tol
    stage_factor: float = 1e-2
    maxit: int = 1000
    max_refine: int = 3
    flexible: bool = True
    fcg_mmax: int = 50


DEFAULT_SOLVER = SolverDefaults()
