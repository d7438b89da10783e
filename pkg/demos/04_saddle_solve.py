"""
Solving the full saddle point system
====================================

The block solver eliminates the velocity, solves the Schur complement
system preconditioned by ``N_S = S0 + M_S1`` and recovers the velocity.
``N_S`` is inverted with a low-rank correction whose small matrix ``M_A0``
has the size of the velocity coarse space.
"""
import numpy as np

from saddledd.checks import check_block_solution, check_MA0, check_woodbury
from saddledd.decomposition import decompose
from saddledd.krylov import solve_saddle
from saddledd.ns import build_preconditioners
from saddledd.problems import ProblemSpec, generate

sys = generate(ProblemSpec("mixed_darcy_mac", 24, 24, C_mode="diag_eps"))
dec = decompose(sys, 4, overlap=1)
pre = build_preconditioners(sys, dec, tau_A=0.5)
print(f"dim V0 = {pre.MA.dim_V0}, dim W0 = {pre.dual.coarse.dim}, M_A0 is {pre.ma0.dim} square")
print("setup times (s):", {k: round(v, 3) for k, v in pre.times.items()})

# the low-rank correction agrees with the naive assembly and really inverts N_S
print(check_MA0(pre.dual, pre.ma0).line())
print(check_woodbury(pre.dual, pre.ma0, probes=10).line())

rng = np.random.default_rng(1)
F_U, F_P = rng.standard_normal(sys.n), rng.standard_normal(sys.m)
sol = solve_saddle(sys, pre, F_U, F_P, tol=1e-8)
for name, rep in sol.reports.items():
    print(f"{name}: {rep.iterations:3d} iterations, "
          f"condition estimate {rep.lanczos_cond_estimate:.2f}")
print(f"A-solves in total: {sol.total_A_solves}")
for r in check_block_solution(sys, sol, F_U, F_P):
    print(r.line())
