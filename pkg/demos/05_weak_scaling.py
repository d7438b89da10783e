"""
Weak scaling on a strip of subdomains
=====================================

Keep 16 x 16 cells per subdomain and add subdomains along a strip. The
coarse spaces grow linearly with N while the Schur iteration count and the
number of coarse columns each subdomain touches stay flat.
"""
from saddledd.cli import RunConfig, sweep

rows = sweep(RunConfig(kind="mixed_darcy_mac", tau_A=0.25, sweep_N=[2, 4, 8]))
print("   N      n  dim V0  dim W0  step-3 its  max cols (V0)  max cols (W0)")
for r in rows:
    print(f"{r['N']:4d} {r['n']:6d} {r['dim_V0']:7d} {r['dim_W0']:7d} "
          f"{r['step3_iterations']:11d} {r['primal_coupling_max']:14d} {r['dual_coupling_max']:14d}")
