import math

import numpy as np
import pytest

from saddledd.cli import RunConfig, sweep
from saddledd.decomposition import decompose
from saddledd.krylov import solve_saddle
from saddledd.ns import build_preconditioners
from saddledd.problems import KINDS, ProblemSpec, generate


def test_strips_at_default_tau_A():
    # frozen: at tau_A = 0.5 interior subdomains keep twice the coarse vectors
    # of the two end subdomains, so the primal coupling count steps from 20 to
    # 24 between N = 4 (two interior subdomains) and N = 9, then stays put
    rows = sweep(RunConfig(kind="mixed_darcy_mac", tau_A=0.5, sweep_N=[4, 9]))
    assert [r["dim_V0"] for r in rows] == [24, 64]
    assert [r["primal_coupling_max"] for r in rows] == [20, 24]
    its = [r["step3_iterations"] for r in rows]
    assert max(its) - min(its) <= 2


@pytest.mark.parametrize("kind", KINDS)
def test_default_coarse_space_size(kind):
    sys = generate(ProblemSpec(kind, 24, 24, seed=0))
    for N in (4, 9):
        dec = decompose(sys, N, overlap=1)
        pre = build_preconditioners(sys, dec)
        assert pre.MA.dim_V0 <= 20 * N


def test_iterations_match_condition_estimate(darcy_setup, rng):
    sys, dec, pre = darcy_setup
    tol = 1e-8
    sol = solve_saddle(sys, pre, rng.standard_normal(sys.n), rng.standard_normal(sys.m),
                       tol=tol, inner_tol=1e-12)
    rep = sol.reports["step3"]
    bound = math.ceil(0.5 * math.sqrt(rep.lanczos_cond_estimate) * math.log(2 / tol))
    assert rep.iterations <= 2 * bound
    assert np.isfinite(rep.lanczos_cond_estimate) and rep.lanczos_cond_estimate >= 1
