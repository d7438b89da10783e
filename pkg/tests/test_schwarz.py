import numpy as np
import pytest

from saddledd.decomposition import decompose
from saddledd.problems import ProblemSpec, generate, oracle_assemble
from saddledd.schwarz import build_geneo_A, build_primal_precond, geneo_threshold, spectrum_MA


@pytest.fixture(scope="module")
def poisson_dec():
    sys = generate(ProblemSpec("poisson2d_constrained", 16, 16, seed=1))
    return sys, decompose(sys, 4, overlap=1)


def test_threshold_convention():
    assert geneo_threshold(0.0) == np.inf
    assert geneo_threshold(0.5) == 2.0


def test_tau_zero_gives_one_level(poisson_dec):
    sys, dec = poisson_dec
    assert build_geneo_A(sys, dec, 0.0).dim == 0


def test_lambda_min_grows_with_tau(poisson_dec):
    sys, dec = poisson_dec
    dims, lmins = [], []
    for tau in (0.0, 0.25, 0.5, 0.9):
        P = build_primal_precond(sys, dec, tau_A=tau)
        lo, hi = spectrum_MA(sys, P)
        dims.append(P.dim_V0)
        lmins.append(lo)
        # each dof lies in at most a few subdomains, plus the coarse level
        assert hi <= 1 + max(len(o) for o in dec.overlap_sets) + 1e-10
    assert dims == sorted(dims)
    assert all(b >= a - 1e-12 for a, b in zip(lmins, lmins[1:]))
    assert lmins[-1] > 2 * lmins[0]


def test_coarse_columns_are_local(poisson_dec):
    sys, dec = poisson_dec
    cs = build_geneo_A(sys, dec, 0.5)
    assert cs.dim > 0
    for k in range(cs.dim):
        rows = cs.Z[:, k].nonzero()[0]
        assert np.isin(rows, dec[cs.owner[k]].primal).all()
    G = (cs.Z.T @ sys.A @ cs.Z).toarray()
    assert np.allclose(cs.factor.reconstruct(), G, atol=1e-12 * abs(G).max())


@pytest.mark.parametrize("mode", ["asm2", "soras"])
def test_preconditioner_is_spd(poisson_dec, mode):
    sys, dec = poisson_dec
    P = build_primal_precond(sys, dec, mode=mode, tau_A=0.5)
    M = oracle_assemble(P, sys.n)
    assert np.abs(M - M.T).max() <= 1e-12 * np.abs(M).max()
    assert np.linalg.eigvalsh(0.5 * (M + M.T))[0] > 0


def test_threads_give_same_result(poisson_dec, rng):
    sys, dec = poisson_dec
    r = rng.standard_normal(sys.n)
    a = build_primal_precond(sys, dec, tau_A=0.5)(r)
    b = build_primal_precond(sys, dec, tau_A=0.5, threads=3)(r)
    assert np.allclose(a, b, rtol=0, atol=1e-13 * np.abs(a).max())


def test_bad_mode_and_length(poisson_dec):
    sys, dec = poisson_dec
    with pytest.raises(ValueError):
        build_primal_precond(sys, dec, mode="ras")
    P = build_primal_precond(sys, dec, tau_A=0.0)
    with pytest.raises(ValueError):
        P(np.ones(sys.n + 1))
