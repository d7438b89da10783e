import numpy as np

from saddledd.checks import check_alpha, check_MS_paths, check_stable_decomposition
from saddledd.decomposition import decompose
from saddledd.ns import build_preconditioners
from saddledd.problems import DenseOracle
from saddledd.schur import (SchurOperator, alpha_bound, apply_MS, apply_MS1_inv, apply_S1,
                           local_geneo_pencil, local_left_from_neighbors,
                           recombine)


def test_S1_symmetric_psd(any_setup):
    sys, dec, pre = any_setup
    S1 = pre.dual.S1.toarray()
    assert np.abs(S1 - S1.T).max() <= 1e-13 * np.abs(S1).max()
    assert np.linalg.eigvalsh(S1)[0] > -1e-12 * np.abs(S1).max()


def test_MS_two_paths(any_setup):
    sys, dec, pre = any_setup
    r = check_MS_paths(pre.dual, probes=20)
    assert r.passed, r.line()


def test_stable_decomposition_constant_one(any_setup):
    sys, dec, pre = any_setup
    r = check_stable_decomposition(pre.dual, vectors=20)
    assert r.passed, r.line()


def test_recombine_inverts_restriction(any_setup, rng):
    sys, dec, pre = any_setup
    p = rng.standard_normal(sys.m)
    parts = [p[L.dual] for L in pre.dual.local]
    assert np.allclose(recombine(pre.dual, parts), p, atol=1e-14)


def test_neighbour_sum_matches_assembled_S1(darcy_setup):
    sys, dec, pre = darcy_setup
    for i in range(dec.N):
        left, _ = local_geneo_pencil(pre.dual, i)
        assert np.allclose(local_left_from_neighbors(pre.dual, i), left, atol=1e-13)


def test_alpha_bound_holds(darcy_setup):
    sys, dec, pre = darcy_setup
    r = check_alpha(pre.dual, 1.0)
    assert pre.dual.coarse.dim > 0
    assert r.passed, r.detail


def test_alpha_bound_formula():
    assert alpha_bound(4, 2.0) == 2.0
    assert alpha_bound(4, 8.0) == 1.0
    assert alpha_bound(4, 0.0) == np.inf


def test_one_level_dual_bound(darcy_small):
    dec = decompose(darcy_small, 4)
    pre = build_preconditioners(darcy_small, dec, tau_A=0.5, tau_S1=0.0)
    assert pre.dual.coarse.dim == 0
    r = check_alpha(pre.dual, 0.0)
    assert r.passed, r.detail


def test_MS1_inverse_symmetric(darcy_setup, rng):
    sys, dec, pre = darcy_setup
    x, y = rng.standard_normal(sys.m), rng.standard_normal(sys.m)
    a = y @ apply_MS1_inv(pre.dual, x)
    b = x @ apply_MS1_inv(pre.dual, y)
    assert abs(a - b) <= 1e-12 * abs(a)


def test_coarse_space_empty_for_huge_threshold(darcy_small):
    dec = decompose(darcy_small, 4)
    pre = build_preconditioners(darcy_small, dec, tau_A=0.5, tau_S1=1e-6)
    # dual pencil eigenvalues are bounded by k0, far below 1e6
    assert pre.dual.coarse.dim == 0


def test_single_subdomain_has_no_dual_coarse_space(darcy_small):
    dec = decompose(darcy_small, 1)
    pre = build_preconditioners(darcy_small, dec, tau_A=0.5)
    assert pre.dual.coarse.dim == 0
    S1 = pre.dual.S1.toarray()
    g = np.arange(darcy_small.m, dtype=float)
    assert np.allclose(S1 @ apply_MS1_inv(pre.dual, g), g, atol=1e-9 * np.abs(g).max())


def test_schur_operator_matches_dense(darcy_setup, rng):
    sys, dec, pre = darcy_setup
    S = DenseOracle(sys).schur()
    op = SchurOperator(sys, pre.MA, inner_tol=1e-12)
    p = rng.standard_normal(sys.m)
    assert np.linalg.norm(op(p) - S @ p) <= 1e-9 * np.linalg.norm(S @ p)
    assert op.n_solves == 1 and op.inner_iterations > 0


def test_MS_is_S_for_exact_MA(darcy_small, rng):
    # one subdomain with no coarse space: M_A = A, so M_S = S
    dec = decompose(darcy_small, 1)
    pre = build_preconditioners(darcy_small, dec, tau_A=0.0)
    S = DenseOracle(darcy_small).schur()
    p = rng.standard_normal(darcy_small.m)
    assert np.allclose(apply_MS(pre.dual, p), S @ p, rtol=1e-10, atol=1e-12)
    assert np.allclose(apply_S1(pre.dual, p), S @ p, rtol=1e-10, atol=1e-12)
