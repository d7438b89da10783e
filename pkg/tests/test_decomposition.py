import logging

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from saddledd.decomposition import (AssumptionViolation, Decomposition, SaddleSystem, Subdomain,
                                    C_reassembly_defect, build_pou, decompose, dual_pou_defect,
                                    primal_pou_defect, seed_partition, support_mismatch)
from saddledd.problems import ProblemSpec, generate


def test_pou_poisson_overlap2():
    sys = generate(ProblemSpec("poisson2d_constrained", 16, 16))
    dec = decompose(sys, 4, overlap=2)
    assert primal_pou_defect(dec) <= 1e-14
    assert dual_pou_defect(dec) <= 1e-14
    assert sorted(set(np.concatenate([s.primal for s in dec]).tolist())) == list(range(sys.n))


@given(sets=st.lists(st.sets(st.integers(0, 99), min_size=1), min_size=1, max_size=8))
@settings(max_examples=50, deadline=None)
def test_pou_random_overlaps(sets):
    covered = set().union(*sets)
    missing = sorted(set(range(100)) - covered)
    if missing:
        sets = sets + [set(missing)]
    subs = [Subdomain(id=i, primal=np.array(sorted(s))) for i, s in enumerate(sets)]
    dec = build_pou(Decomposition(n=100, m=0, subdomains=subs))
    assert primal_pou_defect(dec) <= 1e-14


def test_pou_uncovered_dof():
    subs = [Subdomain(id=0, primal=np.array([0, 1]))]
    with pytest.raises(ValueError):
        build_pou(Decomposition(n=3, m=0, subdomains=subs))


def test_support_identity_and_C(any_system):
    dec = decompose(any_system, 4, overlap=1)
    assert support_mismatch(any_system, dec) == 0
    assert C_reassembly_defect(any_system, dec) <= 1e-14
    for s in dec:
        assert np.linalg.eigvalsh(s.Ct)[0] >= -1e-14 if s.dual.size else True


def test_zero_C_reassembles():
    sys = generate(ProblemSpec("mixed_darcy_mac", 8, 8, C_mode="zero"))
    dec = decompose(sys, 4)
    assert C_reassembly_defect(sys, dec) == 0.0


def test_full_C_without_split_is_rejected():
    base = generate(ProblemSpec("random_spd_constrained", 8, 8, C_mode="split_eps"))
    sys = SaddleSystem(base.A, base.B, base.C, A_split=base.A_split, coords=base.coords)
    with pytest.raises(AssumptionViolation):
        decompose(sys, 4)


def test_k0_on_strip_chain():
    sys = generate(ProblemSpec("mixed_darcy_mac", 128, 8))
    dec = decompose(sys, 8, overlap=1)
    # end subdomains see 3 neighbours-of-neighbours, interior ones 5
    assert dec.k0 == 5
    assert [len(o) for o in dec.neighbors] == [3, 4, 5, 5, 5, 5, 4, 3]


def test_single_subdomain():
    sys = generate(ProblemSpec("poisson2d_constrained", 6, 6))
    dec = decompose(sys, 1)
    assert dec.k0 == 1 and np.all(dec[0].D == 1.0)


def test_partition_errors():
    A = sp.identity(4, format="csr")
    with pytest.raises(ValueError):
        seed_partition(A, 5)
    with pytest.raises(ValueError):
        seed_partition(A, 2)  # 4 components, no coordinates
    with pytest.raises(ValueError):
        seed_partition(A, 0)


def test_seed_partition_is_partition():
    sys = generate(ProblemSpec("random_spd_constrained", 10, 10))
    for coords in (sys.coords, None):
        parts = seed_partition(sys.A, 6, coords)
        assert len(parts) == 6
        assert np.array_equal(np.sort(np.concatenate(parts)), np.arange(sys.n))


def test_missing_A_split_warns(caplog):
    base = generate(ProblemSpec("poisson2d_constrained", 6, 6))
    sys = SaddleSystem(base.A, base.B, base.C, coords=base.coords)
    with caplog.at_level(logging.WARNING):
        dec = decompose(sys, 2)
    assert "element split" in caplog.text
    assert all(s.A_neu is s.A_loc for s in dec)


def test_validate_rejects_bad_input():
    A = sp.identity(3, format="csr")
    with pytest.raises(ValueError):
        SaddleSystem(A, sp.csr_matrix(np.ones((3, 3))), sp.csr_matrix((3, 3))).validate()
    with pytest.raises(ValueError):
        SaddleSystem(A, sp.csr_matrix([[1.0, 0, 0], [0, 0, 0]]), sp.csr_matrix((2, 2))).validate()
