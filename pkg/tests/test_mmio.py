import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from saddledd.decomposition import PsdSplit
from saddledd.mmio import read_mm, read_split_elements, write_mm, write_split


@given(nr=st.integers(1, 12), nc=st.integers(1, 12), density=st.floats(0.05, 0.9),
       seed=st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_roundtrip_bit_exact(nr, nc, density, seed, tmp_path_factory):
    rng = np.random.default_rng(seed)
    M = sp.random(nr, nc, density=density, random_state=rng, format="csr")
    M.data = rng.standard_normal(M.nnz) * 10.0 ** rng.integers(-300, 300, M.nnz)
    path = tmp_path_factory.mktemp("mm") / "M.mtx"
    write_mm(path, M)
    back = read_mm(path)
    assert back.shape == M.shape
    assert (back != M).nnz == 0


def test_symmetric_and_pattern(tmp_path):
    p = tmp_path / "s.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real symmetric\n% comment\n"
                 "3 3 3\n1 1 2.0\n2 1 -1.0\n3 3 4.5\n")
    M = read_mm(p).toarray()
    assert np.array_equal(M, [[2.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 4.5]])
    q = tmp_path / "p.mtx"
    q.write_text("%%MatrixMarket matrix coordinate pattern general\n2 2 2\n1 2\n2 1\n")
    assert np.array_equal(read_mm(q).toarray(), [[0.0, 1.0], [1.0, 0.0]])


def test_duplicates_are_summed(tmp_path):
    p = tmp_path / "d.mtx"
    p.write_text("%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1.5\n1 1 2.5\n")
    assert read_mm(p)[0, 0] == 4.0


@pytest.mark.parametrize("text", [
    "not a banner\n1 1 0\n",
    "%%MatrixMarket matrix array real general\n1 1\n1.0\n",
    "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
])
def test_malformed_files(tmp_path, text):
    p = tmp_path / "bad.mtx"
    p.write_text(text)
    with pytest.raises(ValueError):
        read_mm(p)


@given(elems=st.lists(hnp.arrays(np.float64, st.integers(1, 3).map(lambda k: (k, k)),
                           elements=st.floats(-1e6, 1e6)), max_size=6))
@settings(max_examples=30, deadline=None)
def test_split_roundtrip(elems, tmp_path_factory):
    split = PsdSplit([(np.arange(e.shape[0]) + i, e) for i, e in enumerate(elems)])
    path = tmp_path_factory.mktemp("split") / "A.split"
    write_split(path, split)
    back = read_split_elements(path)
    assert len(back) == len(elems)
    for (i0, e0), (i1, e1) in zip(split.elements, back):
        assert np.array_equal(i0, i1) and np.array_equal(e0, e1)


def test_split_bad_count(tmp_path):
    p = tmp_path / "x.split"
    p.write_text("2\n1 0\n1.0\n")
    with pytest.raises(ValueError):
        read_split_elements(p)
