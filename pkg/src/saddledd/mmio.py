"""Matrix Market coordinate I/O (through ``scipy.io``) and the element-split
text format.

Both writers keep full float precision, so a write/read cycle reproduces the
stored values bit for bit.
"""
import numpy as np
import scipy.io
import scipy.sparse as sp

from .linalg import as_csr


def write_mm(path, M):
    scipy.io.mmwrite(str(path), sp.coo_matrix(M), field="real", symmetry="general")


def read_mm(path) -> sp.csr_matrix:
    """Read a sparse real Matrix Market file (coordinate format only)."""
    path = str(path)
    _, _, _, fmt, field, _ = scipy.io.mminfo(path)
    if fmt != "coordinate":
        raise ValueError(f"{path}: only 'matrix coordinate' files are supported")
    if field not in ("real", "integer", "pattern", "double"):
        raise ValueError(f"{path}: unsupported field {field!r}")
    return as_csr(sp.coo_matrix(scipy.io.mmread(path), dtype=float))


def write_split(path, split):
    """Element split file: element count, then per element a line
    ``k i_1 ... i_k`` (0-based) and a line with the k*k row-major entries."""
    with open(path, "w") as fh:
        fh.write(f"{len(split.elements)}\n")
        for idx, elem in split.elements:
            fh.write(" ".join([str(len(idx))] + [str(int(i)) for i in idx]) + "\n")
            fh.write(" ".join(repr(float(v)) for v in np.asarray(elem).ravel()) + "\n")


def read_split_elements(path):
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    count = int(lines[0])
    if len(lines) != 1 + 2 * count:
        raise ValueError(f"{path}: expected {count} elements")
    elements = []
    for e in range(count):
        head = [int(t) for t in lines[1 + 2 * e].split()]
        k, idx = head[0], np.asarray(head[1:], dtype=np.int64)
        if idx.size != k:
            raise ValueError(f"{path}: element {e} declares {k} indices, lists {idx.size}")
        vals = np.array([float(t) for t in lines[2 + 2 * e].split()])
        if vals.size != k * k:
            raise ValueError(f"{path}: element {e} needs {k * k} entries")
        elements.append((idx, vals.reshape(k, k)))
    return elements
