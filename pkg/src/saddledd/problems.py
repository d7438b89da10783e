"""Deterministic desk-scale saddle point problems and dense brute-force oracles."""
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .config import DEFAULT_TOLERANCES
from .decomposition import PsdSplit, SaddleSystem
from .linalg import as_csr
from .mmio import read_mm, read_split_elements, write_mm, write_split

KINDS = ("poisson2d_constrained", "mixed_darcy_mac", "random_spd_constrained")


@dataclass
class ProblemSpec:
    kind: str = "mixed_darcy_mac"
    nx: int = 24
    ny: int = 24
    seed: int = 0
    C_mode: str = "zero"          # "zero" | "diag_eps" | "split_eps"
    eps: float = 1e-3
    params: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def _split_from_lists(idx_list, elem_list):
    return PsdSplit([(np.asarray(i, dtype=np.int64), np.asarray(e, dtype=float))
                     for i, e in zip(idx_list, elem_list)])


def _laplacian_elements(nx, ny):
    """5-point Dirichlet Laplacian on an nx*ny node grid as edge elements."""
    node = np.arange(nx * ny).reshape(ny, nx)
    edge = np.array([[1.0, -1.0], [-1.0, 1.0]])
    idx, elems = [], []
    for j in range(ny):
        for i in range(nx):
            if i + 1 < nx:
                idx.append([node[j, i], node[j, i + 1]])
                elems.append(edge)
            if j + 1 < ny:
                idx.append([node[j, i], node[j + 1, i]])
                elems.append(edge)
            # one unit element per missing neighbour (Dirichlet boundary)
            missing = (i == 0) + (i == nx - 1) + (j == 0) + (j == ny - 1)
            if missing:
                idx.append([node[j, i]])
                elems.append([[float(missing)]])
    xs, ys = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float))
    coords = np.column_stack([xs.ravel(), ys.ravel()])
    return idx, elems, coords, node


def _grid_neighbours(node, j, i):
    ny, nx = node.shape
    out = []
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        if 0 <= j + dj < ny and 0 <= i + di < nx:
            out.append(node[j + dj, i + di])
    return out


def _C_block(spec, B):
    """``C`` and, for ``split_eps``, its element split.

    ``split_eps`` is ``eps`` times the identity plus the graph Laplacian of
    the constraint rows sharing a primal unknown. Two such rows always meet
    in some dual subdomain, so every element is local.
    """
    m = B.shape[0]
    if spec.C_mode == "zero":
        return sp.csr_matrix((m, m)), None
    if spec.C_mode == "diag_eps":
        return spec.eps * sp.identity(m, format="csr"), None
    if spec.C_mode == "split_eps":
        pattern = sp.triu(abs(B) @ abs(B).T, k=1).tocoo()
        pair = spec.eps * np.array([[1.0, -1.0], [-1.0, 1.0]])
        idx = [[k] for k in range(m)] + [[int(r), int(c)] for r, c in zip(pattern.row,
                                                                          pattern.col)]
        elems = [np.array([[spec.eps]])] * m + [pair] * pattern.nnz
        split = _split_from_lists(idx, elems)
        return split.assemble(m), split
    raise ValueError(f"unknown C_mode {spec.C_mode!r}")


def _poisson2d(spec, rng):
    nx, ny = spec.nx, spec.ny
    idx, elems, coords, node = _laplacian_elements(nx, ny)
    n = nx * ny
    m = int(spec.params.get("m_frac", 0.25) * n)
    pivots = np.sort(rng.choice(n, size=m, replace=False))
    is_pivot = np.zeros(n, dtype=bool)
    is_pivot[pivots] = True
    rows, cols, vals = [], [], []
    for r, p in enumerate(pivots):
        j, i = divmod(int(p), nx)
        free = [q for q in _grid_neighbours(node, j, i) if not is_pivot[q]]
        rows.append(r), cols.append(p), vals.append(1.0)
        if free:
            rows.append(r), cols.append(free[rng.integers(len(free))]), vals.append(-1.0)
    B = sp.coo_matrix((vals, (rows, cols)), shape=(m, n))
    split = _split_from_lists(idx, elems)
    return split, B, coords


def _darcy_mac(spec, rng):
    """MAC grid, nx*ny cells; all faces are velocity unknowns.

    A = face mass + cell-wise and transverse difference stiffness, B = discrete
    divergence (unit spacing). The mass is split into 1x1 face elements so that
    every local Neumann matrix keeps the full mass of its faces.
    """
    nx, ny = spec.nx, spec.ny
    mass = float(spec.params.get("mass", 1e-2))
    nu = float(spec.params.get("nu", 1.0))
    nu_u = (nx + 1) * ny
    U = np.arange(nu_u).reshape(ny, nx + 1)
    V = nu_u + np.arange(nx * (ny + 1)).reshape(ny + 1, nx)
    n = nu_u + nx * (ny + 1)
    m = nx * ny
    coords = np.zeros((n, 2))
    jj, ii = np.meshgrid(np.arange(ny), np.arange(nx + 1), indexing="ij")
    coords[U.ravel()] = np.column_stack([ii.ravel(), jj.ravel() + 0.5])
    jj, ii = np.meshgrid(np.arange(ny + 1), np.arange(nx), indexing="ij")
    coords[V.ravel()] = np.column_stack([ii.ravel() + 0.5, jj.ravel()])

    # every stiffness element is a difference of two parallel faces, either
    # across a cell (normal direction) or across an edge (transverse)
    diff = nu * np.array([[1.0, -1.0], [-1.0, 1.0]])
    idx, elems = [], []
    # face mass as 1x1 elements: half a cell mass from each adjacent cell
    face_mass = np.zeros(n)
    for j in range(ny):
        for i in range(nx):
            face_mass[[U[j, i], U[j, i + 1], V[j, i], V[j + 1, i]]] += 0.5 * mass
    for k in range(n):
        idx.append([k])
        elems.append(np.array([[face_mass[k]]]))
    rows, cols, vals = [], [], []
    for j in range(ny):
        for i in range(nx):
            faces = [U[j, i], U[j, i + 1], V[j, i], V[j + 1, i]]
            idx += [faces[:2], faces[2:]]
            elems += [diff, diff]
            c = j * nx + i
            rows += [c] * 4
            cols += faces
            vals += [-1.0, 1.0, -1.0, 1.0]
    for j in range(ny - 1):
        for i in range(nx + 1):
            idx.append([U[j, i], U[j + 1, i]])
            elems.append(diff)
    for j in range(ny + 1):
        for i in range(nx - 1):
            idx.append([V[j, i], V[j, i + 1]])
            elems.append(diff)
    B = sp.coo_matrix((vals, (rows, cols)), shape=(m, n))
    return _split_from_lists(idx, elems), B, coords


def _random_spd(spec, rng):
    nx, ny = spec.nx, spec.ny
    n = nx * ny
    node = np.arange(n).reshape(ny, nx)
    idx, elems = [], []
    for j in range(ny - 1):
        for i in range(nx - 1):
            G = rng.standard_normal((4, 2))
            idx.append([node[j, i], node[j, i + 1], node[j + 1, i], node[j + 1, i + 1]])
            elems.append(G @ G.T)
    for k in range(n):
        idx.append([k])
        elems.append([[rng.uniform(0.05, 0.5)]])
    xs, ys = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float))
    coords = np.column_stack([xs.ravel(), ys.ravel()])
    m = int(spec.params.get("m_frac", 0.25) * n)
    pivots = np.sort(rng.choice(n, size=m, replace=False))
    is_pivot = np.zeros(n, dtype=bool)
    is_pivot[pivots] = True
    rows, cols, vals = [], [], []
    for r, p in enumerate(pivots):
        j, i = divmod(int(p), nx)
        rows.append(r), cols.append(p), vals.append(rng.uniform(0.5, 1.5))
        free = [q for q in _grid_neighbours(node, j, i) if not is_pivot[q]]
        for q in rng.permutation(free)[:2]:
            rows.append(r), cols.append(int(q)), vals.append(rng.standard_normal())
    B = sp.coo_matrix((vals, (rows, cols)), shape=(m, n))
    return _split_from_lists(idx, elems), B, coords


def generate(spec: ProblemSpec) -> SaddleSystem:
    if spec.kind not in KINDS:
        raise ValueError(f"unknown problem kind {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    builder = {"poisson2d_constrained": _poisson2d,
               "mixed_darcy_mac": _darcy_mac,
               "random_spd_constrained": _random_spd}[spec.kind]
    split, B, coords = builder(spec, rng)
    n = coords.shape[0]
    A = split.assemble(n)
    m = B.shape[0]
    if m >= n:
        raise ValueError(f"problem has m={m} >= n={n}")
    B = as_csr(B)
    C, C_split = _C_block(spec, B)
    return SaddleSystem(A=A, B=B, C=C, A_split=split, C_split=C_split, coords=coords)


# ---------------------------------------------------------------------------
# file export / import

def export_problem(sys: SaddleSystem, outdir, spec: ProblemSpec = None):
    os.makedirs(outdir, exist_ok=True)
    write_mm(os.path.join(outdir, "A.mtx"), sys.A)
    write_mm(os.path.join(outdir, "B.mtx"), sys.B)
    write_mm(os.path.join(outdir, "C.mtx"), sys.C)
    if sys.A_split is not None:
        write_split(os.path.join(outdir, "A.split"), sys.A_split)
    if sys.C_split is not None:
        write_split(os.path.join(outdir, "C.split"), sys.C_split)
    if sys.coords is not None:
        np.savetxt(os.path.join(outdir, "coords.txt"), sys.coords, fmt="%.17g")
    if spec is not None:
        with open(os.path.join(outdir, "spec.json"), "w") as fh:
            fh.write(spec.to_json() + "\n")


def load_problem(A_path, B_path, C_path, A_split_path=None, C_split_path=None,
                 coords_path=None) -> SaddleSystem:
    A, B, C = read_mm(A_path), read_mm(B_path), read_mm(C_path)
    A_split = PsdSplit(read_split_elements(A_split_path)) if A_split_path else None
    C_split = PsdSplit(read_split_elements(C_split_path)) if C_split_path else None
    coords = np.loadtxt(coords_path, ndmin=2) if coords_path else None
    return SaddleSystem(A=A, B=B, C=C, A_split=A_split, C_split=C_split, coords=coords)


def load_problem_dir(path) -> SaddleSystem:
    def opt(name):
        p = os.path.join(path, name)
        return p if os.path.exists(p) else None
    return load_problem(os.path.join(path, "A.mtx"), os.path.join(path, "B.mtx"),
                        os.path.join(path, "C.mtx"), opt("A.split"), opt("C.split"),
                        opt("coords.txt"))


# ---------------------------------------------------------------------------
# dense oracles

class OracleCapExceeded(ValueError):
    pass


def oracle_assemble(op_apply, dim, cap=None) -> np.ndarray:
    """Matrix of a linear operator, one basis vector at a time."""
    cap = DEFAULT_TOLERANCES.oracle_cap if cap is None else cap
    if dim > cap:
        raise OracleCapExceeded(f"dimension {dim} above oracle cap {cap}")
    cols = [np.asarray(op_apply(e), dtype=float) for e in np.eye(dim)]
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def _dense(op, dim):
    if callable(op):
        return oracle_assemble(op, dim)
    return op.toarray() if sp.issparse(op) else np.asarray(op, dtype=float)


def pencil_eigenvalues(opA, opB, dim=None) -> np.ndarray:
    """All eigenvalues of ``A v = lambda B v`` with ``B`` positive definite."""
    A = _dense(opA, dim)
    Bm = _dense(opB, dim)
    return sla.eigh(0.5 * (A + A.T), 0.5 * (Bm + Bm.T), eigvals_only=True)


def oracle_gen_eig(opA, opB, dim=None):
    """Extreme eigenvalues ``(lambda_min, lambda_max)`` of the pencil."""
    w = pencil_eigenvalues(opA, opB, dim)
    return float(w[0]), float(w[-1])


def preconditioned_spectrum(op, prec_inv, dim=None) -> np.ndarray:
    """Eigenvalues of ``prec_inv @ op`` for SPD ``op`` and symmetric ``prec_inv``.

    Computed as the spectrum of ``L^T prec_inv L`` with ``op = L L^T``, which
    avoids inverting the preconditioner.
    """
    A = _dense(op, dim)
    P = _dense(prec_inv, dim if dim is not None else A.shape[0])
    L = np.linalg.cholesky(0.5 * (A + A.T))
    H = L.T @ P @ L
    return np.linalg.eigvalsh(0.5 * (H + H.T))


class DenseOracle:
    """Dense copies of the blocks and the brute-force objects derived from them."""

    def __init__(self, sys: SaddleSystem, cap=None):
        cap = DEFAULT_TOLERANCES.oracle_cap if cap is None else cap
        if sys.n + sys.m > cap:
            raise OracleCapExceeded(f"n + m = {sys.n + sys.m} above oracle cap {cap}")
        self.A = sys.A.toarray()
        self.B = sys.B.toarray()
        self.C = sys.C.toarray()

    def saddle_matrix(self):
        return np.block([[self.A, self.B.T], [self.B, -self.C]])

    def solve(self, F_U, F_P):
        n = self.A.shape[0]
        x = sla.solve(self.saddle_matrix(), np.concatenate([F_U, F_P]))
        return x[:n], x[n:]

    def schur(self):
        return self.C + self.B @ sla.solve(self.A, self.B.T, assume_a="pos")

    def M_S(self, MA_inv_dense):
        return self.C + self.B @ MA_inv_dense @ self.B.T
