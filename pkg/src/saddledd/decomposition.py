"""Overlapping algebraic decomposition of the primal space and the induced
dual-space objects.

For every subdomain ``i`` we keep

* ``primal``: the overlapping primal index set (rows of ``R_i``) and the
  partition-of-unity weights ``D``;
* ``dual``: the support of ``B R_i^T`` (rows of the dual restriction), the
  dual weights ``Dt``, the local constraint block ``Bt = Rt B R_i^T`` and the
  local penalty block ``Ct``;
* the Dirichlet matrix ``A_loc = R_i A R_i^T`` and the Neumann matrix
  ``A_neu`` assembled from the element split of ``A``.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .config import DEFAULT_TOLERANCES
from .linalg import as_csr, is_symmetric, maybe_dense, restriction

log = logging.getLogger(__name__)


class AssumptionViolation(ValueError):
    """A structural hypothesis of the method does not hold for the input."""


# ---------------------------------------------------------------------------
# data model

@dataclass
class PsdSplit:
    """A matrix written as a sum of small dense PSD element matrices."""
    elements: list  # of (index array, dense element matrix)

    def assemble(self, n) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for idx, elem in self.elements:
            idx = np.asarray(idx)
            rows.append(np.repeat(idx, idx.size))
            cols.append(np.tile(idx, idx.size))
            vals.append(np.asarray(elem, dtype=float).ravel())
        if not rows:
            return sp.csr_matrix((n, n))
        M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, n))
        return as_csr(M)

    def min_relative_eig(self) -> float:
        """Smallest ``lambda_min / lambda_max`` over the elements."""
        worst = np.inf
        for _, elem in self.elements:
            w = np.linalg.eigvalsh(0.5 * (elem + elem.T))
            top = max(abs(w).max(), 1e-300)
            worst = min(worst, w[0] / top)
        return worst

    def check(self, target, tol=None):
        tol = DEFAULT_TOLERANCES if tol is None else tol
        for k, (idx, elem) in enumerate(self.elements):
            if not is_symmetric(np.asarray(elem), tol.sym_check):
                raise AssumptionViolation(f"split element {k} is not symmetric")
        if self.elements and self.min_relative_eig() < -tol.psd_check:
            raise AssumptionViolation("split element is not positive semidefinite")
        diff = self.assemble(target.shape[0]) - target
        scale = abs(target).max() if target.nnz else 1.0
        if diff.nnz and abs(diff).max() > 1e-12 * scale:
            raise AssumptionViolation("element split does not reassemble the matrix")


@dataclass
class SaddleSystem:
    """Blocks of ``[[A, B^T], [B, -C]]`` plus PSD splittings of ``A`` and ``C``."""
    A: sp.csr_matrix
    B: sp.csr_matrix
    C: sp.csr_matrix
    A_split: Optional[PsdSplit] = None
    C_split: Optional[PsdSplit] = None
    coords: Optional[np.ndarray] = None

    def __post_init__(self):
        self.A, self.B, self.C = as_csr(self.A), as_csr(self.B), as_csr(self.C)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[0]

    def validate(self, tol=None):
        tol = DEFAULT_TOLERANCES if tol is None else tol
        n, m = self.n, self.m
        if self.A.shape != (n, n) or self.B.shape[1] != n or self.C.shape != (m, m):
            raise ValueError("inconsistent block shapes")
        if m >= n:
            raise ValueError(f"need m < n, got m={m}, n={n}")
        if not is_symmetric(self.A, tol.sym_check):
            raise ValueError("A is not symmetric")
        if not is_symmetric(self.C, tol.sym_check):
            raise ValueError("C is not symmetric")
        if m and np.any(np.diff(self.B.indptr) == 0):
            raise ValueError("B has a zero row and cannot have full row rank")
        if self.A_split is not None:
            self.A_split.check(self.A, tol)
        if self.C_split is not None:
            self.C_split.check(self.C, tol)
        return self


@dataclass
class Subdomain:
    id: int
    primal: np.ndarray
    D: Optional[np.ndarray] = None
    dual: Optional[np.ndarray] = None
    Dt: Optional[np.ndarray] = None
    Bt: Optional[sp.csr_matrix] = None
    Ct: Optional[np.ndarray] = None
    A_loc: Optional[object] = None
    A_neu: Optional[object] = None
    interface: Optional[np.ndarray] = None

    def R(self, n) -> sp.csr_matrix:
        return restriction(self.primal, n)

    def Rt(self, m) -> sp.csr_matrix:
        return restriction(self.dual, m)


@dataclass
class Decomposition:
    n: int
    m: int
    subdomains: List[Subdomain]
    overlap: int = 0
    neighbors: Optional[list] = None
    overlap_sets: Optional[list] = None
    k0: Optional[int] = None
    info: dict = field(default_factory=dict)

    @property
    def N(self):
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    def __getitem__(self, i):
        return self.subdomains[i]


# ---------------------------------------------------------------------------
# seed partitions

def adjacency(A) -> sp.csr_matrix:
    G = as_csr(abs(sp.csr_matrix(A)) + abs(sp.csr_matrix(A)).T)
    G.setdiag(0)
    G.eliminate_zeros()
    return G


def _rcb(ids, coords, nparts):
    """Recursive coordinate bisection; cuts never split tied coordinates."""
    if nparts == 1:
        return [ids]
    pts = coords[ids]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
    order = np.lexsort((ids, pts[:, axis]))
    ids, vals = ids[order], pts[order, axis]
    left = nparts // 2
    k = int(round(ids.size * left / nparts))
    # move the cut to the closest change of coordinate value
    breaks = np.flatnonzero(np.diff(vals) > 0) + 1
    if breaks.size:
        k = int(breaks[np.argmin(np.abs(breaks - k))])
    k = min(max(k, left), ids.size - (nparts - left))
    return _rcb(ids[:k], coords, left) + _rcb(ids[k:], coords, nparts - left)


def _greedy_bfs(ids, G, nparts):
    """Greedy graph growing inside one connected component."""
    remaining = set(int(i) for i in ids)
    parts = []
    indptr, indices = G.indptr, G.indices
    for p in range(nparts):
        target = int(round(len(remaining) / (nparts - p)))
        start = min(remaining)
        part, frontier, seen = [], [start], {start}
        while frontier and len(part) < target:
            nxt = []
            for v in frontier:
                if len(part) >= target:
                    break
                part.append(v)
                for w in indices[indptr[v]:indptr[v + 1]]:
                    w = int(w)
                    if w in remaining and w not in seen:
                        seen.add(w)
                        nxt.append(w)
            frontier = sorted(nxt)
        if len(part) < target:
            # component exhausted by BFS: pad with the lowest remaining ids
            extra = sorted(remaining - set(part))[:target - len(part)]
            part.extend(extra)
        remaining -= set(part)
        parts.append(np.array(sorted(part), dtype=np.int64))
    return parts


def seed_partition(A, N, coords=None) -> List[np.ndarray]:
    n = A.shape[0]
    if N < 1:
        raise ValueError("need at least one subdomain")
    if N > n:
        raise ValueError(f"cannot split {n} unknowns into {N} subdomains")
    if coords is not None:
        # geometric cuts see every unknown, whatever the graph components
        coords = np.asarray(coords, dtype=float)
        if coords.shape[0] != n:
            raise ValueError("coordinates do not match the number of unknowns")
        return [np.sort(p) for p in _rcb(np.arange(n), coords, N)]
    G = adjacency(A)
    ncomp, labels = connected_components(G, directed=False)
    if ncomp > N:
        raise ValueError(f"adjacency graph has {ncomp} components, more than N={N}")
    comps = [np.flatnonzero(labels == c) for c in range(ncomp)]
    sizes = np.array([c.size for c in comps], dtype=float)
    # every component gets at least one part, the rest proportionally to size
    alloc = np.ones(ncomp, dtype=int)
    for _ in range(N - ncomp):
        alloc[np.argmax(sizes / alloc - sizes / (alloc + 1))] += 1
    parts = []
    for comp, k in zip(comps, alloc):
        parts.extend(_greedy_bfs(comp, G, k))
    return [np.sort(p) for p in parts]


def grow(ids, G, layers) -> np.ndarray:
    mask = np.zeros(G.shape[0], dtype=bool)
    mask[ids] = True
    for _ in range(layers):
        mask = mask | (G @ mask.astype(float) > 0)
    return np.flatnonzero(mask)


# ---------------------------------------------------------------------------
# builders

def build_partition(sys: SaddleSystem, N: int, overlap: int = 1) -> Decomposition:
    seeds = seed_partition(sys.A, N, sys.coords)
    G = adjacency(sys.A)
    subs = []
    for i, seed in enumerate(seeds):
        primal = grow(seed, G, overlap)
        inside = np.zeros(sys.n, dtype=bool)
        inside[primal] = True
        outside_nbr = (G @ (~inside).astype(float)) > 0
        subs.append(Subdomain(id=i, primal=primal,
                              interface=np.flatnonzero(outside_nbr[primal])))
    dec = Decomposition(n=sys.n, m=sys.m, subdomains=subs, overlap=overlap)
    dec.info["seed_sizes"] = [int(s.size) for s in seeds]
    return dec


def _multiplicity(sets, size):
    mult = np.zeros(size)
    for s in sets:
        mult[s] += 1
    return mult


def build_pou(dec: Decomposition) -> Decomposition:
    """Inverse-multiplicity weights for the primal and (if built) dual sets."""
    mult = _multiplicity([s.primal for s in dec], dec.n)
    if np.any(mult == 0):
        raise ValueError(f"primal dof {int(np.flatnonzero(mult == 0)[0])} is in no subdomain")
    for s in dec:
        s.D = 1.0 / mult[s.primal]
    if all(s.dual is not None for s in dec):
        mult_t = _multiplicity([s.dual for s in dec], dec.m)
        if dec.m and np.any(mult_t == 0):
            raise ValueError(f"dual dof {int(np.flatnonzero(mult_t == 0)[0])} is in no subdomain")
        for s in dec:
            s.Dt = 1.0 / mult_t[s.dual]
    return dec


def build_dual_objects(sys: SaddleSystem, dec: Decomposition, tol=None) -> Decomposition:
    tol = DEFAULT_TOLERANCES if tol is None else tol
    Bc = sp.csc_matrix(sys.B)
    covered = np.zeros(sys.m, dtype=bool)
    for s in dec:
        BR = as_csr(Bc[:, s.primal])
        s.dual = np.flatnonzero(np.diff(BR.indptr))
        s.Bt = as_csr(BR[s.dual])
        covered[s.dual] = True
        # the defining identity Rt^T Rt B R^T = B R^T, exactly
        lifted = sp.csr_matrix((sys.m, s.primal.size))
        if s.dual.size:
            lifted = as_csr(restriction(s.dual, sys.m).T @ s.Bt)
        if (lifted != BR).nnz:
            raise AssertionError(f"support identity fails on subdomain {s.id}")
        s.A_loc = maybe_dense(as_csr(sys.A[s.primal][:, s.primal]), tol)
    if sys.m and not covered.all():
        raise ValueError(f"constraint row {int(np.flatnonzero(~covered)[0])} touches no subdomain")
    build_pou(dec)
    return dec


def _is_diagonal(C):
    C = sp.csr_matrix(C)
    return (C - sp.diags(C.diagonal())).count_nonzero() == 0


def _owner(idx, dual_masks):
    for i, mask in enumerate(dual_masks):
        if np.all(mask[idx]):
            return i
    return None


def build_Ct(sys: SaddleSystem, dec: Decomposition) -> Decomposition:
    """Local PSD blocks ``Ct_i`` with ``sum_i Rt_i^T Ct_i Rt_i = C``.

    Diagonal ``C`` uses ``Ct_i = Rt_i C Rt_i^T Dt_i``; otherwise every element
    of ``C_split`` goes to the first subdomain whose dual set contains it.
    """
    if _is_diagonal(sys.C):
        c = sys.C.diagonal()
        for s in dec:
            s.Ct = np.diag(c[s.dual] * s.Dt)
        dec.info["Ct_mode"] = "diagonal"
        return dec
    if sys.C_split is None:
        raise AssumptionViolation(
            "C is not diagonal and no PSD element split of C was provided "
            "(C must be a sum of local PSD matrices on the dual subdomains)")
    masks = []
    for s in dec:
        mask = np.zeros(sys.m, dtype=bool)
        mask[s.dual] = True
        masks.append(mask)
        s.Ct = np.zeros((s.dual.size, s.dual.size))
    for idx, elem in sys.C_split.elements:
        idx = np.asarray(idx)
        owner = _owner(idx, masks)
        if owner is None:
            raise AssumptionViolation(f"C element on dofs {idx.tolist()} fits in no dual subdomain")
        s = dec[owner]
        loc = np.searchsorted(s.dual, idx)
        s.Ct[np.ix_(loc, loc)] += elem
    dec.info["Ct_mode"] = "split"
    return dec


def build_neumann(sys: SaddleSystem, dec: Decomposition, tol=None) -> Decomposition:
    """Neumann matrices: sum of the A-elements contained in each subdomain."""
    tol = DEFAULT_TOLERANCES if tol is None else tol
    if sys.A_split is None:
        log.warning("no element split of A: Neumann matrices replaced by Dirichlet ones")
        for s in dec:
            s.A_neu = s.A_loc
        return dec
    for s in dec:
        mask = np.full(sys.n, -1, dtype=np.int64)
        mask[s.primal] = np.arange(s.primal.size)
        rows, cols, vals = [], [], []
        for idx, elem in sys.A_split.elements:
            loc = mask[np.asarray(idx)]
            if np.any(loc < 0):
                continue
            rows.append(np.repeat(loc, loc.size))
            cols.append(np.tile(loc, loc.size))
            vals.append(np.asarray(elem, dtype=float).ravel())
        k = s.primal.size
        if rows:
            M = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(k, k))
        else:
            M = sp.csr_matrix((k, k))
        s.A_neu = maybe_dense(as_csr(M), tol)
    return dec


def overlap_graph(dec: Decomposition) -> list:
    """``j`` in result[i] iff the dual supports of i and j intersect (i included)."""
    owners = [[] for _ in range(dec.m)]
    for s in dec:
        for d in s.dual:
            owners[d].append(s.id)
    sets = []
    for s in dec:
        nb = {s.id}
        for d in s.dual:
            nb.update(owners[d])
        sets.append(np.array(sorted(nb), dtype=np.int64))
    return sets


def compute_k0_and_neighbors(dec: Decomposition):
    """Neighbour sets ``O(i)`` and ``k0 = max_i |O(i)|``.

    ``j`` is in ``O(i)`` when ``Rt_i Dt_i S1 Dt_j Rt_j^T`` is structurally
    nonzero. ``S1`` couples two dual dofs exactly when some subdomain
    contains both, so ``O(i)`` is the two-step closure of the dual-support
    intersection graph. The one-step sets are kept in ``dec.overlap_sets``.
    """
    one = overlap_graph(dec)
    two = []
    for i in range(dec.N):
        nb = set()
        for k in one[i]:
            nb.update(one[k].tolist())
        two.append(np.array(sorted(nb), dtype=np.int64))
    dec.overlap_sets = one
    dec.neighbors = two
    dec.k0 = int(max(len(o) for o in two)) if two else 0
    return dec.k0, dec.neighbors


def decompose(sys: SaddleSystem, N: int, overlap: int = 1, tol=None) -> Decomposition:
    """Run every builder: partition, dual objects and weights, ``Ct``, Neumann, ``k0``."""
    dec = build_partition(sys, N, overlap)
    build_dual_objects(sys, dec, tol)
    build_Ct(sys, dec)
    build_neumann(sys, dec, tol)
    compute_k0_and_neighbors(dec)
    return dec


# ---------------------------------------------------------------------------
# structural identity checks

def primal_pou_defect(dec: Decomposition) -> float:
    acc = np.zeros(dec.n)
    for s in dec:
        np.add.at(acc, s.primal, s.D)
    return float(np.abs(acc - 1.0).max()) if dec.n else 0.0


def dual_pou_defect(dec: Decomposition) -> float:
    acc = np.zeros(dec.m)
    for s in dec:
        np.add.at(acc, s.dual, s.Dt)
    return float(np.abs(acc - 1.0).max()) if dec.m else 0.0


def support_mismatch(sys: SaddleSystem, dec: Decomposition) -> int:
    """Number of entries where ``Rt^T Rt B R^T`` and ``B R^T`` differ, summed."""
    Bc = sp.csc_matrix(sys.B)
    bad = 0
    for s in dec:
        BR = as_csr(Bc[:, s.primal])
        lifted = as_csr(restriction(s.dual, sys.m).T @ restriction(s.dual, sys.m) @ BR)
        bad += (lifted != BR).nnz
    return int(bad)


def reassemble_C(dec: Decomposition) -> sp.csr_matrix:
    out = sp.csr_matrix((dec.m, dec.m))
    for s in dec:
        Rt = restriction(s.dual, dec.m)
        out = out + Rt.T @ sp.csr_matrix(s.Ct) @ Rt
    return as_csr(out)


def C_reassembly_defect(sys: SaddleSystem, dec: Decomposition) -> float:
    diff = reassemble_C(dec) - sys.C
    if diff.nnz == 0:
        return 0.0
    scale = abs(sys.C).max() if sys.C.nnz else 1.0
    return float(abs(diff).max() / scale)
