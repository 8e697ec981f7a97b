"""Permutations, DAG supports, structure metrics, and structure refinement.

Conventions used throughout the package:

* a permutation is a 1-d integer array ``perm`` of length p where
  ``perm[a]`` is the node placed at position ``a``;
* a support is a p x p boolean matrix ``support`` where ``support[i, j]``
  means the coefficient of parent i on child j may be nonzero (edge i -> j);
* coefficient matrices have shape (p+1) x p with row 0 holding the
  per-child intercepts (never part of the support).
"""

from dataclasses import dataclass

import numpy as np


def check_permutation(perm) -> np.ndarray:
    """Validate and return ``perm`` as an int array that is a bijection on 0..p-1."""
    perm = np.asarray(perm, dtype=np.int64)
    if perm.ndim != 1 or perm.size == 0:
        raise ValueError("permutation must be a non-empty 1-d sequence")
    p = perm.size
    seen = np.zeros(p, dtype=bool)
    if perm.min() < 0 or perm.max() >= p:
        raise ValueError("permutation entries must lie in [0, p)")
    seen[perm] = True
    if not seen.all():
        raise ValueError("permutation entries must be distinct")
    return perm


def support_from_permutation(perm) -> np.ndarray:
    """Full support compatible with ``perm``: i -> j allowed iff i precedes j."""
    perm = check_permutation(perm)
    p = perm.size
    position = np.empty(p, dtype=np.int64)
    position[perm] = np.arange(p)
    return position[:, None] < position[None, :]


def flip_interval(perm, start: int, length: int) -> np.ndarray:
    """Return a copy of ``perm`` with ``perm[start:start+length]`` reversed."""
    perm = np.asarray(perm, dtype=np.int64)
    out = perm.copy()
    out[start:start + length] = out[start:start + length][::-1]
    return out


def propose_flip(perm, tau: int, rng: np.random.Generator) -> np.ndarray:
    """Propose a neighbour of ``perm`` by reversing one random interval.

    The interval length is uniform on {2, ..., tau} and the start index
    uniform over feasible positions, so the proposal always differs from
    the input.
    """
    perm = check_permutation(perm)
    p = perm.size
    if tau < 2 or tau > p:
        raise ValueError(f"tau must satisfy 2 <= tau <= p, got tau={tau}, p={p}")
    length = int(rng.integers(2, tau + 1))
    start = int(rng.integers(0, p - length + 1))
    return flip_interval(perm, start, length)


def topological_order(support) -> np.ndarray | None:
    """Topological order of the directed graph ``support``, or None if cyclic.

    Deterministic: among ready nodes the smallest index is emitted first.
    """
    support = np.asarray(support, dtype=bool)
    p = support.shape[0]
    indeg = support.sum(axis=0).astype(np.int64)
    ready = sorted(np.flatnonzero(indeg == 0).tolist())
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        children = np.flatnonzero(support[node])
        for c in children:
            indeg[c] -= 1
        newly = [int(c) for c in children if indeg[c] == 0]
        if newly:
            ready = sorted(ready + newly)
    if len(order) != p:
        return None
    return np.asarray(order, dtype=np.int64)


def is_acyclic(support) -> bool:
    return topological_order(support) is not None


def check_support(support, p: int | None = None) -> np.ndarray:
    """Validate a boolean support matrix (square, zero diagonal, acyclic)."""
    support = np.asarray(support, dtype=bool)
    if support.ndim != 2 or support.shape[0] != support.shape[1]:
        raise ValueError("support must be a square boolean matrix")
    if p is not None and support.shape[0] != p:
        raise ValueError(f"support has p={support.shape[0]}, expected {p}")
    if support.diagonal().any():
        raise ValueError("support diagonal must be all false")
    if not is_acyclic(support):
        raise ValueError("support induces a cycle")
    return support


@dataclass(frozen=True)
class StructureMetrics:
    """Edge-count comparison of an estimated DAG against the truth.

    ``p`` estimated edges, ``tp`` exact directed matches, ``fp`` skeleton
    false positives, ``m`` skeleton misses, ``r`` reversals, and the
    structural Hamming distance ``shd = r + fp + m``.
    """

    p: int
    tp: int
    fp: int
    m: int
    r: int
    shd: int

    def to_dict(self) -> dict:
        return {"P": self.p, "TP": self.tp, "FP": self.fp,
                "M": self.m, "R": self.r, "SHD": self.shd}


def structure_metrics(estimated, truth) -> StructureMetrics:
    """Compare two DAG supports of the same dimension."""
    estimated = np.asarray(estimated, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if estimated.shape != truth.shape:
        raise ValueError(f"dimension mismatch: {estimated.shape} vs {truth.shape}")
    est_skel = estimated | estimated.T
    true_skel = truth | truth.T
    p = int(estimated.sum())
    tp = int((estimated & truth).sum())
    # Skeletons are symmetric, so each undirected edge is counted twice.
    fp = int((est_skel & ~true_skel).sum()) // 2
    m = int((true_skel & ~est_skel).sum()) // 2
    r = p - tp - fp
    return StructureMetrics(p=p, tp=tp, fp=fp, m=m, r=r, shd=r + fp + m)


def refine_threshold(beta, alpha: float) -> np.ndarray:
    """Support of coefficients surviving the relative magnitude cut.

    Entry (i, j) survives when ``|beta[i+1, j]| >= alpha * max |beta[1:, :]|``
    and is nonzero; intercepts (row 0) are ignored.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    weights = np.abs(beta[1:, :])
    np.fill_diagonal(weights, 0.0)
    cut = alpha * weights.max()
    return (weights > 0) & (weights >= cut)


def support_edges(support) -> list[tuple[int, int]]:
    """Sorted (parent, child) pairs of a support matrix."""
    support = np.asarray(support, dtype=bool)
    return [(int(i), int(j)) for i, j in np.argwhere(support)]


def edges_to_support(edges, p: int) -> np.ndarray:
    support = np.zeros((p, p), dtype=bool)
    for i, j in edges:
        if not (0 <= i < p and 0 <= j < p):
            raise ValueError(f"edge ({i}, {j}) out of range for p={p}")
        if i == j:
            raise ValueError(f"self loop on node {i}")
        support[i, j] = True
    return support


def load_edge_list(path) -> list[tuple[int, int]]:
    """Read a text edge list: one ``i j`` pair per line, '#' starts a comment."""
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    return edges


def save_edge_list(path, support, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for i, j in support_edges(support):
            fh.write(f"{i} {j}\n")
