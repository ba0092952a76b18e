"""Binary submodular energy minimization by s-t min-cut.

Capacities are quantized to integers for scipy's C max-flow. scipy silently
truncates capacities to 32-bit, so the scale is chosen per call to keep the
total capacity (an upper bound on the flow value) inside int32 while making
the rounding far below any energy difference we care about.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import maximum_flow

MAX_TOTAL_CAP = 2**31 - 64


def min_cut_binary(unary0: np.ndarray, unary1: np.ndarray,
                   edges: np.ndarray, pairwise: np.ndarray) -> np.ndarray:
    """Minimize sum_i u[x_i] + sum_e E_e(x_i, x_j) over binary labels.

    unary0/unary1: (N,) costs for label 0/1. edges: (M, 2) node index pairs.
    pairwise: (M, 4) costs [E00, E01, E10, E11] per edge; must be submodular
    (E01 + E10 >= E00 + E11). Returns (N,) uint8 labels.
    """
    unary0 = np.asarray(unary0, np.float64)
    unary1 = np.asarray(unary1, np.float64)
    edges = np.asarray(edges, np.int64).reshape(-1, 2)
    pairwise = np.asarray(pairwise, np.float64).reshape(-1, 4)
    n = unary0.shape[0]
    theta1 = unary1 - unary0
    src_cap = np.zeros(n)
    snk_cap = np.zeros(n)
    edge_rows, edge_cols, edge_caps = [], [], []

    if len(edges):
        e00, e01, e10, e11 = (pairwise[:, k].astype(np.float64) for k in range(4))
        cap = e01 + e10 - e00 - e11
        if np.any(cap < -1e-9):
            raise ValueError("pairwise term is not submodular")
        cap = np.maximum(cap, 0.0)
        i, j = edges[:, 0], edges[:, 1]
        # Kolmogorov-Zabih reparametrization: shift edge costs into unaries.
        np.add.at(theta1, i, e10 - e00)
        np.add.at(theta1, j, e11 - e10)
        edge_rows.append(i)
        edge_cols.append(j)
        edge_caps.append(cap)

    # Label-1 surcharge sits on the source->i edge (cut when i lands on the
    # sink side = label 1); label-0 surcharge on i->sink symmetrically.
    pos = theta1 > 0
    src_cap[pos] = theta1[pos]
    snk_cap[~pos] = -theta1[~pos]

    source, sink = n, n + 1
    rows = np.concatenate([np.full(n, source), np.arange(n)] + edge_rows)
    cols = np.concatenate([np.arange(n), np.full(n, sink)] + edge_cols)
    caps = np.concatenate([src_cap, snk_cap] + edge_caps)
    total = float(caps.sum())
    scale = MAX_TOTAL_CAP / total if total > 0 else 1.0
    icaps = np.rint(caps * scale).astype(np.int64)
    keep = icaps > 0
    graph = coo_matrix(
        (icaps[keep], (rows[keep], cols[keep])), shape=(n + 2, n + 2)
    ).tocsr()

    result = maximum_flow(graph, source, sink)
    residual = graph - result.flow
    labels = _source_side(residual, source, n)
    # Source-reachable nodes keep label 0; the rest take label 1.
    return np.where(labels, 0, 1).astype(np.uint8)


def _source_side(residual, source: int, n: int) -> np.ndarray:
    """BFS over positive residual capacity from the source."""
    indptr, indices, data = residual.indptr, residual.indices, residual.data
    seen = np.zeros(residual.shape[0], bool)
    seen[source] = True
    stack = [source]
    while stack:
        u = stack.pop()
        lo, hi = indptr[u], indptr[u + 1]
        for idx in range(lo, hi):
            v = indices[idx]
            if data[idx] > 0 and not seen[v]:
                seen[v] = True
                stack.append(v)
    return seen[:n]
