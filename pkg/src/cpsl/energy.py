"""Content-aware layer assignment as multi-label energy minimization.

The objective couples a robust depth-consistency unary with semantic and
instance coherence penalties and an edge-modulated Potts smoothness term over
4-neighborhoods. The Potts pairwise is metric, so alpha-expansion moves built
on binary min-cuts apply; the binary case is solved exactly by a single cut.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DepthMap, SemanticMaps
from .maxflow import min_cut_binary


class NoValidDepthError(ValueError):
    """Every depth pixel is marked invalid."""


@dataclass
class EnergyParams:
    """Weights of the assignment energy; all non-negative, K >= 1."""

    k: int = 4
    lambda_b: float = 0.5
    alpha_grad: float = 4.0
    beta_sem: float = 2.0
    huber_delta: float = 0.1
    kappa_sem: float = 0.5
    kappa_inst: float = 1.0
    max_iters: int = 8
    saliency_logistic: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("K must be >= 1")
        for name in ("lambda_b", "alpha_grad", "beta_sem", "huber_delta",
                     "kappa_sem", "kappa_inst"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class LayerAssignment:
    """Per-pixel layer indices with representative depths and the final energy."""

    labels: np.ndarray
    representative_depths: np.ndarray
    energy: float

    def __post_init__(self):
        labels = np.asarray(self.labels, np.int32)
        reps = np.asarray(self.representative_depths, np.float64)
        if labels.min() < 0 or labels.max() >= reps.shape[0]:
            raise ValueError("label out of range")
        if np.any(np.diff(reps) <= 0):
            raise ValueError("representative depths must be strictly increasing")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "representative_depths", reps)


def huber(r: np.ndarray, delta: float) -> np.ndarray:
    delta = max(delta, 1e-6)
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * a * a, delta * (a - 0.5 * delta))


def huber_delta_from_depth(depth: DepthMap, frac: float) -> float:
    z = depth.values[depth.valid]
    if z.size == 0:
        raise NoValidDepthError("depth map has no valid pixels")
    q1, q3 = np.percentile(z, [25, 75])
    return max(frac * float(q3 - q1), 1e-6)


def saliency_weight(sal: np.ndarray, logistic: bool) -> np.ndarray:
    sal = np.asarray(sal, np.float64)
    if logistic:
        return 1.0 / (1.0 + np.exp(-6.0 * (sal - 0.5)))
    return np.clip(sal, 0.0, 1.0)


def grid_edges(h: int, w: int) -> np.ndarray:
    """4-connected neighbor index pairs over a flattened HxW grid."""
    idx = np.arange(h * w).reshape(h, w)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return np.concatenate([horiz, vert], axis=0)


def edge_weights(image: np.ndarray, sem: SemanticMaps, params: EnergyParams) -> np.ndarray:
    """Contrast/semantic-edge modulated smoothness weights, one per grid edge."""
    img = np.asarray(image, np.float64)
    if img.ndim == 2:
        img = img[..., None]
    dh = np.linalg.norm(img[:, 1:] - img[:, :-1], axis=-1).ravel()
    dv = np.linalg.norm(img[1:, :] - img[:-1, :], axis=-1).ravel()
    bh = np.maximum(sem.semantic_edge[:, 1:], sem.semantic_edge[:, :-1]).ravel()
    bv = np.maximum(sem.semantic_edge[1:, :], sem.semantic_edge[:-1, :]).ravel()
    grad = np.concatenate([dh, dv])
    bsem = np.concatenate([bh, bv]).astype(np.float64)
    return np.exp(-(params.alpha_grad * grad + params.beta_sem * bsem))


def label_stats(labels: np.ndarray, depth: DepthMap, sem: SemanticMaps, k: int):
    """Per-label representative depth (median), majority semantic label, and
    the owning label of each instance (label holding the instance majority)."""
    flat = labels.ravel()
    zs = depth.values.ravel().astype(np.float64)
    valid = depth.valid.ravel()
    reps = np.full(k, np.nan)
    majority_sem = np.full(k, -1, np.int64)
    for lbl in range(k):
        sel = flat == lbl
        selv = sel & valid
        if selv.any():
            reps[lbl] = np.median(zs[selv])
        if sel.any():
            vals, counts = np.unique(sem.semantic_label.ravel()[sel], return_counts=True)
            majority_sem[lbl] = vals[np.argmax(counts)]
    owners: dict[int, int] = {}
    inst = sem.instance_id.ravel()
    for i in np.unique(inst):
        if i == 0:
            continue
        sel = inst == i
        vals, counts = np.unique(flat[sel], return_counts=True)
        owners[int(i)] = int(vals[np.argmax(counts)])
    return reps, majority_sem, owners


def unary_costs(depth: DepthMap, sem: SemanticMaps, params: EnergyParams,
                reps, majority_sem, owners) -> np.ndarray:
    """(N, K) data costs for the current label statistics."""
    h, w = depth.values.shape
    n, k = h * w, params.k
    zs = depth.values.ravel().astype(np.float64)
    valid = depth.valid.ravel()
    w_d = depth.stability.ravel().astype(np.float64) * valid
    w_s = saliency_weight(sem.saliency.ravel(), params.saliency_logistic)
    sem_lab = sem.semantic_label.ravel()
    inst = sem.instance_id.ravel()

    cost = np.zeros((n, k))
    for lbl in range(k):
        if np.isfinite(reps[lbl]):
            cost[:, lbl] += w_d * huber(zs - reps[lbl], params.huber_delta)
        if majority_sem[lbl] >= 0:
            cost[:, lbl] += w_s * params.kappa_sem * (sem_lab != majority_sem[lbl])
    for inst_id, owner in owners.items():
        sel = inst == inst_id
        for lbl in range(k):
            if lbl != owner:
                cost[sel, lbl] += params.kappa_inst
    return cost


def evaluate_energy(labels: np.ndarray, depth: DepthMap, sem: SemanticMaps,
                    image: np.ndarray, params: EnergyParams) -> float:
    """Total assignment energy with representative depths recomputed as the
    per-label median of assigned valid depths."""
    reps, majority_sem, owners = label_stats(labels, depth, sem, params.k)
    return _energy_with_stats(labels, depth, sem, image, params,
                              reps, majority_sem, owners)


def _energy_with_stats(labels, depth, sem, image, params,
                       reps, majority_sem, owners) -> float:
    h, w = depth.values.shape
    flat = labels.ravel()
    cost = unary_costs(depth, sem, params, reps, majority_sem, owners)
    unary = cost[np.arange(flat.size), flat].sum()
    edges = grid_edges(h, w)
    omega = edge_weights(image, sem, params)
    cut = flat[edges[:, 0]] != flat[edges[:, 1]]
    return float(unary + params.lambda_b * omega[cut].sum())


def _quantile_init(depth: DepthMap, k: int) -> np.ndarray:
    z = depth.values
    valid = depth.valid
    zv = z[valid]
    if zv.size == 0:
        raise NoValidDepthError("depth map has no valid pixels")
    edges = np.quantile(zv, np.linspace(0, 1, k + 1)[1:-1]) if k > 1 else np.array([])
    labels = np.searchsorted(edges, z, side="right").astype(np.int32)
    labels[~valid] = int(np.searchsorted(edges, np.median(zv), side="right"))
    return labels


def _expansion_sweep(labels, depth, sem, image, params, reps, majority_sem, owners):
    """One alpha-expansion cycle at fixed label statistics; exact for K = 2."""
    h, w = depth.values.shape
    n = h * w
    cost = unary_costs(depth, sem, params, reps, majority_sem, owners)
    edges = grid_edges(h, w)
    omega = params.lambda_b * edge_weights(image, sem, params)
    flat = labels.ravel().copy()
    order = [lbl for lbl in range(params.k) if np.isfinite(reps[lbl])]
    for alpha in order:
        cur = flat.copy()
        keep_cost = cost[np.arange(n), cur]
        # Pixels already at alpha must keep it: forbid the "keep old" state.
        keep_cost = np.where(cur == alpha, np.inf, keep_cost)
        move_cost = cost[:, alpha]
        li, lj = cur[edges[:, 0]], cur[edges[:, 1]]
        pw = np.stack([
            omega * (li != lj),          # keep, keep
            omega * (li != alpha),       # keep, move
            omega * (alpha != lj),       # move, keep
            np.zeros_like(omega),        # move, move
        ], axis=1)
        # Large finite stand-in for inf; stays clear of int64 capacity overflow.
        finite_keep = np.where(np.isinf(keep_cost), 1e8, keep_cost)
        x = min_cut_binary(finite_keep, move_cost, edges, pw)
        flat[x == 1] = alpha
    return flat.reshape(h, w)


def _finalize(labels: np.ndarray, depth: DepthMap, k: int):
    """Compress to occupied labels, reorder near-to-far, make depths strict."""
    reps, _, _ = label_stats(labels, depth, SemanticMaps.neutral(labels.shape), k)
    occupied = [l for l in range(k) if np.isfinite(reps[l]) and np.any(labels == l)]
    if not occupied:
        raise NoValidDepthError("no occupied labels")
    order = sorted(occupied, key=lambda l: reps[l])
    remap = {old: new for new, old in enumerate(order)}
    out = np.zeros_like(labels)
    for old, new in remap.items():
        out[labels == old] = new
    new_reps = np.array([reps[l] for l in order], np.float64)
    for i in range(1, len(new_reps)):
        if new_reps[i] <= new_reps[i - 1]:
            new_reps[i] = new_reps[i - 1] + 1e-6
    return out, new_reps


def solve_assignment(depth: DepthMap, sem: SemanticMaps, image: np.ndarray,
                     params: EnergyParams) -> LayerAssignment:
    """Minimize the assignment energy by alternating expansion moves with
    median representative-depth updates; returns the best labeling seen.

    Deterministic: fixed sweep order, ties resolved toward the lower label.
    Small instances additionally restart from data-derived depth seeds so the
    binary case reaches the global optimum.
    """
    if not depth.valid.any():
        raise NoValidDepthError("depth map has no valid pixels")
    h, w = depth.values.shape
    if params.k == 1:
        labels = np.zeros((h, w), np.int32)
        e = evaluate_energy(labels, depth, sem, image, params)
        lab, reps = _finalize(labels, depth, 1)
        return LayerAssignment(labels=lab, representative_depths=reps, energy=e)

    if h * w <= 16 and params.k <= 3:
        best_labels, best_e = _small_instance_solve(depth, sem, image, params)
    else:
        best_labels, best_e = _alternate(_quantile_init(depth, params.k),
                                         depth, sem, image, params)
    lab, reps = _finalize(best_labels, depth, params.k)
    return LayerAssignment(labels=lab, representative_depths=reps, energy=best_e)


def _alternate(init, depth, sem, image, params):
    labels = init.copy()
    best_labels = labels.copy()
    best_e = evaluate_energy(labels, depth, sem, image, params)
    for _ in range(params.max_iters):
        reps, majority_sem, owners = label_stats(labels, depth, sem, params.k)
        new = _expansion_sweep(labels, depth, sem, image, params,
                               reps, majority_sem, owners)
        e = evaluate_energy(new, depth, sem, image, params)
        if e < best_e - 1e-12:
            best_labels, best_e = new.copy(), e
        if np.array_equal(new, labels):
            break
        labels = new
    return best_labels, best_e


def _fast_evaluator(depth: DepthMap, sem: SemanticMaps, image, params: EnergyParams):
    """Closure computing the exact joint energy of a flat labeling, tuned for
    tiny instances (no per-call unique/median bookkeeping beyond the minimum)."""
    h, w = depth.values.shape
    z = depth.values.ravel().astype(np.float64)
    valid = depth.valid.ravel()
    w_d = depth.stability.ravel().astype(np.float64) * valid
    w_s = saliency_weight(sem.saliency.ravel(), params.saliency_logistic)
    sem_lab = sem.semantic_label.ravel()
    inst = sem.instance_id.ravel()
    inst_groups = [(i, np.nonzero(inst == i)[0]) for i in np.unique(inst) if i != 0]
    edges = grid_edges(h, w)
    omega = params.lambda_b * edge_weights(image, sem, params)
    k = params.k

    def energy(flat: np.ndarray) -> float:
        e = 0.0
        for lbl in range(k):
            sel = flat == lbl
            if not sel.any():
                continue
            selv = sel & valid
            if selv.any():
                rep = np.median(z[selv])
                e += float((w_d[sel] * huber(z[sel] - rep, params.huber_delta)).sum())
            vals, counts = np.unique(sem_lab[sel], return_counts=True)
            maj = vals[np.argmax(counts)]
            e += float((w_s[sel] * params.kappa_sem * (sem_lab[sel] != maj)).sum())
        for _, idxs in inst_groups:
            vals, counts = np.unique(flat[idxs], return_counts=True)
            owner = vals[np.argmax(counts)]
            e += params.kappa_inst * float((flat[idxs] != owner).sum())
        cut = flat[edges[:, 0]] != flat[edges[:, 1]]
        e += float(omega[cut].sum())
        return e

    return energy


def _icm(flat: np.ndarray, energy, k: int, max_passes: int = 20):
    """Greedy single-pixel moves on the joint energy; lower label wins ties."""
    cur = flat.copy()
    cur_e = energy(cur)
    for _ in range(max_passes):
        changed = False
        for i in range(cur.size):
            best_l, best_e = cur[i], cur_e
            for lbl in range(k):
                if lbl == cur[i]:
                    continue
                trial = cur.copy()
                trial[i] = lbl
                e = energy(trial)
                if e < best_e - 1e-12 or (abs(e - best_e) <= 1e-12 and lbl < best_l):
                    best_l, best_e = lbl, e
            if best_l != cur[i]:
                cur[i] = best_l
                cur_e = best_e
                changed = True
        if not changed:
            break
    return cur, cur_e


def _small_instance_solve(depth: DepthMap, sem: SemanticMaps, image, params):
    """Multi-start local search for tiny problems: depth-threshold, structural
    and seeded-random initializations, each refined by ICM, plus one
    expansion-alternation run. Deterministic for fixed inputs."""
    from itertools import combinations

    h, w = depth.values.shape
    n, k = h * w, params.k
    energy = _fast_evaluator(depth, sem, image, params)

    seeds: list[np.ndarray] = [_quantile_init(depth, k).ravel()]
    zv = np.unique(depth.values[depth.valid])
    centers_pool = list(zv) + [0.5 * (a + b) for a, b in zip(zv[:-1], zv[1:])]
    combos = list(combinations(sorted(set(map(float, centers_pool))), k))
    if len(combos) > 300:
        combos = combos[:: max(1, len(combos) // 300)]
    for combo in combos:
        centers = np.array(combo)
        seeds.append(np.abs(depth.values.ravel()[:, None] - centers).argmin(axis=1)
                     .astype(np.int32))
    inst_mask = (sem.instance_id.ravel() > 0).astype(np.int32)
    if 0 < inst_mask.sum() < n and k >= 2:
        seeds.append(inst_mask)
        seeds.append(1 - inst_mask)
    rng = np.random.default_rng(0)
    seeds.extend(rng.integers(0, k, (128, n)).astype(np.int32))

    best_flat, best_e = None, np.inf
    seen = set()
    for seed in seeds:
        key = seed.tobytes()
        if key in seen:
            continue
        seen.add(key)
        flat, e = _icm(np.asarray(seed, np.int32), energy, k)
        if e < best_e - 1e-12:
            best_flat, best_e = flat, e

    alt_labels, alt_e = _alternate(best_flat.reshape(h, w).copy(), depth, sem,
                                   image, params)
    if alt_e < best_e - 1e-12:
        refined, re_e = _icm(alt_labels.ravel().astype(np.int32), energy, k)
        return (refined.reshape(h, w) if re_e <= alt_e else alt_labels,
                min(re_e, alt_e))
    return best_flat.reshape(h, w), best_e
