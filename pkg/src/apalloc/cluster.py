"""Spatial AP clustering and per-cluster problem decomposition."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .model import Problem


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...]
    iterations: int


def _sqdist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centroids = [points[rng.integers(n)]]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.integers(n) if total == 0 else rng.choice(n, p=d2 / total)
        centroids.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centroids, dtype=float)


def kmeans(points, k: int, seed: int = 0, max_iters: int = 300) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ start."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an (n, d) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(points):
        raise ValueError(f"k={k} exceeds the number of points ({len(points)})")
    rng = np.random.default_rng(seed)
    centroids = _plusplus(points, k, rng)
    history = []
    labels = np.argmin(_sqdist(points, centroids), axis=1)
    it = 0
    for it in range(1, max_iters + 1):
        history.append(float(_sqdist(points, centroids)[np.arange(len(points)), labels].sum()))
        new = centroids.copy()
        for c in range(k):
            members = labels == c
            if members.any():
                new[c] = points[members].mean(axis=0)
            else:
                # re-seed an empty cluster at the worst-served point
                d = _sqdist(points, new)[np.arange(len(points)), labels]
                new[c] = points[int(np.argmax(d))]
        new_labels = np.argmin(_sqdist(points, new), axis=1)
        centroids = new
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    inertia = float(_sqdist(points, centroids)[np.arange(len(points)), labels].sum())
    history.append(inertia)
    return KMeansResult(labels, centroids, inertia, tuple(history), it)


def silhouette(points, labels) -> float:
    """Mean silhouette coefficient (singleton clusters score 0)."""
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    ks = np.unique(labels)
    if not 2 <= len(ks) <= len(points) - 1:
        raise ValueError("silhouette needs 2 <= clusters <= n - 1")
    d = np.sqrt(_sqdist(points, points))
    if not d.any():
        raise ValueError("silhouette undefined: all points coincide")
    s = np.zeros(len(points))
    for i in range(len(points)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = d[i, own].sum() / (own.sum() - 1)
        b = min(d[i, labels == c].mean() for c in ks if c != labels[i])
        m = max(a, b)
        s[i] = 0.0 if m == 0 else (b - a) / m
    return float(s.mean())


def silhouette_select(points, k_range: Iterable[int], seed: int = 0,
                      n_init: int = 3) -> tuple[int, dict[int, float]]:
    """Pick the k with the best silhouette; ties go to the smaller k.

    For each k the lowest-inertia clustering out of ``n_init`` seeded runs
    is scored.
    """
    points = np.asarray(points, dtype=float)
    ks = sorted(set(k_range))
    if not ks:
        raise ValueError("k_range is empty")
    if len(points) and np.all(points == points[0]):
        raise ValueError("silhouette undefined: all points coincide")
    if ks[0] < 2 or ks[-1] > len(points) - 1:
        raise ValueError(f"k_range must lie within [2, {len(points) - 1}]")
    scores = {}
    for k in ks:
        best = min((kmeans(points, k, seed=seed * 1000 + r) for r in range(n_init)),
                   key=lambda res: res.inertia)
        scores[k] = silhouette(points, best.labels)
    top = max(scores.values())
    return min(k for k, v in scores.items() if v == top), scores


@dataclass(frozen=True)
class SubWorld:
    cluster: int
    ap_cols: np.ndarray
    rows: np.ndarray
    problem: Problem


def route_terminals(q_known: np.ndarray, labels: np.ndarray,
                    terminal_pos=None, ap_pos=None) -> np.ndarray:
    """Cluster of each terminal: that of its best last-known AP.

    Terminals with no stored quality fall back to the cluster of the nearest
    AP if their position is known, otherwise -1.
    """
    n = q_known.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    if q_known.shape[1] == 0:
        return out
    seen = q_known.max(axis=1) > 0
    out[seen] = labels[np.argmax(q_known[seen], axis=1)]
    if terminal_pos is not None and ap_pos is not None:
        terminal_pos = np.asarray(terminal_pos, dtype=float)
        for i in np.flatnonzero(~seen):
            if not np.all(np.isfinite(terminal_pos[i])):
                continue
            d = ((np.asarray(ap_pos) - terminal_pos[i]) ** 2).sum(axis=1)
            out[i] = labels[int(np.argmin(d))]
    return out


def decompose(problem: Problem, labels, route: np.ndarray | None = None,
              terminal_pos=None, ap_pos=None) -> list[SubWorld]:
    """Split a problem into independent per-cluster problems.

    ``labels`` gives each AP column's cluster. Every terminal lands in at
    most one sub-world and only sees its own cluster's APs there.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (problem.l,):
        raise ValueError("need one cluster label per AP")
    if route is None:
        route = route_terminals(problem.q, labels, terminal_pos, ap_pos)
    subs = []
    for c in np.unique(labels):
        cols = np.flatnonzero(labels == c)
        rows = np.flatnonzero(route == c)
        subs.append(SubWorld(int(c), cols, rows, problem.subproblem(rows, cols)))
    return subs


def decomposition_mask(problem: Problem, subs: Sequence[SubWorld]) -> np.ndarray:
    """(n, l) links that survive decomposition: own-cluster APs only."""
    mask = np.zeros((problem.n, problem.l), dtype=bool)
    for s in subs:
        mask[np.ix_(s.rows, s.ap_cols)] = True
    return mask


def write_labels(fh: IO[str], ap_ids, labels, positions):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["ap_id", "cluster_id", "x", "y"])
    for a, c, (x, y) in zip(ap_ids, labels, np.asarray(positions)):
        w.writerow([int(a), int(c), repr(float(x)), repr(float(y))])
