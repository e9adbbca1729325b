"""Location clustering of jobs and diverse per-segment job selection."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .instance import Job, Location

MAX_ITER = 100
SHIFT_TOL = 1e-9


@dataclass
class ClusterState:
    """Cluster membership plus the per-cluster pool of unassigned jobs.

    Membership is fixed for a whole run; only ``unassigned`` shrinks, through
    :meth:`remove`, once a job has been accepted into the schedule.
    """

    n_clusters: int
    centroids: list[Location]
    membership: dict[str, int]
    unassigned: list[list[str]]
    locations: dict[str, Location]

    def remove(self, job_ids) -> None:
        drop = set(job_ids)
        for k, pool in enumerate(self.unassigned):
            self.unassigned[k] = [j for j in pool if j not in drop]

    @property
    def n_unassigned(self) -> int:
        return sum(len(p) for p in self.unassigned)


def _farthest_point_seeds(pts: np.ndarray, k: int, rng_seed: int) -> list[int]:
    rng = random.Random(rng_seed)
    seeds = [rng.randrange(len(pts))]
    d = np.sum((pts - pts[seeds[0]]) ** 2, axis=1)
    for _ in range(1, k):
        cand = d.copy()
        cand[seeds] = -1.0
        # argmax returns the first (lowest index) maximizer
        nxt = int(np.argmax(cand))
        seeds.append(nxt)
        d = np.minimum(d, np.sum((pts - pts[nxt]) ** 2, axis=1))
    return seeds


def _assign(pts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def kmeans(pts: np.ndarray, k: int, rng_seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's iteration from farthest-point seeds; returns (centers, labels)."""
    centers = pts[_farthest_point_seeds(pts, k, rng_seed)].astype(float)
    labels = _assign(pts, centers)
    for _ in range(MAX_ITER):
        new = centers.copy()
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                new[c] = members.mean(axis=0)
        shift = float(np.max(np.sqrt(((new - centers) ** 2).sum(axis=1))))
        centers = new
        labels = _assign(pts, centers)
        if shift < SHIFT_TOL:
            break
    return centers, labels


def _points(jobs) -> np.ndarray:
    return np.array([[j.location.x, j.location.y] for j in jobs], dtype=float)


def cluster_jobs(jobs: list[Job], n_clusters: int, rng_seed: int = 0) -> ClusterState:
    if not 1 <= n_clusters <= len(jobs):
        raise ValueError(f"n_clusters must be in [1, {len(jobs)}], got {n_clusters}")
    pts = _points(jobs)
    centers, labels = kmeans(pts, n_clusters, rng_seed)
    membership = {j.id: int(labels[i]) for i, j in enumerate(jobs)}
    unassigned: list[list[str]] = [[] for _ in range(n_clusters)]
    for j in jobs:
        unassigned[membership[j.id]].append(j.id)
    return ClusterState(
        n_clusters=n_clusters,
        centroids=[Location(float(x), float(y)) for x, y in centers],
        membership=membership,
        unassigned=unassigned,
        locations={j.id: j.location for j in jobs},
    )


def wcss(pts: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(((pts - centers[labels]) ** 2).sum())


def suggest_n_clusters(jobs: list[Job], k_max: int, rng_seed: int = 0) -> int:
    """Discrete elbow: the k maximizing W(k-1) - 2 W(k) + W(k+1).

    W is the k-means within-cluster sum of squares, padded flat at both ends
    (W(0) = W(1), W(k_max + 1) = W(k_max)), so k = 1 wins only when the curve
    carries no bend at all.  Differences below 1e-9 relative to W(1) count as
    zero; ties go to the smallest k.
    """
    k_max = max(1, min(k_max, len(jobs)))
    if k_max == 1:
        return 1
    pts = _points(jobs)
    w = [wcss(pts, *kmeans(pts, k, rng_seed)) for k in range(1, k_max + 1)]
    return elbow(w)


def elbow(w: list[float]) -> int:
    padded = [w[0]] + list(w) + [w[-1]]
    scale = 1e-9 * max(1.0, w[0])
    best_k, best = 1, 0.0
    for k in range(1, len(w) + 1):
        d2 = padded[k - 1] - 2 * padded[k] + padded[k + 1]
        if d2 <= scale:
            d2 = 0.0
        if d2 > best:
            best_k, best = k, d2
    return best_k


def apportion(counts: list[int], n: int) -> list[int]:
    """Largest-remainder split of ``n`` proportional to ``counts``."""
    total = sum(counts)
    n = min(n, total)
    if n <= 0:
        return [0] * len(counts)
    # exact integer arithmetic: quota_k = n * counts_k / total
    floors = [n * c // total for c in counts]
    rema = [n * c % total for c in counts]
    left = n - sum(floors)
    order = sorted(range(len(counts)), key=lambda k: (-rema[k], k))
    for k in order[:left]:
        floors[k] += 1
    return floors


def select(state: ClusterState, n_select: int) -> list[str]:
    if n_select < 1:
        raise ValueError("n_select must be >= 1")
    quotas = apportion([len(p) for p in state.unassigned], n_select)
    picked: list[str] = []
    for k, q in enumerate(quotas):
        if not q:
            continue
        c = state.centroids[k]
        pool = sorted(state.unassigned[k], key=lambda j: (state.locations[j].distance(c), j))
        picked.extend(pool[:q])
    return picked
