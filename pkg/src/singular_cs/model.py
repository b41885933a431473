"""Particle state, cluster partition and the alignment right-hand side.

Stuck particles are kept as clusters: one state row per cluster plus a member
count (multiplicity).  Every member of a cluster carries its representative's
position and velocity bit for bit; interactions inside a cluster are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidMerge, InvalidParameter, NonFinite, SingularEvaluation
from .weights import WeightKernel


class Normalization(str, Enum):
    OVER_N = "over_n"
    UNNORMALIZED = "unnormalized"


class ClusterPartition:
    """Disjoint sets over particle indices with union by rank and path compression."""

    def __init__(self, n: int):
        if n < 1:
            raise InvalidParameter("partition needs at least one element")
        self.parent = np.arange(n, dtype=np.int64)
        self.rank = np.zeros(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)
        self.merge_log: list[tuple[float, int, int]] = []

    def __len__(self) -> int:
        return len(self.parent)

    def copy(self) -> "ClusterPartition":
        other = ClusterPartition.__new__(ClusterPartition)
        other.parent = self.parent.copy()
        other.rank = self.rank.copy()
        other.size = self.size.copy()
        other.merge_log = list(self.merge_log)
        return other

    def find(self, i: int) -> int:
        root = int(i)
        while self.parent[root] != root:
            root = int(self.parent[root])
        while self.parent[i] != root:
            self.parent[i], i = root, int(self.parent[i])
        return root

    def same(self, i: int, j: int) -> bool:
        return self.find(i) == self.find(j)

    def union(self, i: int, j: int, t: float) -> int:
        ri, rj = self.find(i), self.find(j)
        if ri == rj:
            raise InvalidMerge(f"particles {i} and {j} already share cluster {ri}")
        if self.rank[ri] < self.rank[rj] or (self.rank[ri] == self.rank[rj] and rj < ri):
            ri, rj = rj, ri
        self.parent[rj] = ri
        self.size[ri] += self.size[rj]
        if self.rank[ri] == self.rank[rj]:
            self.rank[ri] += 1
        self.merge_log.append((float(t), int(i), int(j)))
        return ri

    def labels(self) -> np.ndarray:
        """Root of every particle."""
        return np.array([self.find(i) for i in range(len(self))], dtype=np.int64)

    def roots(self) -> np.ndarray:
        """Cluster roots in increasing index order."""
        return np.unique(self.labels())

    def n_clusters(self) -> int:
        return len(self.roots())

    def multiplicities(self) -> np.ndarray:
        return self.size[self.roots()].astype(float)

    def members(self, root: int) -> np.ndarray:
        return np.flatnonzero(self.labels() == self.find(root))

    @property
    def n_merges(self) -> int:
        return len(self.merge_log)

    def refines(self, other: "ClusterPartition") -> bool:
        """True if every cluster of ``self`` lies inside a cluster of ``other``."""
        mine, theirs = self.labels(), other.labels()
        for root in np.unique(mine):
            if len(np.unique(theirs[mine == root])) != 1:
                return False
        return True


@dataclass
class ParticleSystem:
    t: float
    positions: np.ndarray
    velocities: np.ndarray
    partition: ClusterPartition | None = None
    normalization: Normalization = Normalization.OVER_N

    def __post_init__(self) -> None:
        self.positions = np.array(self.positions, dtype=float, ndmin=2)
        self.velocities = np.array(self.velocities, dtype=float, ndmin=2)
        if self.positions.shape != self.velocities.shape:
            raise InvalidParameter(
                f"positions {self.positions.shape} and velocities {self.velocities.shape} differ"
            )
        if self.positions.ndim != 2 or self.positions.shape[0] < 1 or self.positions.shape[1] < 1:
            raise InvalidParameter("state arrays must be N x d with N, d >= 1")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))):
            raise NonFinite("state contains NaN or Inf")
        if self.partition is None:
            self.partition = ClusterPartition(self.positions.shape[0])
        elif len(self.partition) != self.positions.shape[0]:
            raise InvalidParameter("partition size does not match N")
        self.normalization = Normalization(self.normalization)

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def coupling(self) -> float:
        return 1.0 / self.n_particles if self.normalization is Normalization.OVER_N else 1.0

    def copy(self) -> "ParticleSystem":
        return ParticleSystem(
            self.t, self.positions.copy(), self.velocities.copy(),
            self.partition.copy(), self.normalization,
        )

    def reduced(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(roots, multiplicities, X, V) with one row per cluster."""
        roots = self.partition.roots()
        return roots, self.partition.size[roots].astype(float), self.positions[roots], self.velocities[roots]

    def scatter(self, roots: np.ndarray, X: np.ndarray, V: np.ndarray) -> None:
        """Write cluster rows back to every member."""
        labels = self.partition.labels()
        row = np.searchsorted(roots, labels)
        self.positions = X[row].copy()
        self.velocities = V[row].copy()

    def is_consistent(self) -> bool:
        labels = self.partition.labels()
        return bool(
            np.array_equal(self.positions, self.positions[labels])
            and np.array_equal(self.velocities, self.velocities[labels])
        )


def settle_initial_clusters(state: ParticleSystem) -> None:
    """Merge particles that start with bitwise identical position and velocity."""
    n = state.n_particles
    for i in range(n):
        for j in range(i + 1, n):
            if state.partition.same(i, j):
                continue
            if np.array_equal(state.positions[i], state.positions[j]) and np.array_equal(
                state.velocities[i], state.velocities[j]
            ):
                state.partition.union(i, j, state.t)


def pair_geometry(X: np.ndarray):
    """Differences x_J - x_I (K, K, d) and distances (K, K)."""
    dx = X[None, :, :] - X[:, None, :]
    return dx, np.sqrt(np.einsum("ijk,ijk->ij", dx, dx))


def cluster_accelerations(X, V, m, kernel: WeightKernel, coupling: float) -> np.ndarray:
    """a_I = c * sum_{J != I} m_J (V_J - V_I) psi(|X_J - X_I|)."""
    k = X.shape[0]
    if k == 1:
        return np.zeros_like(V)
    _, dist = pair_geometry(X)
    off = ~np.eye(k, dtype=bool)
    if kernel.is_singular and kernel.floor == 0 and np.any(dist[off] == 0):
        raise SingularEvaluation("distinct clusters coincide and the kernel has no floor")
    with np.errstate(divide="ignore"):
        w = np.where(off, kernel(dist), 0.0) * m[None, :]
    dv = V[None, :, :] - V[:, None, :]
    acc = coupling * np.sum(w[:, :, None] * dv, axis=1)
    if not np.all(np.isfinite(acc)):
        raise NonFinite("acceleration overflow")
    return acc


def rhs(state: ParticleSystem, kernel: WeightKernel) -> np.ndarray:
    """Accelerations of all N particles; members receive their cluster's value."""
    roots, m, X, V = state.reduced()
    acc = cluster_accelerations(X, V, m, kernel, state.coupling)
    row = np.searchsorted(roots, state.partition.labels())
    return acc[row]


def momentum(state: ParticleSystem) -> np.ndarray:
    return state.velocities.sum(axis=0)


def velocity_diameter_r(state: ParticleSystem) -> float:
    """r = sum over ordered pairs (i, j) of |v_i - v_j|^2."""
    _, m, _, V = state.reduced()
    return cluster_r(V, m)


def cluster_r(V, m) -> float:
    dv = V[None, :, :] - V[:, None, :]
    return float(np.sum(m[:, None] * m[None, :] * np.einsum("ijk,ijk->ij", dv, dv)))


def dissipation_R(state: ParticleSystem, kernel: WeightKernel) -> float:
    """R = sum over ordered inter-cluster pairs of |v_i - v_j|^2 psi(|x_i - x_j|), raw kernel."""
    _, m, X, V = state.reduced()
    return cluster_R(X, V, m, kernel)


def cluster_R(X, V, m, kernel: WeightKernel) -> float:
    k = X.shape[0]
    if k == 1:
        return 0.0
    _, dist = pair_geometry(X)
    dv = V[None, :, :] - V[:, None, :]
    speed2 = np.einsum("ijk,ijk->ij", dv, dv)
    off = ~np.eye(k, dtype=bool)
    raw = kernel.raw()
    if raw.is_singular:
        hit = off & (dist == 0)
        if np.any(speed2[hit] > 0):
            return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(off & (speed2 > 0), speed2 * raw(dist), 0.0)
    return float(np.sum(m[:, None] * m[None, :] * terms))
