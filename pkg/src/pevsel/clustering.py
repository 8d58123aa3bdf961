"""Hierarchical clustering of individuals by their marker profiles.

Used by the cross-cluster experiment scenario: agglomerative clustering with
Ward's minimum-variance criterion on Euclidean distances between marker rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .errors import ContractError, DataError
from .markers import MarkerMatrix

__all__ = ["ClusterAssignment", "ward_linkage", "ward_cluster"]


@dataclass(frozen=True)
class ClusterAssignment:
    """Cluster label (1..n_clusters) for every individual."""

    ids: tuple
    labels: np.ndarray
    n_clusters: int
    _index: dict = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int).copy()
        labels.setflags(write=False)
        if labels.shape[0] != len(self.ids):
            raise DataError("one label per id is required")
        if labels.size and (labels.min() < 1 or labels.max() > self.n_clusters):
            raise DataError(
                f"labels must lie in 1..{self.n_clusters}, "
                f"got range [{labels.min()}, {labels.max()}]"
            )
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index",
                           {i: r for r, i in enumerate(self.ids)})

    def label_of(self, individual_id: str) -> int:
        try:
            return int(self.labels[self._index[individual_id]])
        except KeyError:
            raise DataError(f"unknown individual id: {individual_id!r}") from None

    def members(self, label: int) -> tuple:
        return tuple(i for i, l in zip(self.ids, self.labels) if l == label)


def ward_linkage(M: MarkerMatrix) -> np.ndarray:
    """Agglomeration sequence (scipy linkage matrix) under Ward's criterion."""
    if M.n < 2:
        raise ContractError("clustering requires at least 2 individuals")
    return linkage(M.values, method="ward")


def ward_cluster(M: MarkerMatrix, n_clusters: int) -> ClusterAssignment:
    """Cut the Ward dendrogram of the marker rows into ``n_clusters`` groups."""
    if not 1 <= n_clusters <= M.n:
        raise ContractError(
            f"n_clusters={n_clusters} out of range [1, {M.n}]"
        )
    if n_clusters == M.n:
        labels = np.arange(1, M.n + 1)
    else:
        labels = fcluster(ward_linkage(M), t=n_clusters, criterion="maxclust")
    return ClusterAssignment(M.ids, labels, n_clusters)
