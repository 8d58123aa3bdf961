"""Synthetic genotype/phenotype generation for experiments and tests.

Markers are biallelic dosages (0/1/2) drawn per cluster from allele
frequencies drifted away from a shared base under the Balding-Nichols model,
so the ``divergence`` parameter plays the role of an F_ST-like drift
coefficient.  Within each cluster the frequencies drift a second time in
sibship-sized groups (``family_size``), giving the relatedness continuum of
a structured breeding panel rather than an exchangeable cloud; both drift
levels share the single ``divergence`` knob, so ``divergence = 0`` collapses
to one homogeneous population.  The phenotype is an additive sum of a subset
of marker columns with standard-normal effects, plus Gaussian noise scaled
so the realized heritability matches the target in expectation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterAssignment
from .errors import ContractError
from .markers import MarkerMatrix, PhenotypeVector

__all__ = ["SimulationSpec", "SimulatedDataset", "simulate_data"]


@dataclass(frozen=True)
class SimulationSpec:
    """Shape of a synthetic dataset."""

    n_individuals: int
    n_markers: int
    n_qtl: int
    heritability: float
    n_clusters: int = 1
    divergence: float = 0.0
    family_size: int = 10

    def __post_init__(self):
        if self.n_individuals < 2:
            raise ContractError("n_individuals must be >= 2")
        if self.n_markers < 1:
            raise ContractError("n_markers must be >= 1")
        if not 1 <= self.n_qtl <= self.n_markers:
            raise ContractError("n_qtl must lie in [1, n_markers]")
        if not 0.0 < self.heritability < 1.0:
            raise ContractError("heritability must lie in (0, 1)")
        if not 1 <= self.n_clusters <= self.n_individuals:
            raise ContractError("n_clusters must lie in [1, n_individuals]")
        if not 0.0 <= self.divergence < 1.0:
            raise ContractError("divergence must lie in [0, 1)")
        if self.family_size < 1:
            raise ContractError("family_size must be >= 1")


@dataclass(frozen=True)
class SimulatedDataset:
    """Markers, phenotype and cluster structure plus the simulation truth."""

    markers: MarkerMatrix
    phenotype: PhenotypeVector
    clusters: ClusterAssignment
    genetic_values: np.ndarray
    qtl_indices: np.ndarray
    qtl_effects: np.ndarray
    cluster_allele_freqs: np.ndarray  # (n_clusters, n_markers)


def _cluster_sizes(n: int, c: int) -> np.ndarray:
    sizes = np.full(c, n // c, dtype=int)
    sizes[: n % c] += 1
    return sizes


def _drift(freq, f, rng):
    """One Balding-Nichols drift step away from a frequency vector."""
    drifted = rng.beta(freq * (1.0 - f) / f, (1.0 - freq) * (1.0 - f) / f)
    return np.clip(drifted, 0.01, 0.99)


def simulate_data(spec: SimulationSpec, seed: int = 0) -> SimulatedDataset:
    """Draw one synthetic dataset; a pure function of (spec, seed)."""
    rng = np.random.default_rng(seed)
    n, m, c = spec.n_individuals, spec.n_markers, spec.n_clusters
    f = spec.divergence

    base_freq = rng.uniform(0.1, 0.9, size=m)
    if f > 0:
        cluster_freq = np.vstack([_drift(base_freq, f, rng) for _ in range(c)])
    else:
        cluster_freq = np.tile(base_freq, (c, 1))

    sizes = _cluster_sizes(n, c)
    labels = np.repeat(np.arange(1, c + 1), sizes)
    dosages = np.empty((n, m))
    start = 0
    for cl in range(c):
        remaining = sizes[cl]
        while remaining > 0:
            members = min(spec.family_size, remaining)
            family_freq = (_drift(cluster_freq[cl], f, rng) if f > 0
                           else cluster_freq[cl])
            dosages[start:start + members] = rng.binomial(
                2, family_freq, size=(members, m))
            start += members
            remaining -= members

    qtl = np.sort(rng.choice(m, size=spec.n_qtl, replace=False))
    effects = rng.standard_normal(spec.n_qtl)
    genetic = dosages[:, qtl] @ effects
    genetic = genetic - genetic.mean()
    var_g = float(genetic.var())
    if var_g <= 0:
        # all-QTL-monomorphic corner; give the trait pure noise variance 1
        noise_sd = 1.0
    else:
        noise_sd = np.sqrt(var_g * (1.0 - spec.heritability) / spec.heritability)
    y = genetic + rng.normal(0.0, noise_sd, size=n)

    width = max(4, len(str(n)))
    ids = tuple(f"G{i:0{width}d}" for i in range(1, n + 1))
    markers = MarkerMatrix(ids, dosages,
                           tuple(f"m{j + 1:0{max(4, len(str(m)))}d}" for j in range(m)))
    phenotype = PhenotypeVector(ids, y, trait_name="trait")
    clusters = ClusterAssignment(ids, labels, c)
    return SimulatedDataset(markers, phenotype, clusters, genetic, qtl, effects,
                            cluster_freq)
