"""Genetic algorithm over fixed-size training subsets of a candidate set.

Solutions are binary masks over the candidate individuals with exactly
``n_train`` ones.  Both operators preserve that cardinality by construction
(intersection-respecting crossover, swap mutation), so no repair step is
needed.  Fitness is the trace of the PC prediction error variance of the
fixed test set given the selected rows, minimized.

Runs are deterministic for a given seed: all operator randomness is drawn
from a single PCG64 stream before any fitness evaluation is dispatched, and
ties in ranking are broken by the lexicographic order of the masks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .criteria import CriterionConfig, TraceCriterion
from .errors import ContractError, RefusalError
from .markers import PCBasis, PopulationPartition

__all__ = [
    "SubsetGenome",
    "GAConfig",
    "GAResult",
    "random_genome",
    "crossover",
    "mutate",
    "select_elites",
    "evaluate_fitness",
    "optimize",
    "exhaustive_oracle",
]


@dataclass(frozen=True)
class SubsetGenome:
    """Fixed-cardinality binary selection vector over the candidate set."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool).copy()
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def cardinality(self) -> int:
        return int(self.mask.sum())

    @property
    def n_candidates(self) -> int:
        return self.mask.shape[0]

    def selected_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def key(self) -> bytes:
        """Lexicographic tie-break key (mask bytes)."""
        return self.mask.tobytes()

    @classmethod
    def from_indices(cls, indices, n_candidates: int) -> "SubsetGenome":
        mask = np.zeros(n_candidates, dtype=bool)
        mask[np.asarray(list(indices), dtype=int)] = True
        return cls(mask)


@dataclass(frozen=True)
class GAConfig:
    """Search hyperparameters; defaults are conventional, all overridable."""

    population_size: int = 100
    n_generations: int = 200
    elite_fraction: float = 0.1
    mutation_rate: float = 0.01
    crossover_rate: float = 1.0
    seed: int = 0
    convergence_patience: int = 30
    n_starts: int = 1

    def __post_init__(self):
        if self.population_size < 2:
            raise ContractError("population_size must be >= 2")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ContractError("elite_fraction must lie in (0, 1)")
        for name in ("mutation_rate", "crossover_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1]")
        if self.n_generations < 1:
            raise ContractError("n_generations must be >= 1")
        if self.convergence_patience < 1:
            raise ContractError("convergence_patience must be >= 1")
        if self.n_starts < 1:
            raise ContractError("n_starts must be >= 1")


@dataclass(frozen=True)
class GAResult:
    """Outcome of one optimize() call.

    ``history`` is the best fitness in the population at each generation
    (nonincreasing because the best elite is carried unchanged);
    ``evaluations`` counts criterion evaluations actually performed
    (revisited genomes are served from a cache).
    """

    best_genome: SubsetGenome
    best_fitness: float
    history: tuple
    evaluations: int


def random_genome(n_candidates: int, n_train: int,
                  rng: np.random.Generator) -> SubsetGenome:
    """Uniform random subset of size ``n_train``."""
    if not 1 <= n_train <= n_candidates:
        raise ContractError(
            f"n_train={n_train} out of range [1, {n_candidates}]"
        )
    idx = rng.choice(n_candidates, size=n_train, replace=False)
    return SubsetGenome.from_indices(idx, n_candidates)


def crossover(parent_a: SubsetGenome, parent_b: SubsetGenome,
              rng: np.random.Generator) -> SubsetGenome:
    """Cardinality-preserving recombination.

    The child keeps every index selected by both parents and fills the
    remaining slots by a uniform draw without replacement from the symmetric
    difference.
    """
    if parent_a.n_candidates != parent_b.n_candidates:
        raise ContractError("parents have different candidate counts")
    if parent_a.cardinality != parent_b.cardinality:
        raise ContractError("parents have different cardinalities")
    common = parent_a.mask & parent_b.mask
    need = parent_a.cardinality - int(common.sum())
    child = common.copy()
    if need > 0:
        pool = np.flatnonzero(parent_a.mask ^ parent_b.mask)
        child[rng.choice(pool, size=need, replace=False)] = True
    genome = SubsetGenome(child)
    assert genome.cardinality == parent_a.cardinality
    return genome


def mutate(genome: SubsetGenome, rate: float,
           rng: np.random.Generator) -> SubsetGenome:
    """Swap mutation: each selected index is exchanged, independently with
    probability ``rate``, for a uniformly drawn unselected index."""
    if not 0.0 <= rate <= 1.0:
        raise ContractError(f"mutation rate must lie in [0, 1], got {rate}")
    selected = genome.selected_indices()
    unselected = np.flatnonzero(~genome.mask)
    flags = rng.random(selected.size) < rate
    n_swap = min(int(flags.sum()), unselected.size)
    if n_swap == 0:
        return genome
    out = selected[flags][:n_swap]
    into = rng.choice(unselected, size=n_swap, replace=False)
    mask = np.array(genome.mask)
    mask[out] = False
    mask[into] = True
    mutant = SubsetGenome(mask)
    assert mutant.cardinality == genome.cardinality
    return mutant


def select_elites(population, fitnesses, elite_fraction: float):
    """The ceil(elite_fraction * N) genomes of lowest fitness.

    Ties are broken by lexicographic mask order so selection is deterministic.
    """
    if len(population) != len(fitnesses):
        raise ContractError("population and fitness lists are misaligned")
    n_elite = max(1, math.ceil(elite_fraction * len(population)))
    order = sorted(range(len(population)),
                   key=lambda i: (fitnesses[i], population[i].key()))
    return [population[i] for i in order[:n_elite]]


def evaluate_fitness(genome: SubsetGenome, scores_candidate: np.ndarray,
                     scores_test: np.ndarray,
                     criterion: CriterionConfig) -> float:
    """Criterion trace for the rows selected by ``genome``.

    Equals ``criterion_trace(pev_pc(selected, test, lam, intercept))``; pure.
    """
    scores_candidate = np.atleast_2d(scores_candidate)
    if genome.n_candidates != scores_candidate.shape[0]:
        raise ContractError("genome length does not match candidate score rows")
    evaluator = TraceCriterion(scores_test, criterion.effective_lambda,
                               criterion.include_intercept)
    return evaluator(scores_candidate[genome.mask])


class _CachedFitness:
    """Memoizing wrapper around the trace criterion (pure, keyed on the mask)."""

    def __init__(self, scores_candidate, scores_test, criterion: CriterionConfig):
        self._scores = scores_candidate
        self._evaluator = TraceCriterion(scores_test, criterion.effective_lambda,
                                         criterion.include_intercept)
        self._cache = {}
        self.evaluations = 0

    def __call__(self, genome: SubsetGenome) -> float:
        key = genome.key()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        value = self._evaluator(self._scores[genome.mask])
        self._cache[key] = value
        self.evaluations += 1
        return value


def _resolve_criterion(criterion: CriterionConfig) -> CriterionConfig:
    if criterion.lam is not None:
        return criterion
    if criterion.h2 is not None:
        raise ContractError(
            "criterion carries h2 but no lambda; resolve it with the marker "
            "count first (CriterionConfig.resolved)"
        )
    return replace(criterion, lam=1.0)


def _ranked(population, values):
    order = sorted(range(len(population)),
                   key=lambda i: (values[i], population[i].key()))
    return [population[i] for i in order], [values[i] for i in order]


def _ga_single_start(scores_candidate, scores_test, n_train, config, criterion,
                     seed) -> GAResult:
    fitness = _CachedFitness(scores_candidate, scores_test, criterion)
    n_candidates = scores_candidate.shape[0]

    if n_train == n_candidates:
        genome = SubsetGenome(np.ones(n_candidates, dtype=bool))
        value = fitness(genome)
        return GAResult(genome, value, (value,), fitness.evaluations)

    rng = np.random.default_rng(seed)
    n_elite = max(1, math.ceil(config.elite_fraction * config.population_size))
    population = [random_genome(n_candidates, n_train, rng)
                  for _ in range(config.population_size)]
    population, values = _ranked(population, [fitness(g) for g in population])

    history = [values[0]]
    stale = 0
    for _ in range(config.n_generations):
        if stale >= config.convergence_patience:
            break
        elites = population[:n_elite]
        elite_values = values[:n_elite]

        children = []
        while len(elites) + len(children) < config.population_size:
            ia, ib = rng.integers(0, n_elite, size=2)
            if rng.random() < config.crossover_rate:
                child = crossover(elites[ia], elites[ib], rng)
            else:
                child = elites[ia]
            children.append(mutate(child, config.mutation_rate, rng))

        population, values = _ranked(
            elites + children, elite_values + [fitness(g) for g in children])
        stale = 0 if values[0] < history[-1] else stale + 1
        history.append(values[0])

    return GAResult(population[0], values[0], tuple(history),
                    fitness.evaluations)


def optimize(partition: PopulationPartition, basis: PCBasis, n_train: int,
             config: GAConfig = GAConfig(),
             criterion: CriterionConfig = CriterionConfig()) -> GAResult:
    """Search for the training subset minimizing the PC criterion trace.

    Parameters
    ----------
    partition : PopulationPartition
        Candidate and test id sets; the basis must cover both.
    basis : PCBasis
        Principal-component scores used by the criterion.
    n_train : int
        Number of candidates to select.  ``n_train`` equal to the candidate
        count is the forced full selection and skips the search.
    config, criterion
        Search hyperparameters and criterion settings (a criterion carrying
        only ``h2`` must be resolved to a concrete lambda beforehand).

    Returns
    -------
    GAResult
        Best genome (mask over ``partition.candidate_ids`` in order), its
        fitness, the per-generation best-fitness history and the number of
        criterion evaluations.  Deterministic given ``config.seed``.
    """
    criterion = _resolve_criterion(criterion)
    n_candidates = partition.n_candidates
    if n_train > n_candidates:
        raise ContractError(
            f"n_train={n_train} exceeds candidate count {n_candidates}"
        )
    if n_train < 1:
        raise ContractError("n_train must be >= 1")
    scores_candidate = basis.rows(partition.candidate_ids)
    scores_test = basis.rows(partition.test_ids)

    if config.n_starts == 1:
        return _ga_single_start(scores_candidate, scores_test, n_train,
                                config, criterion, config.seed)

    seeds = np.random.SeedSequence(config.seed).spawn(config.n_starts)
    results = [_ga_single_start(scores_candidate, scores_test, n_train,
                                config, criterion, s) for s in seeds]
    best = min(results, key=lambda r: (r.best_fitness, r.best_genome.key()))
    total_evals = sum(r.evaluations for r in results)
    return GAResult(best.best_genome, best.best_fitness, best.history,
                    total_evals)


def exhaustive_oracle(partition: PopulationPartition, basis: PCBasis,
                      n_train: int,
                      criterion: CriterionConfig = CriterionConfig(),
                      limit: int = 2_000_000):
    """Exact optimum by full enumeration of all size-``n_train`` subsets.

    Refuses (with the count) when the number of subsets exceeds ``limit``.
    Intended as a test oracle and for very small design problems.
    """
    criterion = _resolve_criterion(criterion)
    n_candidates = partition.n_candidates
    if not 1 <= n_train <= n_candidates:
        raise ContractError(
            f"n_train={n_train} out of range [1, {n_candidates}]"
        )
    count = math.comb(n_candidates, n_train)
    if count > limit:
        raise RefusalError(
            f"{count} subsets exceed the enumeration limit {limit}"
        )
    scores_candidate = basis.rows(partition.candidate_ids)
    evaluator = TraceCriterion(basis.rows(partition.test_ids),
                               criterion.effective_lambda,
                               criterion.include_intercept)
    best_genome, best_value = None, np.inf
    for combo in combinations(range(n_candidates), n_train):
        genome = SubsetGenome.from_indices(combo, n_candidates)
        value = evaluator(scores_candidate[genome.mask])
        if value < best_value:
            best_genome, best_value = genome, value
    return best_genome, float(best_value)
