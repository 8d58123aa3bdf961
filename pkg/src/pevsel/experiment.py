"""Optimized-versus-random training-set comparison experiments.

Runs replicated experiments in which, for a drawn test set, a training set of
each requested size is chosen (a) by the genetic algorithm minimizing the PC
prediction-error criterion, and (b) by uniform random sampling; both are
validated by fitting the kinship mixed model and scoring test-set prediction
accuracy.  Within a replication the two pipelines share the test set and the
phenotypes; only the training subset differs.

Replications own independent RNG streams derived from (seed, replication
index, ...) so serial and parallel execution would produce identical
reports; the runner here is sequential.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import ward_cluster
from .criteria import CriterionConfig, TraceCriterion
from .errors import ContractError, DataError, DegenerateInputError
from .ga import GAConfig, optimize
from .gblup import accuracy, fit_spmm, predict_gebv
from .markers import (PopulationPartition, center_scale, kinship,
                      load_markers, load_phenotypes, principal_components)
from .simulate import SimulationSpec, simulate_data

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "ReportRow",
    "ComparisonReport",
    "run_comparison",
    "emit_report",
    "read_report_csv",
]

SCENARIOS = ("random-split", "temporal-split", "cross-cluster")

CSV_COLUMNS = ("scenario", "trait", "n_train", "replication",
               "accuracy_optimized", "accuracy_random",
               "criterion_optimized", "criterion_random")


def _stream(*key) -> np.random.Generator:
    """Independent deterministic RNG stream for a structured integer key."""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def _derived_seed(*key) -> int:
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


# stream tags, to keep the derived streams disjoint by construction
_TAG_SPLIT, _TAG_RANDOM, _TAG_GA = 101, 202, 303
_SHARED_TRAIT_TAG = 9999


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a comparison run depends on; serializable to/from JSON."""

    markers_path: str = None
    phenotypes_path: str = None
    headerless: bool = False
    simulation: SimulationSpec = None
    traits: tuple = None
    scenario: str = "random-split"
    n_test: int = 10
    n_train: tuple = (10,)
    n_replications: int = 1
    test_year: int = None
    n_clusters: int = 5
    share_selection: bool = False
    seed: int = 0
    criterion: CriterionConfig = field(default_factory=CriterionConfig)
    ga: GAConfig = field(default_factory=GAConfig)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ContractError(
                f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}"
            )
        if self.n_test < 3:
            raise ContractError("n_test must be >= 3")
        n_train = tuple(int(v) for v in (
            self.n_train if hasattr(self.n_train, "__iter__") else [self.n_train]))
        if not n_train or any(v < 1 for v in n_train):
            raise ContractError("every n_train must be >= 1")
        object.__setattr__(self, "n_train", n_train)
        if self.n_replications < 1:
            raise ContractError("n_replications must be >= 1")
        has_files = self.markers_path is not None
        if has_files == (self.simulation is not None):
            raise ContractError(
                "exactly one data source is required: marker/phenotype files "
                "or a simulation spec"
            )
        if has_files and self.phenotypes_path is None:
            raise ContractError("a phenotype file is required with a marker file")
        if self.traits is not None:
            object.__setattr__(self, "traits", tuple(str(t) for t in self.traits))

    def to_dict(self) -> dict:
        sim = None
        if self.simulation is not None:
            s = self.simulation
            sim = {"n": s.n_individuals, "m": s.n_markers, "n_qtl": s.n_qtl,
                   "h2": s.heritability, "n_clusters": s.n_clusters,
                   "divergence": s.divergence, "family_size": s.family_size}
        return {
            "markers": self.markers_path,
            "phenotypes": self.phenotypes_path,
            "headerless": self.headerless,
            "simulation": sim,
            "traits": list(self.traits) if self.traits is not None else None,
            "scenario": self.scenario,
            "n_test": self.n_test,
            "n_train": list(self.n_train),
            "n_replications": self.n_replications,
            "test_year": self.test_year,
            "n_clusters": self.n_clusters,
            "share_selection": self.share_selection,
            "seed": self.seed,
            "lambda": self.criterion.lam,
            "h2": self.criterion.h2,
            "k": self.criterion.k,
            "include_intercept": self.criterion.include_intercept,
            "population_size": self.ga.population_size,
            "n_generations": self.ga.n_generations,
            "elite_fraction": self.ga.elite_fraction,
            "mutation_rate": self.ga.mutation_rate,
            "crossover_rate": self.ga.crossover_rate,
            "convergence_patience": self.ga.convergence_patience,
            "n_starts": self.ga.n_starts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        unknown = set(d) - set(cls._KNOWN_KEYS)
        if unknown:
            raise ContractError(f"unknown config key(s): {sorted(unknown)}")
        sim = d.get("simulation")
        simulation = None
        if sim is not None:
            simulation = SimulationSpec(
                n_individuals=int(sim["n"]), n_markers=int(sim["m"]),
                n_qtl=int(sim["n_qtl"]), heritability=float(sim["h2"]),
                n_clusters=int(sim.get("n_clusters", 1)),
                divergence=float(sim.get("divergence", 0.0)),
                family_size=int(sim.get("family_size", 10)),
            )
        criterion = CriterionConfig(
            lam=d.get("lambda"), h2=d.get("h2"),
            k=int(d["k"]) if d.get("k") is not None else None,
            include_intercept=bool(d.get("include_intercept", True)),
        )
        ga_defaults = GAConfig()
        ga = GAConfig(
            population_size=int(d.get("population_size", ga_defaults.population_size)),
            n_generations=int(d.get("n_generations", ga_defaults.n_generations)),
            elite_fraction=float(d.get("elite_fraction", ga_defaults.elite_fraction)),
            mutation_rate=float(d.get("mutation_rate", ga_defaults.mutation_rate)),
            crossover_rate=float(d.get("crossover_rate", ga_defaults.crossover_rate)),
            convergence_patience=int(d.get("convergence_patience",
                                           ga_defaults.convergence_patience)),
            n_starts=int(d.get("n_starts", ga_defaults.n_starts)),
        )
        return cls(
            markers_path=d.get("markers"),
            phenotypes_path=d.get("phenotypes"),
            headerless=bool(d.get("headerless", False)),
            simulation=simulation,
            traits=d.get("traits"),
            scenario=d.get("scenario", "random-split"),
            n_test=int(d.get("n_test", 10)),
            n_train=d.get("n_train", (10,)),
            n_replications=int(d.get("n_replications", 1)),
            test_year=int(d["test_year"]) if d.get("test_year") is not None else None,
            n_clusters=int(d.get("n_clusters", 5)),
            share_selection=bool(d.get("share_selection", False)),
            seed=int(d.get("seed", 0)),
            criterion=criterion,
            ga=ga,
        )

    _KNOWN_KEYS = (
        "markers", "phenotypes", "headerless", "simulation", "traits",
        "scenario", "n_test", "n_train", "n_replications", "test_year",
        "n_clusters", "share_selection", "seed", "lambda", "h2", "k",
        "include_intercept", "population_size", "n_generations",
        "elite_fraction", "mutation_rate", "crossover_rate",
        "convergence_patience", "n_starts",
    )

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: invalid JSON config ({exc})") from None
        return cls.from_dict(payload)


@dataclass(frozen=True)
class ReportRow:
    scenario: str
    trait: str
    n_train: int
    replication: int
    accuracy_optimized: float  # None when accuracy was degenerate
    accuracy_random: float
    criterion_optimized: float
    criterion_random: float

    def to_dict(self) -> dict:
        return {c: getattr(self, c) for c in CSV_COLUMNS}


@dataclass(frozen=True)
class ComparisonReport:
    config: dict
    rows: tuple
    aggregates: tuple

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [r.to_dict() for r in self.rows],
            "aggregates": [dict(a) for a in self.aggregates],
        }


class _Dataset:
    """Shared per-run state: scaled markers, kinship, PC basis, traits."""

    def __init__(self, config: ExperimentConfig):
        if config.simulation is not None:
            sim = simulate_data(config.simulation, seed=config.seed)
            raw = sim.markers
            table_traits = {sim.phenotype.trait_name: sim.phenotype}
            self.years = None
        else:
            raw = load_markers(config.markers_path, headerless=config.headerless)
            table = load_phenotypes(config.phenotypes_path)
            names = config.traits if config.traits is not None else table.trait_names
            table_traits = {name: table.trait(name) for name in names}
            self.years = table.years
        if config.traits is not None:
            missing = set(config.traits) - set(table_traits)
            if missing:
                raise DataError(f"trait(s) not in data: {sorted(missing)}")
            table_traits = {t: table_traits[t] for t in config.traits}
        if not table_traits:
            raise DataError("no traits to analyze")
        self.traits = table_traits
        self.trait_names = tuple(table_traits)

        self.centered = center_scale(raw)
        marker_ids = set(self.centered.ids)
        for name, vec in self.traits.items():
            unknown = set(vec.ids) - marker_ids
            if unknown:
                raise DataError(
                    f"phenotyped id(s) without genotypes for trait {name!r}: "
                    f"{sorted(unknown)[:5]}"
                )
        self.kinship = kinship(self.centered)
        self.criterion = config.criterion.resolved(self.centered.m)
        self.basis = principal_components(self.centered, k=self.criterion.k)
        self.clusters = None
        if config.scenario == "cross-cluster":
            self.clusters = ward_cluster(self.centered, config.n_clusters)
        if config.scenario == "temporal-split" and self.years is None:
            raise DataError(
                "temporal-split requires a 'year' column in the phenotype file"
            )


def _draw_from(pool, n, rng) -> tuple:
    pool = sorted(pool)
    if len(pool) < n:
        raise DataError(f"need {n} individuals but only {len(pool)} are eligible")
    picked = rng.choice(len(pool), size=n, replace=False)
    return tuple(pool[i] for i in np.sort(picked))


def _split_ids(config, data: _Dataset, rep: int, trait_tag: int, observed):
    """Draw the test set and the candidate pool for one replication."""
    rng = _stream(config.seed, _TAG_SPLIT, rep, trait_tag)
    observed = sorted(observed)
    if config.scenario == "random-split":
        test_ids = _draw_from(observed, config.n_test, rng)
        candidates = tuple(sorted(set(observed) - set(test_ids)))
    elif config.scenario == "temporal-split":
        years = data.years
        missing = [i for i in observed if i not in years]
        if missing:
            raise DataError(f"id(s) without a year: {missing[:5]}")
        test_year = config.test_year
        if test_year is None:
            test_year = max(years[i] for i in observed)
        pool = [i for i in observed if years[i] == test_year]
        test_ids = _draw_from(pool, config.n_test, rng)
        candidates = tuple(sorted(i for i in observed if years[i] < test_year))
    else:  # cross-cluster
        labels = sorted({data.clusters.label_of(i) for i in observed})
        target = labels[rep % len(labels)]
        pool = [i for i in observed if data.clusters.label_of(i) == target]
        test_ids = _draw_from(pool, config.n_test, rng)
        candidates = tuple(sorted(
            i for i in observed if data.clusters.label_of(i) != target))
    if not candidates:
        raise DataError("no candidate individuals remain after the split")
    return test_ids, candidates


def _check_integrity(config, data: _Dataset, test_ids, train_ids):
    """Leak checks; these must hold in every replication by construction."""
    if set(train_ids) & set(test_ids):
        raise ContractError("training set overlaps the test set")
    if config.scenario == "temporal-split":
        test_year = min(data.years[i] for i in test_ids)
        bad = [i for i in train_ids if data.years[i] >= test_year]
        if bad:
            raise ContractError(f"temporal integrity violated by {bad[:5]}")
    elif config.scenario == "cross-cluster":
        test_clusters = {data.clusters.label_of(i) for i in test_ids}
        bad = [i for i in train_ids
               if data.clusters.label_of(i) in test_clusters]
        if bad:
            raise ContractError(f"cross-cluster integrity violated by {bad[:5]}")


def _fit_and_score(data: _Dataset, phenotype, train_ids, test_ids):
    """Fit the mixed model on a training set, return test accuracy (or None)."""
    train_sorted = tuple(sorted(train_ids))
    K_sub = data.kinship.subset(train_sorted + tuple(test_ids))
    fit = fit_spmm(phenotype.subset(train_sorted), K_sub, train_ids=train_sorted)
    predictions = predict_gebv(fit, test_ids)
    try:
        return accuracy(predictions, phenotype.subset(test_ids)).correlation
    except DegenerateInputError:
        return None


def _compare_once(config, data: _Dataset, rep, trait_tag, trait_names,
                  observed) -> list:
    """One replication: select, sample, fit and score for every n_train."""
    test_ids, candidates = _split_ids(config, data, rep, trait_tag, observed)
    part = PopulationPartition(candidates, test_ids)
    scores_cand = data.basis.rows(candidates)
    evaluator = TraceCriterion(data.basis.rows(test_ids),
                               data.criterion.effective_lambda,
                               data.criterion.include_intercept)
    rows = []
    for ni, n_train in enumerate(config.n_train):
        if n_train > len(candidates):
            raise ContractError(
                f"replication {rep}: n_train={n_train} exceeds the "
                f"{len(candidates)} available candidates"
            )
        ga_cfg = replace(config.ga,
                         seed=_derived_seed(config.seed, _TAG_GA, rep,
                                            trait_tag, ni))
        result = optimize(part, data.basis, n_train, ga_cfg, data.criterion)
        opt_idx = result.best_genome.selected_indices()
        opt_ids = tuple(candidates[i] for i in opt_idx)

        rand_rng = _stream(config.seed, _TAG_RANDOM, rep, trait_tag, ni)
        rand_idx = np.sort(rand_rng.choice(len(candidates), size=n_train,
                                           replace=False))
        rand_ids = tuple(candidates[i] for i in rand_idx)

        criterion_optimized = result.best_fitness
        criterion_random = evaluator(scores_cand[rand_idx])

        _check_integrity(config, data, test_ids, opt_ids)
        _check_integrity(config, data, test_ids, rand_ids)

        for trait in trait_names:
            phenotype = data.traits[trait]
            acc_opt = _fit_and_score(data, phenotype, opt_ids, test_ids)
            acc_rand = _fit_and_score(data, phenotype, rand_ids, test_ids)
            rows.append(ReportRow(
                scenario=config.scenario, trait=trait, n_train=n_train,
                replication=rep,
                accuracy_optimized=acc_opt, accuracy_random=acc_rand,
                criterion_optimized=criterion_optimized,
                criterion_random=criterion_random,
            ))
    return rows


def run_comparison(config: ExperimentConfig) -> ComparisonReport:
    """Run the full replicated optimized-versus-random experiment.

    A pure function of the config (which includes the seed): the same config
    always produces the identical report.
    """
    data = _Dataset(config)
    rows = []
    for rep in range(config.n_replications):
        logger.info("replication %d/%d", rep + 1, config.n_replications)
        if config.share_selection:
            observed = set(data.traits[data.trait_names[0]].ids)
            for name in data.trait_names[1:]:
                observed &= set(data.traits[name].ids)
            rows.extend(_compare_once(config, data, rep, _SHARED_TRAIT_TAG,
                                      data.trait_names, observed))
        else:
            for ti, trait in enumerate(data.trait_names):
                rows.extend(_compare_once(config, data, rep, ti, (trait,),
                                          data.traits[trait].ids))
    return ComparisonReport(config=config.to_dict(), rows=tuple(rows),
                            aggregates=tuple(_aggregate(rows)))


def _aggregate(rows) -> list:
    groups = {}
    for row in rows:
        groups.setdefault((row.scenario, row.trait, row.n_train), []).append(row)
    out = []
    for (scenario, trait, n_train), members in sorted(groups.items()):
        diffs = [r.accuracy_optimized - r.accuracy_random for r in members
                 if r.accuracy_optimized is not None
                 and r.accuracy_random is not None]
        opt = [r.accuracy_optimized for r in members
               if r.accuracy_optimized is not None]
        rand = [r.accuracy_random for r in members
                if r.accuracy_random is not None]
        out.append({
            "scenario": scenario,
            "trait": trait,
            "n_train": n_train,
            "n_replications": len(members),
            "n_scored": len(diffs),
            "mean_accuracy_optimized": float(np.mean(opt)) if opt else None,
            "mean_accuracy_random": float(np.mean(rand)) if rand else None,
            "mean_accuracy_difference": float(np.mean(diffs)) if diffs else None,
            "median_accuracy_difference": float(np.median(diffs)) if diffs else None,
            "mean_criterion_optimized": float(np.mean(
                [r.criterion_optimized for r in members])),
            "mean_criterion_random": float(np.mean(
                [r.criterion_random for r in members])),
        })
    return out


def emit_report(report: ComparisonReport, path, fmt: str = "json"):
    """Write a report to disk as JSON or CSV with a stable field order.

    The JSON form echoes the config (seed included) so the run can be
    replayed; the CSV form holds one row per (scenario, trait, n_train,
    replication).  Returns the path written.
    """
    if fmt not in ("json", "csv"):
        raise ContractError(f"unknown report format: {fmt!r}")
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for row in report.rows:
                writer.writerow([
                    row.scenario, row.trait, row.n_train, row.replication,
                    "" if row.accuracy_optimized is None else repr(row.accuracy_optimized),
                    "" if row.accuracy_random is None else repr(row.accuracy_random),
                    repr(row.criterion_optimized), repr(row.criterion_random),
                ])
    return path


def read_report_csv(path) -> list:
    """Parse a CSV report back into :class:`ReportRow` values (lossless)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise DataError(f"{path}: unexpected report header {header}")
        for fields in reader:
            rows.append(ReportRow(
                scenario=fields[0], trait=fields[1], n_train=int(fields[2]),
                replication=int(fields[3]),
                accuracy_optimized=float(fields[4]) if fields[4] else None,
                accuracy_random=float(fields[5]) if fields[5] else None,
                criterion_optimized=float(fields[6]),
                criterion_random=float(fields[7]),
            ))
    return rows
