"""Command-line interface.

Subcommands
-----------
select    one-shot training-set selection: markers + test ids + size -> ids
compare   replicated optimized-vs-random experiment from a JSON config
simulate  emit a synthetic dataset as CSV files
cluster   emit Ward cluster assignments for a marker file

Exit codes: 0 success, 1 usage/contract error, 2 data error, 3 internal
numerical failure.  The run log goes to standard error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .clustering import ward_cluster
from .criteria import CriterionConfig
from .errors import ContractError, DataError, NumericalError
from .experiment import ExperimentConfig, emit_report, run_comparison
from .ga import GAConfig, optimize
from .markers import center_scale, load_markers, partition, principal_components
from .simulate import SimulationSpec, simulate_data

logger = logging.getLogger("pevsel")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ContractError(message)


def _add_ga_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("genetic algorithm")
    g.add_argument("--population-size", type=int, default=None)
    g.add_argument("--n-generations", type=int, default=None)
    g.add_argument("--elite-fraction", type=float, default=None)
    g.add_argument("--mutation-rate", type=float, default=None)
    g.add_argument("--crossover-rate", type=float, default=None)
    g.add_argument("--convergence-patience", type=int, default=None)
    g.add_argument("--n-starts", type=int, default=None)


def _add_criterion_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("selection criterion")
    g.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="ridge shrinkage (default 1.0 unless --h2 given)")
    g.add_argument("--h2", type=float, default=None,
                   help="trait heritability; sets lambda = m * (1 - h2) / h2")
    g.add_argument("--k", type=int, default=None,
                   help="number of principal components (default: auto)")
    g.add_argument("--no-intercept", action="store_true",
                   help="drop the intercept column from the criterion")


def _ga_config_from_args(args, seed) -> GAConfig:
    cfg = GAConfig(seed=seed)
    overrides = {name: getattr(args, name) for name in
                 ("population_size", "n_generations", "elite_fraction",
                  "mutation_rate", "crossover_rate", "convergence_patience",
                  "n_starts")
                 if getattr(args, name, None) is not None}
    return replace(cfg, **overrides)


def _read_id_list(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        ids = tuple(line.strip() for line in fh if line.strip())
    if not ids:
        raise DataError(f"{path}: no ids found")
    return ids


def _write_lines(lines, path):
    if path is None:
        for line in lines:
            print(line)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _cmd_select(args) -> int:
    raw = load_markers(args.markers, headerless=args.headerless)
    scaled = center_scale(raw)
    test_ids = _read_id_list(args.test_ids)
    if args.candidate_ids:
        candidate_ids = _read_id_list(args.candidate_ids)
    else:
        candidate_ids = tuple(i for i in scaled.ids if i not in set(test_ids))
    part = partition(scaled, test_ids, candidate_ids)

    criterion = CriterionConfig(lam=args.lam, h2=args.h2, k=args.k,
                                include_intercept=not args.no_intercept)
    criterion = criterion.resolved(scaled.m)
    basis = principal_components(scaled, k=criterion.k)
    ga_cfg = _ga_config_from_args(args, seed=args.seed)

    result = optimize(part, basis, args.n_train, ga_cfg, criterion)
    selected = [part.candidate_ids[i]
                for i in result.best_genome.selected_indices()]
    logger.info("selected %d of %d candidates; criterion %.6g after %d "
                "evaluations", args.n_train, part.n_candidates,
                result.best_fitness, result.evaluations)
    _write_lines(selected, args.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    payload = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            try:
                payload = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"{args.config}: invalid JSON ({exc})") from None
    # CLI flags override config keys of the same name
    overrides = {
        "markers": args.markers, "phenotypes": args.phenotypes,
        "scenario": args.scenario, "n_test": args.n_test,
        "n_train": args.n_train, "n_replications": args.n_replications,
        "test_year": args.test_year, "n_clusters": args.n_clusters,
        "seed": args.seed, "lambda": args.lam, "h2": args.h2, "k": args.k,
        "population_size": args.population_size,
        "n_generations": args.n_generations,
        "elite_fraction": args.elite_fraction,
        "mutation_rate": args.mutation_rate,
        "crossover_rate": args.crossover_rate,
        "convergence_patience": args.convergence_patience,
        "n_starts": args.n_starts,
    }
    for key, value in overrides.items():
        if value is not None:
            payload[key] = value
    if args.headerless:
        payload["headerless"] = True
    if args.share_selection:
        payload["share_selection"] = True
    if args.no_intercept:
        payload["include_intercept"] = False
    if args.traits:
        payload["traits"] = args.traits

    config = ExperimentConfig.from_dict(payload)
    report = run_comparison(config)
    emit_report(report, args.out, fmt=args.format)
    logger.info("wrote %s report to %s", args.format, args.out)
    for agg in report.aggregates:
        logger.info(
            "%s trait=%s n_train=%d: mean accuracy optimized %.4f vs random "
            "%.4f (mean difference %.4f)",
            agg["scenario"], agg["trait"], agg["n_train"],
            agg["mean_accuracy_optimized"] if agg["mean_accuracy_optimized"]
            is not None else float("nan"),
            agg["mean_accuracy_random"] if agg["mean_accuracy_random"]
            is not None else float("nan"),
            agg["mean_accuracy_difference"] if agg["mean_accuracy_difference"]
            is not None else float("nan"),
        )
    return EXIT_OK


def _cmd_simulate(args) -> int:
    spec = SimulationSpec(
        n_individuals=args.n, n_markers=args.m, n_qtl=args.n_qtl,
        heritability=args.h2, n_clusters=args.n_clusters,
        divergence=args.divergence, family_size=args.family_size,
    )
    sim = simulate_data(spec, seed=args.seed)
    prefix = args.out_prefix
    markers_path = f"{prefix}_markers.csv"
    with open(markers_path, "w", encoding="utf-8") as fh:
        fh.write("id," + ",".join(sim.markers.marker_names) + "\n")
        for i, row in zip(sim.markers.ids, sim.markers.values):
            fh.write(i + "," + ",".join(str(int(v)) for v in row) + "\n")
    phen_path = f"{prefix}_phenotypes.csv"
    with open(phen_path, "w", encoding="utf-8") as fh:
        fh.write(f"id,{sim.phenotype.trait_name}\n")
        for i, v in zip(sim.phenotype.ids, sim.phenotype.values):
            fh.write(f"{i},{v!r}\n")
    clusters_path = f"{prefix}_clusters.csv"
    with open(clusters_path, "w", encoding="utf-8") as fh:
        fh.write("id,cluster\n")
        for i, l in zip(sim.clusters.ids, sim.clusters.labels):
            fh.write(f"{i},{l}\n")
    logger.info("wrote %s, %s, %s", markers_path, phen_path, clusters_path)
    return EXIT_OK


def _cmd_cluster(args) -> int:
    raw = load_markers(args.markers, headerless=args.headerless)
    scaled = center_scale(raw)
    assignment = ward_cluster(scaled, args.n_clusters)
    lines = ["id,cluster"] + [f"{i},{l}" for i, l in
                              zip(assignment.ids, assignment.labels)]
    _write_lines(lines, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pevsel",
                     description="Targeted training-set selection for "
                                 "genomic prediction")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-level", default="INFO",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", parents=[], help="select a training set "
                       "targeted at a fixed test set")
    p.add_argument("--markers", required=True, help="marker CSV file")
    p.add_argument("--headerless", action="store_true",
                   help="markers are headerless whitespace-delimited")
    p.add_argument("--test-ids", required=True,
                   help="file with one test id per line")
    p.add_argument("--candidate-ids", default=None,
                   help="file with one candidate id per line "
                        "(default: all non-test ids)")
    p.add_argument("--n-train", type=int, required=True,
                   help="training-set size to select")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    _add_criterion_flags(p)
    _add_ga_flags(p)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("compare", help="replicated optimized-vs-random "
                       "experiment")
    p.add_argument("--config", default=None, help="JSON experiment config")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--markers", default=None)
    p.add_argument("--phenotypes", default=None)
    p.add_argument("--headerless", action="store_true")
    p.add_argument("--traits", nargs="+", default=None)
    p.add_argument("--scenario", choices=["random-split", "temporal-split",
                                          "cross-cluster"], default=None)
    p.add_argument("--n-test", type=int, default=None)
    p.add_argument("--n-train", type=int, nargs="+", default=None)
    p.add_argument("--n-replications", type=int, default=None)
    p.add_argument("--test-year", type=int, default=None)
    p.add_argument("--n-clusters", type=int, default=None)
    p.add_argument("--share-selection", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    _add_criterion_flags(p)
    _add_ga_flags(p)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("simulate", help="emit a synthetic dataset")
    p.add_argument("--n", type=int, required=True, help="individuals")
    p.add_argument("--m", type=int, required=True, help="markers")
    p.add_argument("--n-qtl", type=int, required=True)
    p.add_argument("--h2", type=float, required=True)
    p.add_argument("--n-clusters", type=int, default=1)
    p.add_argument("--divergence", type=float, default=0.0)
    p.add_argument("--family-size", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("cluster", help="Ward cluster assignments for a "
                       "marker file")
    p.add_argument("--markers", required=True)
    p.add_argument("--headerless", action="store_true")
    p.add_argument("--n-clusters", type=int, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cluster)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(stream=sys.stderr, level=args.log_level,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
