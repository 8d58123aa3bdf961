"""pevsel: targeted training-set selection for genomic prediction.

Selects an optimal training subset of genotyped individuals from a candidate
pool, aimed at a fixed test set, by minimizing a principal-component
approximation of ridge prediction-error variance with a genetic algorithm,
then validates the selection with a kinship-based mixed model scored against
random samples of the same size.
"""

__version__ = "0.1.0"

from .clustering import ClusterAssignment, ward_cluster, ward_linkage
from .criteria import (CriterionConfig, TraceCriterion, criterion_trace,
                       delta_from_heritability, pc_criterion_trace, pev_ols,
                       pev_pc, pev_ridge, reliability_vanraden,
                       shrinkage_from_heritability)
from .errors import (ContractError, DataError, DegenerateInputError,
                     FormatError, NumericalError, PevselError, RefusalError)
from .experiment import (ComparisonReport, ExperimentConfig, ReportRow,
                         emit_report, read_report_csv, run_comparison)
from .ga import (GAConfig, GAResult, SubsetGenome, crossover,
                 evaluate_fitness, exhaustive_oracle, mutate, optimize,
                 random_genome, select_elites)
from .gblup import (AccuracyReport, MixedModelFit, accuracy, fit_spmm,
                    predict_gebv, restricted_loglik)
from .markers import (KinshipMatrix, MarkerMatrix, PCBasis, PhenotypeTable,
                      PhenotypeVector, PopulationPartition, center_scale,
                      choose_component_count, kinship, load_markers,
                      load_phenotypes, partition, principal_components)
from .simulate import SimulatedDataset, SimulationSpec, simulate_data

__all__ = [
    "__version__",
    # markers
    "MarkerMatrix", "PhenotypeVector", "PhenotypeTable", "KinshipMatrix",
    "PCBasis", "PopulationPartition", "load_markers", "load_phenotypes",
    "center_scale", "kinship", "principal_components", "partition",
    "choose_component_count",
    # criteria
    "CriterionConfig", "TraceCriterion", "pev_ols", "pev_ridge", "pev_pc",
    "criterion_trace", "pc_criterion_trace", "reliability_vanraden",
    "delta_from_heritability", "shrinkage_from_heritability",
    # ga
    "SubsetGenome", "GAConfig", "GAResult", "random_genome", "crossover",
    "mutate", "select_elites", "evaluate_fitness", "optimize",
    "exhaustive_oracle",
    # gblup
    "MixedModelFit", "AccuracyReport", "fit_spmm", "predict_gebv",
    "accuracy", "restricted_loglik",
    # clustering / simulation
    "ClusterAssignment", "ward_cluster", "ward_linkage",
    "SimulationSpec", "SimulatedDataset", "simulate_data",
    # experiment
    "ExperimentConfig", "ReportRow", "ComparisonReport", "run_comparison",
    "emit_report", "read_report_csv",
    # errors
    "PevselError", "ContractError", "DataError", "FormatError",
    "DegenerateInputError", "RefusalError", "NumericalError",
]
