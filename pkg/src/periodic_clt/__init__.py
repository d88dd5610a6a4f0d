"""Central limit experiments for periodic orbits of mixing subshifts of finite type."""

from .exceptions import (BudgetExceeded, ConfigError, EmptyInput, GapTooShort, IncompatibleSchedule,
                         IndexOutOfRange, NoPath, NotPrimitive, PeriodicCLTError, ValidationFailure,
                         WindowTooShort)
from .harness import (CLTRunResult, ExperimentPlan, MixturePlan, ParryMeasure, WildStep,
                      check_wildly_oscillating, cylinder_frequency, mme_table, orbit_discrepancy,
                      run_birkhoff_concentration, run_global_clt, run_local_clt, run_mixture_clt,
                      run_mme_convergence, run_weighted_clt)
from .indep import (CylinderSchedule, GlobalIndependentSet, LocalIndependentSet, WeightedMeasure,
                    build_global_indep, build_local_indep, phi_apply, sample_uniform, specify_two,
                    weighted_measure)
from .observables import (DynamicalArraySpec, GeometricWeight, LocallyConstant, Observable,
                          SymbolIndicator, birkhoff_sum, block_sums, observable_from_dict,
                          oscillation, oscillation_bound)
from .stats import (ConditionReport, DistributionDistance, MomentReport, NormalMixture,
                    conditions_from_sums, ks_distance, lindeberg_function, moments, write_cdf_csv)
from .systems import (PeriodicPoint, SymbolicSystem, count_periodic, enumerate_periodic,
                      periodic_words, spec_parameters)
from .vardecomp import ProductChoice, VarDecomp, find_clt_admissible, variance_components

__all__ = [
    "BudgetExceeded",
    "CLTRunResult",
    "ConditionReport",
    "ConfigError",
    "CylinderSchedule",
    "DistributionDistance",
    "DynamicalArraySpec",
    "EmptyInput",
    "ExperimentPlan",
    "GapTooShort",
    "GeometricWeight",
    "GlobalIndependentSet",
    "IncompatibleSchedule",
    "IndexOutOfRange",
    "LocalIndependentSet",
    "LocallyConstant",
    "MixturePlan",
    "MomentReport",
    "NoPath",
    "NormalMixture",
    "NotPrimitive",
    "Observable",
    "ParryMeasure",
    "PeriodicCLTError",
    "PeriodicPoint",
    "ProductChoice",
    "SymbolIndicator",
    "SymbolicSystem",
    "ValidationFailure",
    "VarDecomp",
    "WeightedMeasure",
    "WildStep",
    "WindowTooShort",
    "birkhoff_sum",
    "block_sums",
    "build_global_indep",
    "build_local_indep",
    "check_wildly_oscillating",
    "conditions_from_sums",
    "count_periodic",
    "cylinder_frequency",
    "enumerate_periodic",
    "find_clt_admissible",
    "ks_distance",
    "lindeberg_function",
    "mme_table",
    "moments",
    "observable_from_dict",
    "orbit_discrepancy",
    "oscillation",
    "oscillation_bound",
    "periodic_words",
    "phi_apply",
    "run_birkhoff_concentration",
    "run_global_clt",
    "run_local_clt",
    "run_mixture_clt",
    "run_mme_convergence",
    "run_weighted_clt",
    "sample_uniform",
    "spec_parameters",
    "specify_two",
    "variance_components",
    "weighted_measure",
    "write_cdf_csv",
]

__version__ = "0.1.0"
