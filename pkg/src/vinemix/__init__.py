"""Clustering with finite mixtures of vine-copula distributions."""

from .dataio import (Dataset, PreprocessReport, drop_missing_rows, load_table,
                     screen_indicators, standardize_columns)
from .marginals import MarginalModel
from .mixture import FitConfig, FitTrace, MixtureModel, VineMixture
from .paircop import DependenceSummary, PairCopula
from .ranking import compare_rankings, identify_deprived_cluster, rank_zones
from .selection import KSearchReport, LOVOReport, lovo, search_k
from .vine import RVineStructure, VineCopula, VineDistribution, select_structure

__version__ = "0.1.0"

__all__ = [
    "Dataset", "PreprocessReport", "load_table", "screen_indicators",
    "drop_missing_rows", "standardize_columns", "MarginalModel", "PairCopula",
    "DependenceSummary", "RVineStructure", "VineCopula", "VineDistribution",
    "select_structure", "FitConfig", "FitTrace", "MixtureModel", "VineMixture",
    "search_k", "lovo", "KSearchReport", "LOVOReport", "identify_deprived_cluster",
    "rank_zones", "compare_rankings", "__version__",
]
