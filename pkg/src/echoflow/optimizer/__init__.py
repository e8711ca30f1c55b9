"""Bin-boundary selection: objectives, TPE search, baselines and nested CV."""

from .explain import export_explainability
from .ncv import STRATEGIES, NcvConfig, nested_cv, nested_splits, save_report, select_boundaries
from .objectives import AccuracyObjective, PooledValues, jsd_distance, objective_accuracy, objective_jsd
from .strategies import FeatureSubset, GreedyTrial, feature_selection_optimize, greedy_optimize, mi_ranking
from .tpe import SearchSpace, TpeConfig, Trial, random_search, tpe_optimize

__all__ = [
    "AccuracyObjective", "FeatureSubset", "GreedyTrial", "NcvConfig", "PooledValues", "STRATEGIES",
    "SearchSpace", "TpeConfig", "Trial", "export_explainability", "feature_selection_optimize",
    "greedy_optimize", "jsd_distance", "mi_ranking", "nested_cv", "nested_splits", "objective_accuracy",
    "objective_jsd", "random_search", "save_report", "select_boundaries", "tpe_optimize",
]
