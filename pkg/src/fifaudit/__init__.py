"""Fairness-influence auditing for tabular binary classifiers.

Quantifies how much each feature subset contributes to a classifier's
group-fairness bias by decomposing the group-conditional prediction
variance with a set-additive spline surrogate.
"""

from .dataset import (
    Dataset,
    GroupKey,
    InsuranceParams,
    Schema,
    filter_group,
    generate_insurance_example,
    group_keys,
    load_csv,
    write_csv,
)
from .classifiers import (
    Predictor,
    ThresholdTree,
    TreeNode,
    build_fixed_tree,
    from_prediction_column,
    insurance_tree_dt1,
    insurance_tree_dt2,
    train_logistic,
    train_tree,
)
from .metrics import (
    MetricKind,
    MetricResult,
    equalized_odds,
    positive_rate,
    predictive_parity,
    statistical_parity,
)
from .gsa import (
    ComponentModel,
    KnotVector,
    SplineComponent,
    VarianceShare,
    backfit,
    bspline_basis,
    component_covariance,
    enumerate_subsets,
    evaluate_component,
    fit_spline_component,
)
from .fif import (
    AuditOptions,
    FifEntry,
    FifReport,
    fif_equalized_odds,
    fif_predictive_parity,
    fif_statistical_parity,
    rank_and_residual,
    resolve_degenerate,
)
from .oracle import (
    DiscreteInstance,
    anova_exhaustive,
    empirical_covariance_decomposition,
    scaled_variance_identity,
)
from .interventions import InterventionRecord, compare_fifs, poison_labels, reweigh

__version__ = "0.1.0"

__all__ = [
    "AuditOptions",
    "ComponentModel",
    "Dataset",
    "DiscreteInstance",
    "FifEntry",
    "FifReport",
    "GroupKey",
    "InsuranceParams",
    "InterventionRecord",
    "KnotVector",
    "MetricKind",
    "MetricResult",
    "Predictor",
    "Schema",
    "SplineComponent",
    "ThresholdTree",
    "TreeNode",
    "VarianceShare",
    "anova_exhaustive",
    "backfit",
    "bspline_basis",
    "build_fixed_tree",
    "compare_fifs",
    "component_covariance",
    "empirical_covariance_decomposition",
    "enumerate_subsets",
    "equalized_odds",
    "evaluate_component",
    "fif_equalized_odds",
    "fif_predictive_parity",
    "fif_statistical_parity",
    "filter_group",
    "fit_spline_component",
    "from_prediction_column",
    "generate_insurance_example",
    "group_keys",
    "insurance_tree_dt1",
    "insurance_tree_dt2",
    "load_csv",
    "poison_labels",
    "positive_rate",
    "predictive_parity",
    "rank_and_residual",
    "resolve_degenerate",
    "reweigh",
    "scaled_variance_identity",
    "statistical_parity",
    "train_logistic",
    "train_tree",
    "write_csv",
]
