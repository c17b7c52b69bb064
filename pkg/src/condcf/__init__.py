"""Conditional cross-fitting for design-based ATE estimation.

Unbiased machine-learning-assisted covariate adjustment in randomized
experiments: design-aware sample splitting, cross-fitted point and
variance estimation, confidence intervals, an exhaustive-enumeration
verifier for the exact finite-sample identities, and a reproducible
simulation lab.
"""

from .designs import (
    Bernoulli,
    CompleteRandomization,
    MatchedPairs,
    Stratified,
    assignment_prob,
    enumerate_assignments,
    sample_assignment,
    treatment_prob,
    treatment_probs,
)
from .errors import (
    CondcfError,
    DataError,
    DegenerateFold,
    DegenerateStratum,
    EmptyArm,
    InsufficientReplication,
    MissingStratum,
    NoConvergence,
    PlanIncompatible,
    PredictorError,
    Separation,
    SingularDesign,
    SupportTooLarge,
)
from .estimators import (
    CrossFitEstimate,
    adjusted_estimate,
    cross_fit_components,
    cross_fit_estimate,
    ht_estimate,
    oracle_adjusted_estimate,
)
from .population import ObservedData, Population, ate_true, realize
from .predictors import (
    FittedPredictor,
    TrainingSet,
    build_training_set,
    calibrate_no_harm,
    full_sample_training_set,
    predictor_from_functions,
    register_predictor,
)
from .splitters import (
    BernoulliSplit,
    Hybrid,
    SplitByStratum,
    SplitByTreatmentCRE,
    SplitByTreatmentSRE,
    SplitResult,
    check_positivity,
    default_plan,
    is_optimal_plan,
    split,
)
from .variance import (
    VarianceEstimate,
    confidence_interval,
    conservativeness_gap,
    variance_cf,
)

__version__ = "0.1.0"
