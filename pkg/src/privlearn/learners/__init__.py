"""Non-private threshold learners plugged into the reduction."""
from __future__ import annotations

from .fourier import (
    FourierLearner,
    ParityMajorityHypothesis,
    SmoothnessViolation,
    character_table,
    characters,
    parity_correlations,
    parity_eval,
    smooth_boost,
    weak_parity_learner,
)
from .ptf import (
    DegreeSchedule,
    FeatureOverflowError,
    LPSolverError,
    PTFHypothesis,
    PTFLearner,
    UnivariatePoly,
    chebyshev,
    damping_exponent,
    damping_poly,
    degree_schedule,
    expand_features,
    explicit_ptf,
    feature_count,
    lp_learn,
    monomials,
)
