"""Differentially private counting-query release by learning threshold functions."""
from __future__ import annotations

from .core import (
    BudgetMode,
    Database,
    DerivedParams,
    InsufficientDatabaseError,
    ParameterProfile,
    PredicateSpec,
    ReleaseParams,
    counting_query,
    derive_params,
    threshold_query,
)
from .distributions import ExplicitWeighted, UniformBk, UniformFullCube
from .dp_oracle import BudgetExceeded, OracleAnswer, ThresholdOracle
from .learners import FourierLearner, PTFLearner
from .reduction import Learner, Synopsis, priv_learn

__version__ = "0.1.0"
