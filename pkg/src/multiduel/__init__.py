"""Multi-dueling bandit simulation library.

Two algorithm families are provided: a black-box reduction that turns any
dueling-bandit learner into a multi-dueling learner for the Condorcet
objective (``metadueling``), and a stochastic-then-adversarial successive
elimination algorithm for the Borda objective (``samidex``).  Supporting
modules supply preference-matrix environments, brute-force oracles, and a
seeded experiment harness.
"""

from multiduel.model import (
    GapProfile,
    MultisetAction,
    PreferenceMatrix,
    RegretLedger,
    gap_profile,
    record_round,
    sample_winner,
    validate_preference_matrix,
    winner_distribution,
)
from multiduel.metadueling import (
    MultisetPlan,
    RescalingConstants,
    build_multiset,
    outcome_to_binary,
    rescaled_matrix,
    rescaling_constants,
    run_dueling,
    run_metadueling,
    transform_feedback,
)
from multiduel.learners import (
    BaseDuelingLearner,
    NaiveUcbDueling,
    ProtocolError,
    TwoPlayerTsallisInf,
    UniformRandomLearner,
    tsallis_inf_distribution,
)
from multiduel.samidex import SaMidexConfig, SaMidexResult, run_sa_midex

__all__ = [
    "GapProfile",
    "MultisetAction",
    "PreferenceMatrix",
    "RegretLedger",
    "gap_profile",
    "record_round",
    "sample_winner",
    "validate_preference_matrix",
    "winner_distribution",
    "MultisetPlan",
    "RescalingConstants",
    "build_multiset",
    "outcome_to_binary",
    "rescaled_matrix",
    "rescaling_constants",
    "run_dueling",
    "run_metadueling",
    "transform_feedback",
    "BaseDuelingLearner",
    "NaiveUcbDueling",
    "ProtocolError",
    "TwoPlayerTsallisInf",
    "UniformRandomLearner",
    "tsallis_inf_distribution",
    "SaMidexConfig",
    "SaMidexResult",
    "run_sa_midex",
]
