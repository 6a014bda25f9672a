"""Memory-bounded continual learning: learner, hard instances, exact audits."""

from .learner import Constants, Ledger, LearnerParams, run_learner
from .universe import (
    HypothesisClass,
    MajorityVote,
    TaskDistribution,
    Universe,
    check_realizable,
    distribution_loss,
    empirical_loss,
    vc_dimension_bruteforce,
)

__version__ = "0.1.0"
