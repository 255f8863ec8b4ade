"""Semiparametric contextual bandits: BOSE, linear baselines, environments and audits."""
from ._jit import BACKEND
from .baselines import (BaselineConfig, BaselineKind, BaselinePolicy, RidgeState, baseline_learn,
                        epsgreedy_choose, oful_choose, thompson_choose)
from .environments import (ContractViolation, EnvKind, Environment, RoundOutcome,
                           instantaneous_regret, sample_context, sample_positive_orthant_sphere,
                           sample_unit_sphere)
from .estimation import (ConfidenceConfig, Mode, OrthogonalizedEstimator, RegularizedGram,
                         default_lambda, gamma, mahalanobis)
from .policy import (BosePolicy, Context, ExplorationDistribution, SolverConfig, choose,
                     constraint_slacks, filter_actions, learn, solve_exploration_distribution)

__version__ = "0.1.0"
