"""Bayesian conservative policy optimization for tabular offline RL."""
from .baselines import FqiResult, greedy_policy, naive_fqi
from .critic import (PessimisticCritic, pessimistic_advantage, pessimistic_backup,
                     pessimistic_return, solve_pessimistic_fixed_point)
from .data import (CountStatistics, TransitionDataset, behavior_cloning,
                   count_statistics, state_marginal)
from .errors import (ConvergenceError, EmptyDatasetError, InfeasibleTrustRegionError,
                     NumericalError, ValidationError)
from .estimators import BCPO, BehaviorCloning, NaiveFQI
from .gridworld import (GridSpec, build_mdp, generate_dataset, make_behavior_policy,
                        rollout_evaluate)
from .mdp import (QTable, TabularMDP, TabularPolicy, discounted_occupancy,
                  exact_policy_evaluation, performance_difference, policy_return,
                  true_bellman_backup)
from .policy import (BcpoConfig, IterationLog, bcpo_optimize, enforce_trust_region,
                     kl_divergence, mirror_descent_step, shift_certificate)
from .posterior import (DirichletPrior, PosteriorModel, fit_posterior,
                        sample_transition_model)

__version__ = "0.1.0"
