"""Bookmaker pricing: price-controlled bet arrivals, pricing policies and simulation."""

from .errors import (BookmakingError, BracketError, ConfigurationError, DomainError, NumericalError,
                     PolicyError, ValidationError)
from .expdyn import ExpDynamicModel, expected_utility, simulate_exp_policy
from .intensity import IntensityModel, concave_envelope, inverse_rate, rate, revenue
from .market import Atoms, BetLedger, Independent, MarketState, Partition, settle
from .probability import BrownianSpreadModel, ConstantProbability, PoissonGoalModel, simulate_path
from .semistatic import (SemiStaticProblem, epsilon_policy, optimize_semistatic, solve_exp_independent,
                         solve_exp_partition, vhat_objective, worst_case_wealth)
from .simulation import (SimulationConfig, coin_profit_prob_exact, nba_experiment, psi1, run,
                         run_continuous, run_poisson)
from .wealth import (LogRatioRootFeedback, SqrtFeedback, StaticPolicy, TwoPiece, method3_consistency,
                     optimal_price_logratio, optimal_price_ratio, pointwise_optimize,
                     wealth_value_constantp)

__version__ = "0.1.0"
