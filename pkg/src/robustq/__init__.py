"""Tabular robust Q-learning for MDPs whose transition law is only known to lie
in a finite set of candidate kernels."""
from .environments import (BinomialSpec, MarketModelSpec, ReturnSeries, binomial_pmf,
                           build_coin_problem, build_market_problem, build_wasserstein_proxy,
                           coin_reward, empirical_frequencies, encode_market_states,
                           signs_from_prices, smooth_probabilities, wasserstein1_binomial)
from .evaluation import (BacktestReport, PolicyTable, ProfitReport, backtest,
                         compare_policies, expected_profit_coin, rollout_coin)
from .mdp import (AmbiguitySet, Categorical, DiscountedProblem, FiniteActionSpace,
                  FiniteStateSpace, StructureError, apply_H, apply_T, expect_target,
                  greedy_policy, robust_value_iteration, value_from_Q, worst_case_index)
from .qlearning import (BehaviorPolicy, LearningRateSchedule, TrainConfig, TrainResult,
                        TrainState, greedy_policy_stable, learning_rate, qlearn_step,
                        robbins_monro_diagnostics, select_action, train)

__all__ = [
    "BinomialSpec",
    "MarketModelSpec",
    "ReturnSeries",
    "binomial_pmf",
    "build_coin_problem",
    "build_market_problem",
    "build_wasserstein_proxy",
    "coin_reward",
    "empirical_frequencies",
    "encode_market_states",
    "signs_from_prices",
    "smooth_probabilities",
    "wasserstein1_binomial",
    "BacktestReport",
    "PolicyTable",
    "ProfitReport",
    "backtest",
    "compare_policies",
    "expected_profit_coin",
    "rollout_coin",
    "AmbiguitySet",
    "Categorical",
    "DiscountedProblem",
    "FiniteActionSpace",
    "FiniteStateSpace",
    "StructureError",
    "apply_H",
    "apply_T",
    "expect_target",
    "greedy_policy",
    "robust_value_iteration",
    "value_from_Q",
    "worst_case_index",
    "BehaviorPolicy",
    "LearningRateSchedule",
    "TrainConfig",
    "TrainResult",
    "TrainState",
    "greedy_policy_stable",
    "learning_rate",
    "qlearn_step",
    "robbins_monro_diagnostics",
    "select_action",
    "train",
]

__version__ = "0.1.0"
