"""Policy evaluation: coin-toss profit (simulated and exact) and sign-series
backtests, plus a small comparison-table helper."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .environments import (ACTIONS, COIN_TRIALS, BinomialSpec, ReturnSeries, binomial_pmf,
                           coin_reward_table, encode_market_states, window_index)
from .mdp import StructureError


@dataclass(frozen=True)
class PolicyTable:
    """Action index per state, with the action values those indices stand for."""

    indices: tuple[int, ...]
    action_values: tuple[int, ...] = ACTIONS

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise StructureError("policy table is empty")
        if any(not 0 <= i < len(self.action_values) for i in idx):
            raise StructureError("policy table has an out-of-range action index")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "action_values", tuple(int(v) for v in self.action_values))

    @classmethod
    def from_actions(cls, actions: Sequence[int], action_values: Sequence[int] = ACTIONS) -> "PolicyTable":
        """Build from action values, e.g. ``(1, 1, 0, -1)``."""
        lookup = {v: i for i, v in enumerate(action_values)}
        try:
            return cls(tuple(lookup[int(a)] for a in actions), tuple(action_values))
        except KeyError as e:
            raise StructureError(f"action {e.args[0]} not in {tuple(action_values)}") from None

    def actions(self) -> np.ndarray:
        return np.asarray(self.action_values)[list(self.indices)]

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class ProfitReport:
    rounds: int
    cumulative_profit: float
    per_round_mean: float
    std_error: float  # of the per-round mean
    seed: int | None
    p_true: float

    @property
    def cumulative_std_error(self) -> float:
        return self.std_error * self.rounds


@dataclass(frozen=True)
class BacktestReport:
    trades: int
    mean_reward_per_trade: float
    cumulative_reward: float
    period: str = ""


def _coin_policy(policy: PolicyTable) -> np.ndarray:
    if len(policy) != COIN_TRIALS + 1:
        raise StructureError(f"coin-toss policy needs {COIN_TRIALS + 1} states, got {len(policy)}")
    return np.asarray(policy.indices)


def rollout_coin(policy: PolicyTable, p_true: float, rounds: int, seed: int = 0) -> ProfitReport:
    """Play ``rounds`` rounds with coin sums drawn i.i.d. from Bin(10, p_true)."""
    if rounds < 1:
        raise StructureError("rounds must be >= 1")
    idx = _coin_policy(policy)
    rng = np.random.default_rng(seed)
    xs = rng.binomial(COIN_TRIALS, p_true, size=rounds + 1)
    # reward table is indexed by action position in ACTIONS
    table = coin_reward_table()
    a_pos = np.searchsorted(ACTIONS, np.asarray(policy.action_values)[idx])
    rewards = table[xs[:-1], a_pos[xs[:-1]], xs[1:]]
    total = float(rewards.sum())
    mean = total / rounds
    se = float(rewards.std(ddof=1) / math.sqrt(rounds)) if rounds > 1 else 0.0
    return ProfitReport(rounds, total, mean, se, seed, p_true)


def expected_profit_coin(policy: PolicyTable, p_true: float) -> float:
    """Exact expected per-round profit when successive sums are i.i.d. Bin(10, p_true)."""
    idx = _coin_policy(policy)
    pmf = binomial_pmf(BinomialSpec(COIN_TRIALS, p_true)).probs
    a_pos = np.searchsorted(ACTIONS, np.asarray(policy.action_values)[idx])
    table = coin_reward_table()
    per_state = np.array([table[x, a_pos[x]] @ pmf for x in range(COIN_TRIALS + 1)])
    return float(pmf @ per_state)


def backtest(policy: PolicyTable, series: ReturnSeries, h: int, period: str = "") -> BacktestReport:
    """Trade each step on the last h signs; reward is action times the next sign."""
    s = series.signs
    if len(s) <= h:
        raise StructureError(f"series of length {len(s)} needs more than h={h} signs")
    if len(policy) != 2**h:
        raise StructureError(f"market policy needs {2**h} states, got {len(policy)}")
    acts = policy.actions()
    rewards = np.array([acts[window_index(s[t - h:t])] * s[t] for t in range(h, len(s))],
                       dtype=float)
    if not period and series.dates:
        period = f"{series.dates[0]}..{series.dates[-1]}"
    return BacktestReport(len(rewards), float(rewards.mean()), float(rewards.sum()), period)


def trend_following_policy(h: int) -> PolicyTable:
    """Invest in the direction of the most recent return."""
    return PolicyTable.from_actions([x[-1] for x in encode_market_states(h)])


def buy_and_hold_policy(h: int) -> PolicyTable:
    return PolicyTable.from_actions([1] * 2**h)


@dataclass
class ComparisonTable:
    row_labels: list[str]
    column_labels: list[str]
    values: np.ndarray
    best: np.ndarray  # bool, same shape as values; ties all marked

    def to_rows(self) -> list[dict]:
        out = []
        for i, r in enumerate(self.row_labels):
            for j, c in enumerate(self.column_labels):
                out.append({"policy": r, "column": c, "value": float(self.values[i, j]),
                            "best": bool(self.best[i, j])})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["policy"] + self.column_labels)
        for i, r in enumerate(self.row_labels):
            w.writerow([r] + [f"{v!r}{'*' if b else ''}"
                              for v, b in zip(self.values[i].tolist(), self.best[i])])
        return buf.getvalue()


def compare_policies(policies: Mapping[str, PolicyTable], columns: Sequence,
                     evaluate: Callable[[PolicyTable, object], float],
                     higher_is_better: bool = True) -> ComparisonTable:
    """Evaluate every policy on every column; mark the best value per column.

    Rows keep the mapping's order. Exact ties are all marked best.
    """
    labels = list(policies)
    vals = np.array([[float(evaluate(policies[l], c)) for c in columns] for l in labels])
    vals = vals.reshape(len(labels), len(columns))
    ref = vals.max(axis=0) if higher_is_better else vals.min(axis=0)
    return ComparisonTable(labels, [str(c) for c in columns], vals, vals == ref)


def report_dict(report) -> dict:
    return asdict(report)
