"""Robust tabular Q-learning over a finite ambiguity set.

At every step the learner picks an action with a behaviour policy, finds the
kernel in the ambiguity set that minimises the expected bootstrap target for
the current (state, action), samples the next state from that kernel, and
applies a single-entry Q update.
"""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .mdp import DiscountedProblem, StructureError, greedy_policy

logger = logging.getLogger(__name__)

SCHEDULE_KINDS = ("global-harmonic", "visit-harmonic", "custom-sequence")
POLICY_KINDS = ("epsilon-greedy", "fixed-table", "uniform-random")


@dataclass(frozen=True)
class LearningRateSchedule:
    """Step sizes 1/(offset + n) with n the global step or the pair's visit count.

    ``custom-sequence`` reads ``sequence[n]`` (the last entry repeats past the
    end), with n the visit count if ``per_visit`` else the global step.
    """

    kind: str = "visit-harmonic"
    offset: float = 1.0
    sequence: tuple[float, ...] = ()
    per_visit: bool = False

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise StructureError(f"unknown schedule kind {self.kind!r}")
        if self.offset < 1:
            raise StructureError("schedule offset must be >= 1 so rates stay in [0, 1]")
        if self.kind == "custom-sequence":
            seq = tuple(float(v) for v in self.sequence)
            if not seq:
                raise StructureError("custom-sequence schedule needs a nonempty sequence")
            if any(not 0.0 <= v <= 1.0 for v in seq):
                raise StructureError("custom learning rates must lie in [0, 1]")
            object.__setattr__(self, "sequence", seq)


def learning_rate(schedule: LearningRateSchedule, t: int, visits: int) -> float:
    if schedule.kind == "global-harmonic":
        return 1.0 / (schedule.offset + t)
    if schedule.kind == "visit-harmonic":
        return 1.0 / (schedule.offset + visits)
    n = visits if schedule.per_visit else t
    seq = schedule.sequence
    return seq[n] if n < len(seq) else seq[-1]


@dataclass(frozen=True)
class BehaviorPolicy:
    kind: str = "epsilon-greedy"
    epsilon: float = 0.1
    table: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise StructureError(f"unknown behaviour policy {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise StructureError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.kind == "fixed-table":
            if self.table is None:
                raise StructureError("fixed-table policy needs a table")
            object.__setattr__(self, "table", tuple(int(a) for a in self.table))


def select_action(policy: BehaviorPolicy, q: np.ndarray, x: int,
                  rng: np.random.Generator) -> int:
    """Draw an action at state ``x``.

    Epsilon-greedy draws one uniform number; below epsilon it then draws a
    uniform action (which may coincide with the greedy one).
    """
    if policy.kind == "fixed-table":
        return policy.table[x]
    n_actions = q.shape[1]
    if policy.kind == "uniform-random":
        return int(rng.integers(n_actions))
    if rng.random() < policy.epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(q[x]))


def sample_next_state(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a cumulative probability vector."""
    y = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(y, len(cdf) - 1)


@dataclass(frozen=True)
class TrainConfig:
    schedule: LearningRateSchedule = LearningRateSchedule()
    policy: BehaviorPolicy = BehaviorPolicy()
    iterations: int = 1_000_000
    seed: int = 0
    initial_state: int = 0
    q_init: float = 0.0
    stability_window: int = 10
    alpha: float | None = None  # None: use the problem's discount

    def __post_init__(self):
        if self.iterations < 0:
            raise StructureError("iterations must be >= 0")
        if self.stability_window < 1:
            raise StructureError("stability_window must be >= 1")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise StructureError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 <= self.seed < 2**64:
            raise StructureError("seed must be a 64-bit unsigned integer")

    @property
    def checkpoint_every(self) -> int:
        return max(1, self.iterations // 100)


@dataclass
class TrainState:
    """Mutable loop state; owned by a single run."""

    q: np.ndarray
    visits: np.ndarray
    x: int
    rng: np.random.Generator
    t: int = 0
    last_action: int = -1
    last_kernel: int = -1

    @classmethod
    def initial(cls, config: TrainConfig, problem: DiscountedProblem) -> "TrainState":
        if not 0 <= config.initial_state < problem.n_states:
            raise StructureError(f"initial state {config.initial_state} out of range")
        return cls(
            q=problem.zero_q(config.q_init),
            visits=np.zeros((problem.n_states, problem.n_actions), dtype=np.int64),
            x=config.initial_state,
            rng=np.random.default_rng(config.seed),
        )


def _kernel_cdf(problem: DiscountedProblem) -> np.ndarray:
    return np.cumsum(problem.kernels, axis=-1)


def qlearn_step(state: TrainState, config: TrainConfig, problem: DiscountedProblem,
                cdf: np.ndarray | None = None) -> TrainState:
    """Advance ``state`` by one step, in place, and return it.

    ``cdf`` is the cumulative kernel array; pass it in to avoid recomputing it
    each step.
    """
    if cdf is None:
        cdf = _kernel_cdf(problem)
    q, x, rng = state.q, state.x, state.rng
    a = select_action(config.policy, q, x, rng)
    target = problem.rewards[x, a] + problem.alpha * q.max(axis=1)
    k = int(np.argmin(problem.kernels[x, a] @ target))
    y = sample_next_state(cdf[x, a, k], rng)
    g = learning_rate(config.schedule, state.t, int(state.visits[x, a]))
    if g != 0.0:
        q[x, a] = (1.0 - g) * q[x, a] + g * target[y]
    state.visits[x, a] += 1
    state.t += 1
    state.x = y
    state.last_action = a
    state.last_kernel = k
    return state


@dataclass(frozen=True)
class Checkpoint:
    t: int
    policy: tuple[int, ...]
    q_error: float | None  # ||Q_t - Q*||_inf when an oracle was supplied
    q_absmax: float


@dataclass
class TrainResult:
    q: np.ndarray
    visits: np.ndarray
    checkpoints: list[Checkpoint]
    kernel_counts: np.ndarray  # (x, a, k): how often kernel k was the worst case
    states: np.ndarray  # X_t for t < iterations
    actions: np.ndarray  # a_t for t < iterations
    config: TrainConfig
    duration: float = field(default=0.0, compare=False)

    @property
    def policy(self) -> np.ndarray:
        return greedy_policy(self.q)

    def converged(self, window: int | None = None) -> bool:
        return greedy_policy_stable(self.checkpoints, window or self.config.stability_window)


def train(config: TrainConfig, problem: DiscountedProblem,
          oracle: np.ndarray | None = None) -> TrainResult:
    """Run ``config.iterations`` robust Q-learning steps from ``config.initial_state``.

    Deterministic given ``config.seed``. A checkpoint is taken at t = 0, every
    ``config.checkpoint_every`` steps, and at the end.
    """
    if config.alpha is not None and config.alpha != problem.alpha:
        problem = dataclasses.replace(problem, alpha=config.alpha)
    if config.policy.kind == "fixed-table" and len(config.policy.table) != problem.n_states:
        raise StructureError("fixed-table policy must list one action per state")
    if oracle is not None:
        oracle = np.asarray(oracle, dtype=float)
    start = time.perf_counter()
    state = TrainState.initial(config, problem)
    cdf = _kernel_cdf(problem)
    n = config.iterations
    states = np.empty(n, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    kernel_counts = np.zeros(problem.kernels.shape[:3], dtype=np.int64)
    checkpoints = [_checkpoint(state, oracle)]
    every = config.checkpoint_every
    for t in range(n):
        x = state.x
        qlearn_step(state, config, problem, cdf)
        a = state.last_action
        states[t], actions[t] = x, a
        kernel_counts[x, a, state.last_kernel] += 1
        if state.t % every == 0 or state.t == n:
            checkpoints.append(_checkpoint(state, oracle))
    duration = time.perf_counter() - start
    logger.info("trained %d steps on %s in %.2fs", n, problem.name or "problem", duration)
    return TrainResult(state.q, state.visits, checkpoints, kernel_counts, states, actions,
                       config, duration)


def _checkpoint(state: TrainState, oracle: np.ndarray | None) -> Checkpoint:
    err = None if oracle is None else float(np.max(np.abs(state.q - oracle)))
    return Checkpoint(state.t, tuple(int(a) for a in greedy_policy(state.q)), err,
                      float(np.max(np.abs(state.q))))


def greedy_policy_stable(checkpoints: Sequence, window: int) -> bool:
    """True iff the greedy policy is identical over the last ``window`` checkpoints.

    Accepts ``Checkpoint`` objects or bare policy sequences.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(checkpoints) < window:
        return False
    pols = [tuple(c.policy) if isinstance(c, Checkpoint) else tuple(c)
            for c in checkpoints[-window:]]
    return all(p == pols[0] for p in pols)


@dataclass
class RobbinsMonroReport:
    sum_rates: np.ndarray
    sum_squared_rates: np.ndarray
    visits: np.ndarray
    flagged: list[tuple[int, int]]
    floor: int


def visit_times(result: TrainResult) -> dict[tuple[int, int], np.ndarray]:
    """Step indices at which each (x, a) was updated, for every pair."""
    nx, na = result.visits.shape
    order = np.argsort(result.states * na + result.actions, kind="stable")
    keys = (result.states * na + result.actions)[order]
    out = {}
    for x in range(nx):
        for a in range(na):
            code = x * na + a
            lo, hi = np.searchsorted(keys, [code, code + 1])
            out[(x, a)] = order[lo:hi]
    return out


def robbins_monro_diagnostics(schedule: LearningRateSchedule,
                              trace: Mapping[tuple[int, int], Sequence[int]],
                              floor: int = 100) -> RobbinsMonroReport:
    """Partial sums of the realised step sizes and their squares per pair.

    ``trace`` maps (x, a) to the increasing global steps at which the pair was
    updated. Pairs visited fewer than ``floor`` times are flagged; this is a
    heuristic, not a convergence certificate.
    """
    pairs = list(trace)
    nx = max(x for x, _ in pairs) + 1
    na = max(a for _, a in pairs) + 1
    s1 = np.zeros((nx, na))
    s2 = np.zeros((nx, na))
    counts = np.zeros((nx, na), dtype=np.int64)
    flagged = []
    for (x, a), times in trace.items():
        times = np.asarray(times, dtype=np.int64)
        rates = np.array([learning_rate(schedule, int(t), j) for j, t in enumerate(times)])
        s1[x, a] = rates.sum()
        s2[x, a] = (rates**2).sum()
        counts[x, a] = len(times)
        if len(times) < floor:
            flagged.append((x, a))
    return RobbinsMonroReport(s1, s2, counts, sorted(flagged), floor)
