"""Finite robust MDPs: domain types, worst-case Bellman operators and an exact
value-iteration solver.

Everything is dense. A problem with state space X, action space A and an
ambiguity set of N kernels stores

* ``kernels``  of shape ``(|X|, |A|, N, |X|)``
* ``rewards``  of shape ``(|X|, |A|, |X|)``

and Q tables are plain ``(|X|, |A|)`` float arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


class StructureError(ValueError):
    """Raised when inputs have inconsistent shapes or violate invariants."""


def _as_label(label) -> tuple[int, ...]:
    if np.ndim(label) == 0:
        return (int(label),)
    return tuple(int(v) for v in label)


class _LabelSpace:
    def __init__(self, labels: Iterable, kind: str):
        self.labels: tuple[tuple[int, ...], ...] = tuple(_as_label(l) for l in labels)
        if not self.labels:
            raise StructureError(f"{kind} space must be nonempty")
        dims = {len(l) for l in self.labels}
        if len(dims) != 1:
            raise StructureError(f"{kind} labels must share one dimension, got {sorted(dims)}")
        self._index = {l: i for i, l in enumerate(self.labels)}
        if len(self._index) != len(self.labels):
            raise StructureError(f"{kind} labels must be distinct")

    @property
    def dim(self) -> int:
        return len(self.labels[0])

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.labels == other.labels

    def __hash__(self) -> int:
        return hash(self.labels)

    def index(self, label) -> int:
        return self._index[_as_label(label)]

    def label(self, i: int) -> tuple[int, ...]:
        return self.labels[i]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({list(self.labels)!r})"


class FiniteStateSpace(_LabelSpace):
    """Ordered integer-vector state labels with a dense index."""

    def __init__(self, labels: Iterable):
        super().__init__(labels, "state")


class FiniteActionSpace(_LabelSpace):
    """Ordered integer-vector action labels with a dense index."""

    def __init__(self, labels: Iterable):
        super().__init__(labels, "action")

    def values(self) -> np.ndarray:
        """First label component of every action, e.g. ``[-1, 0, 1]``."""
        return np.array([l[0] for l in self.labels])


def check_probabilities(probs, size: int | None = None, what: str = "distribution") -> np.ndarray:
    """Validate a probability vector (or stack of them along the last axis).

    Inputs off by more than ``PROB_TOL`` are rejected, never renormalized.
    """
    p = np.asarray(probs, dtype=float)
    if size is not None and p.shape[-1] != size:
        raise StructureError(f"{what}: expected length {size}, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise StructureError(f"{what}: non-finite probability")
    if np.any(p < 0) or np.any(p > 1):
        raise StructureError(f"{what}: probabilities must lie in [0, 1]")
    err = np.max(np.abs(p.sum(axis=-1) - 1.0), initial=0.0)
    if err > PROB_TOL:
        raise StructureError(f"{what}: probabilities sum to 1 +/- {err:.3g}")
    return p


@dataclass(frozen=True)
class Categorical:
    """A probability vector over the dense state index."""

    probs: np.ndarray

    def __post_init__(self):
        p = check_probabilities(self.probs, what="Categorical")
        if p.ndim != 1:
            raise StructureError("Categorical probs must be one-dimensional")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def point_mass(cls, j: int, size: int) -> "Categorical":
        p = np.zeros(size)
        p[j] = 1.0
        return cls(p)


class AmbiguitySet:
    """N candidate transition kernels at every (state, action) pair.

    ``kernels[x, a, k]`` is the k-th next-state distribution at (x, a).
    """

    def __init__(self, kernels):
        k = np.array(kernels, dtype=float)
        if k.ndim != 4 or k.shape[0] != k.shape[3]:
            raise StructureError(
                f"kernels must have shape (|X|, |A|, N, |X|), got {k.shape}")
        if k.shape[2] < 1:
            raise StructureError("ambiguity set needs N >= 1 kernels")
        check_probabilities(k, what="ambiguity set kernel")
        k.setflags(write=False)
        self.kernels = k

    @classmethod
    def state_independent(cls, dists: Sequence, n_states: int, n_actions: int) -> "AmbiguitySet":
        """Same list of distributions at every (x, a)."""
        rows = np.array([d.probs if isinstance(d, Categorical) else d for d in dists], dtype=float)
        if rows.ndim != 2 or rows.shape[1] != n_states:
            raise StructureError("each distribution must have one entry per state")
        return cls(np.broadcast_to(rows, (n_states, n_actions) + rows.shape))

    @property
    def n(self) -> int:
        return self.kernels.shape[2]

    def at(self, x: int, a: int) -> list[Categorical]:
        return [Categorical(p) for p in self.kernels[x, a]]


@dataclass(frozen=True)
class DiscountedProblem:
    """A finite robust MDP with discount factor ``alpha``."""

    states: FiniteStateSpace
    actions: FiniteActionSpace
    rewards: np.ndarray
    ambiguity: AmbiguitySet
    alpha: float
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise StructureError(f"alpha must lie in (0, 1), got {self.alpha}")
        nx, na = len(self.states), len(self.actions)
        r = np.array(self.rewards, dtype=float)
        if r.shape != (nx, na, nx):
            raise StructureError(f"reward table must have shape {(nx, na, nx)}, got {r.shape}")
        if not np.all(np.isfinite(r)):
            raise StructureError("reward table has non-finite entries")
        r.setflags(write=False)
        object.__setattr__(self, "rewards", r)
        if self.ambiguity.kernels.shape[:2] != (nx, na) or self.ambiguity.kernels.shape[3] != nx:
            raise StructureError("ambiguity set does not match the state/action spaces")

    @property
    def kernels(self) -> np.ndarray:
        return self.ambiguity.kernels

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def n_kernels(self) -> int:
        return self.ambiguity.n

    def zero_q(self, fill: float = 0.0) -> np.ndarray:
        return np.full((self.n_states, self.n_actions), float(fill))


def _check_q(q, problem: DiscountedProblem) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (problem.n_states, problem.n_actions):
        raise StructureError(
            f"Q table must have shape {(problem.n_states, problem.n_actions)}, got {q.shape}")
    return q


def expect_target(dist, q, x: int, a: int, problem: DiscountedProblem) -> float:
    """E_dist[ r(x, a, X') + alpha * max_b Q(X', b) ]."""
    p = dist.probs if isinstance(dist, Categorical) else np.asarray(dist, dtype=float)
    if p.shape != (problem.n_states,):
        raise StructureError(
            f"distribution has length {p.shape}, state space has {problem.n_states} states")
    q = _check_q(q, problem)
    target = problem.rewards[x, a] + problem.alpha * q.max(axis=1)
    return float(p @ target)


def worst_case_index(q, x: int, a: int, problem: DiscountedProblem) -> tuple[int, float]:
    """Index of the kernel minimising the expected target at (x, a), with that value.

    Ties go to the smallest index.
    """
    q = _check_q(q, problem)
    target = problem.rewards[x, a] + problem.alpha * q.max(axis=1)
    values = problem.kernels[x, a] @ target
    k = int(np.argmin(values))
    return k, float(values[k])


def _all_expectations(q: np.ndarray, problem: DiscountedProblem) -> np.ndarray:
    # (x, a, k): E_{P_k(x,a)}[r(x,a,.) + alpha max_b Q(., b)]
    target = problem.rewards + problem.alpha * q.max(axis=1)
    return np.einsum("xaky,xay->xak", problem.kernels, target)


def apply_H(q, problem: DiscountedProblem) -> np.ndarray:
    """Robust Q-backup: (HQ)(x, a) = min_k E_{P_k(x,a)}[r + alpha max_b Q]."""
    q = _check_q(q, problem)
    return _all_expectations(q, problem).min(axis=2)


def apply_T(v, problem: DiscountedProblem) -> np.ndarray:
    """One-step robust optimisation on a value vector:
    (TV)(x) = max_a min_k E_{P_k(x,a)}[r(x, a, X') + alpha V(X')].
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (problem.n_states,):
        raise StructureError(f"value vector must have length {problem.n_states}")
    target = problem.rewards + problem.alpha * v
    return np.einsum("xaky,xay->xak", problem.kernels, target).min(axis=2).max(axis=1)


def greedy_policy(q) -> np.ndarray:
    """Per-state action index maximising Q; ties go to the smallest index."""
    return np.argmax(np.asarray(q, dtype=float), axis=1)


def value_from_Q(q) -> np.ndarray:
    return np.asarray(q, dtype=float).max(axis=1)


@dataclass
class ValueIterationResult:
    q: np.ndarray
    iterations: int
    residual: float
    converged: bool
    residuals: list[float]


def robust_value_iteration(problem: DiscountedProblem, tol: float = 1e-10,
                           max_iter: int = 100_000) -> ValueIterationResult:
    """Iterate Q <- HQ from Q = 0 until ||HQ - Q||_inf <= tol.

    ``residuals[k]`` is ||H Q_k - Q_k||_inf for the k-th iterate; the returned
    table is the last iterate Q_k whose residual met the tolerance. Hitting
    ``max_iter`` logs a warning and sets ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    q = problem.zero_q()
    residuals = []
    for it in range(max_iter):
        hq = apply_H(q, problem)
        res = float(np.max(np.abs(hq - q)))
        residuals.append(res)
        if res <= tol:
            return ValueIterationResult(q, it, res, True, residuals)
        q = hq
    res = float(np.max(np.abs(apply_H(q, problem) - q)))
    logger.warning("robust value iteration stopped after %d iterations, residual %.3g",
                   max_iter, res)
    return ValueIterationResult(q, max_iter, res, False, residuals)
