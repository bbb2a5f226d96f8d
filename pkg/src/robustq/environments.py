"""Problem constructors: the binomial coin-toss betting game, finite-grid
proxies for Wasserstein balls around a binomial, and the sign-of-returns
market model built from historical data."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp import (AmbiguitySet, Categorical, DiscountedProblem, FiniteActionSpace,
                  FiniteStateSpace, StructureError)

COIN_TRIALS = 10
ACTIONS = (-1, 0, 1)


@dataclass(frozen=True)
class BinomialSpec:
    n: int
    p: float

    def __post_init__(self):
        if self.n < 1:
            raise StructureError(f"binomial needs n >= 1, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise StructureError(f"binomial p must lie in [0, 1], got {self.p}")


def binomial_pmf(spec: BinomialSpec) -> Categorical:
    n, p = spec.n, spec.p
    probs = np.array([math.comb(n, k) * p**k * (1 - p) ** (n - k) for k in range(n + 1)])
    # absorb rounding so the vector passes the 1e-12 normalisation check
    probs /= math.fsum(probs)
    return Categorical(probs)


def coin_reward(x: int, a: int, x_next: int) -> int:
    """+a if the sum went up, -a if it went down, -|a| on a tie."""
    if x < x_next:
        return a
    if x > x_next:
        return -a
    return -abs(a)


def coin_reward_table() -> np.ndarray:
    xs = range(COIN_TRIALS + 1)
    return np.array([[[coin_reward(x, a, y) for y in xs] for a in ACTIONS] for x in xs],
                    dtype=float)


def build_coin_problem(params: Sequence[float], alpha: float = 0.95,
                       name: str = "") -> DiscountedProblem:
    """Coin-toss game whose ambiguity set is {Bin(10, p) : p in params}."""
    params = list(params)
    if not params:
        raise StructureError("coin-toss ambiguity set needs at least one binomial parameter")
    dists = [binomial_pmf(BinomialSpec(COIN_TRIALS, float(p))) for p in params]
    states = FiniteStateSpace(range(COIN_TRIALS + 1))
    actions = FiniteActionSpace(ACTIONS)
    return DiscountedProblem(
        states=states,
        actions=actions,
        rewards=coin_reward_table(),
        ambiguity=AmbiguitySet.state_independent(dists, len(states), len(actions)),
        alpha=alpha,
        name=name or "coin" + str(params),
    )


def binomial_cdf(n: int, p: float) -> np.ndarray:
    return np.cumsum(binomial_pmf(BinomialSpec(n, p)).probs)


def wasserstein1_binomial(p: float, q: float, n: int = COIN_TRIALS) -> float:
    """W1 between Bin(n, p) and Bin(n, q) on the integer line (sum of |CDF gaps|)."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise StructureError("binomial parameters must lie in [0, 1]")
    return float(np.sum(np.abs(binomial_cdf(n, p)[:-1] - binomial_cdf(n, q)[:-1])))


def wasserstein_grid(center: float, radius: float, grid_step: float = 0.05,
                     n: int = COIN_TRIALS) -> list[float]:
    """Grid points center +/- k*grid_step in [0, 1] within W1 distance ``radius``."""
    if grid_step <= 0:
        raise StructureError("grid_step must be positive")
    if radius < 0:
        raise StructureError("radius must be nonnegative")
    kmax = int(math.ceil(1.0 / grid_step)) + 1
    grid = sorted({round(center + k * grid_step, 12) for k in range(-kmax, kmax + 1)})
    return [p for p in grid
            if 0.0 <= p <= 1.0 and wasserstein1_binomial(center, p, n) <= radius + 1e-12]


def build_wasserstein_proxy(center: float, radius: float, grid_step: float = 0.05,
                            alpha: float = 0.95) -> DiscountedProblem:
    """Finite stand-in for the W1 ball of binomials around Bin(10, center)."""
    params = wasserstein_grid(center, radius, grid_step)
    return build_coin_problem(params, alpha, name=f"w1-ball({center}, {radius}, {grid_step})")


# --- market model -----------------------------------------------------------

@dataclass(frozen=True)
class ReturnSeries:
    signs: np.ndarray
    dates: tuple[str, ...] = ()
    instrument: str = ""

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=int)
        if s.ndim != 1 or len(s) == 0:
            raise StructureError("return series must be a nonempty 1-d sequence")
        if not np.all(np.isin(s, (-1, 1))):
            raise StructureError("return series values must be -1 or +1")
        if self.dates and len(self.dates) != len(s):
            raise StructureError("dates and signs differ in length")
        s.setflags(write=False)
        object.__setattr__(self, "signs", s)

    def __len__(self) -> int:
        return len(self.signs)

    @property
    def date_range(self) -> tuple[str, str] | None:
        return (self.dates[0], self.dates[-1]) if self.dates else None

    def between(self, start: str | None = None, end: str | None = None) -> "ReturnSeries":
        """Sub-series with ISO dates in [start, end]; needs dates."""
        if not self.dates:
            raise StructureError("series has no dates to slice by")
        keep = [i for i, d in enumerate(self.dates)
                if (start is None or d >= start) and (end is None or d <= end)]
        if not keep:
            raise StructureError(f"no observations between {start} and {end}")
        return ReturnSeries(self.signs[keep], tuple(self.dates[i] for i in keep), self.instrument)


@dataclass(frozen=True)
class MarketModelSpec:
    h: int = 5
    gamma_smooth: float = 1e-6

    def __post_init__(self):
        if self.h < 1:
            raise StructureError("window length h must be >= 1")
        if self.gamma_smooth <= 0:
            raise StructureError("gamma_smooth must be positive")


def encode_market_states(h: int) -> FiniteStateSpace:
    """All sign windows of length h, oldest first, ordered lexicographically with -1 < +1."""
    if h < 1:
        raise StructureError("window length h must be >= 1")
    return FiniteStateSpace(itertools.product((-1, 1), repeat=h))


def window_index(window) -> int:
    """Dense index of a sign window in ``encode_market_states`` order."""
    idx = 0
    for s in window:
        idx = 2 * idx + (1 if s > 0 else 0)
    return idx


def empirical_frequencies(series: ReturnSeries, h: int) -> np.ndarray:
    """Window counts ``counts[x, i]`` (i = 0 for -1, 1 for +1).

    ``counts[x, i]`` is the number of length-h windows of the series equal to
    (drop-oldest(x), i). Every state sharing the same last h-1 components gets
    the same row.
    """
    if h < 1:
        raise StructureError("window length h must be >= 1")
    s = series.signs
    if len(s) < h:
        raise StructureError(f"series of length {len(s)} is shorter than h={h}")
    # tally by window suffix: (last h-1 signs of the window prefix, newest sign)
    tally = np.zeros((2 ** (h - 1), 2), dtype=np.int64)
    for j in range(len(s) - h + 1):
        w = s[j:j + h]
        tally[window_index(w[:-1]), 1 if w[-1] > 0 else 0] += 1
    # state x maps to prefix pi(x) = x[1:], i.e. the low h-1 bits of its index
    return tally[np.arange(2 ** h) % 2 ** (h - 1)]


def smooth_probabilities(counts, gamma_smooth: float = 1e-6) -> np.ndarray:
    """Turn window counts into next-sign probabilities, adding gamma/2 to each cell."""
    if gamma_smooth <= 0:
        raise StructureError("gamma_smooth must be positive")
    c = np.asarray(counts, dtype=float)
    n_out = c.shape[1]
    return (c + gamma_smooth / n_out) / (gamma_smooth + c.sum(axis=1, keepdims=True))


def market_kernel(probs, h: int) -> np.ndarray:
    """Next-state matrix (|X|, |X|): shift the window, draw the newest sign."""
    p = np.asarray(probs, dtype=float)
    nx = 2 ** h
    if p.shape != (nx, 2):
        raise StructureError(f"probability table must have shape {(nx, 2)}, got {p.shape}")
    k = np.zeros((nx, nx))
    for x in range(nx):
        base = (2 * x) % nx  # drop the oldest sign, shift left
        k[x, base] = p[x, 0]
        k[x, base + 1] = p[x, 1]
    return k


def market_reward_table(h: int) -> np.ndarray:
    """r(x, a, x') = a times the newest sign of x'."""
    newest = np.array([s[-1] for s in encode_market_states(h)], dtype=float)
    a = np.array(ACTIONS, dtype=float)
    return np.broadcast_to(a[None, :, None] * newest[None, None, :],
                           (2 ** h, len(ACTIONS), 2 ** h)).copy()


def build_market_problem(prob_tables, h: int = 5, alpha: float = 0.95,
                         name: str = "market") -> DiscountedProblem:
    """Market problem whose ambiguity set has one kernel per probability table.

    ``prob_tables`` is one (2^h, 2) table or a list of them.
    """
    tables = np.asarray(prob_tables, dtype=float)
    if tables.ndim == 2:
        tables = tables[None]
    kernels = np.stack([market_kernel(t, h) for t in tables], axis=1)  # (x, k, x')
    nx = 2 ** h
    kernels = np.broadcast_to(kernels[:, None], (nx, len(ACTIONS)) + kernels.shape[1:])
    return DiscountedProblem(
        states=encode_market_states(h),
        actions=FiniteActionSpace(ACTIONS),
        rewards=market_reward_table(h),
        ambiguity=AmbiguitySet(kernels),
        alpha=alpha,
        name=name,
    )


def market_probabilities(series: ReturnSeries, spec: MarketModelSpec = MarketModelSpec()) -> np.ndarray:
    return smooth_probabilities(empirical_frequencies(series, spec.h), spec.gamma_smooth)


def signs_from_prices(prices: Sequence[float], dates: Sequence[str] | None = None,
                      instrument: str = "") -> ReturnSeries:
    """Signs of consecutive price changes; an unchanged price counts as +1.

    If ``dates`` (one per price) are given, each sign carries the date of the
    later price.
    """
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or len(p) < 2:
        raise StructureError("need at least two prices")
    if np.any(~np.isfinite(p)) or np.any(p <= 0):
        raise StructureError("prices must be positive and finite")
    if dates is not None and len(dates) != len(p):
        raise StructureError("need one date per price")
    signs = np.where(np.diff(p) >= 0, 1, -1)
    return ReturnSeries(signs, tuple(dates[1:]) if dates is not None else (), instrument)
