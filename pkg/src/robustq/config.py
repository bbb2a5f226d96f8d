"""YAML run configuration: parsing, validation and problem construction.

Example::

    alpha: 0.95
    problem:
      kind: coin          # coin | wasserstein | market | custom
      params: [0.5, 0.6]
    train:
      iterations: 1000000
      seed: 0
      epsilon: 0.1
      schedule: visit-harmonic
    solve:
      tol: 1.0e-10
    output_dir: runs/p1

All validation happens up front; errors name the field and its line.
"""
from __future__ import annotations

import datetime as _dt
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import environments as env
from .files import InputError, read_custom_kernels, read_custom_rewards, read_series
from .mdp import (AmbiguitySet, DiscountedProblem, FiniteActionSpace, FiniteStateSpace,
                  StructureError)
from .qlearning import (POLICY_KINDS, SCHEDULE_KINDS, BehaviorPolicy, LearningRateSchedule,
                        TrainConfig)

OUTPUT_ENV = "ROBUSTQ_OUTPUT_DIR"

_TOP_KEYS = {"alpha", "problem", "train", "solve", "eval", "output_dir"}
_PROBLEM_KEYS = {
    "coin": {"kind", "params"},
    "wasserstein": {"kind", "center", "radius", "grid_step"},
    "market": {"kind", "series", "h", "gamma_smooth", "periods"},
    "custom": {"kind", "states", "actions", "n_kernels", "kernels", "rewards"},
}
_TRAIN_KEYS = {"iterations", "seed", "epsilon", "policy", "schedule", "offset",
               "initial_state", "q_init", "stability_window", "table"}
_SOLVE_KEYS = {"tol", "max_iter"}
_EVAL_KEYS = {"p_true", "rounds", "seed"}


class ConfigError(ValueError):
    def __init__(self, message: str, field: str = "", line: int | None = None,
                 source: str = ""):
        self.field, self.line, self.source = field, line, source
        where = source
        if line is not None:
            where += f":{line}"
        prefix = " ".join(p for p in (where, f"[{field}]" if field else "") if p)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass
class SolveConfig:
    tol: float = 1e-10
    max_iter: int = 100_000


@dataclass
class EvalConfig:
    p_true: list[float] = field(default_factory=lambda: [round(0.1 * i, 1) for i in range(1, 10)])
    rounds: int = 100_000
    seed: int = 0


@dataclass
class RunConfig:
    alpha: float
    problem: dict
    train: TrainConfig
    solve: SolveConfig
    eval: EvalConfig
    output_dir: Path
    base_dir: Path

    def build_problem(self) -> DiscountedProblem:
        return build_problem(self.problem, self.alpha, self.base_dir)


def _line_index(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based line number, from the YAML node tree."""
    out: dict[str, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = f"{path}.{k.value}" if path else str(k.value)
                out[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                p = f"{path}[{i}]"
                out[p] = v.start_mark.line + 1
                walk(v, p)

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


class _Checker:
    def __init__(self, lines: dict[str, int], source: str):
        self.lines, self.source = lines, source

    def fail(self, path: str, message: str):
        raise ConfigError(message, path, self.lines.get(path), self.source)

    def section(self, data: dict, path: str, allowed: set[str]) -> dict:
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        for k in data:
            if k not in allowed:
                self.fail(f"{path}.{k}" if path else str(k),
                          f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return data

    def number(self, data: dict, key: str, path: str, default=None, *, integer=False,
               lo=None, hi=None, lo_open=False, hi_open=False):
        p = f"{path}.{key}" if path else key
        if key not in data:
            if default is None:
                self.fail(p, "required")
            return default
        v = data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(p, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            self.fail(p, f"expected an integer, got {v!r}")
        v = int(v) if integer else float(v)
        if lo is not None and (v < lo or (lo_open and v == lo)):
            self.fail(p, f"must be {'>' if lo_open else '>='} {lo}, got {v}")
        if hi is not None and (v > hi or (hi_open and v == hi)):
            self.fail(p, f"must be {'<' if hi_open else '<='} {hi}, got {v}")
        return v

    def choice(self, data: dict, key: str, path: str, options, default):
        p = f"{path}.{key}" if path else key
        v = data.get(key, default)
        if v not in options:
            self.fail(p, f"expected one of {', '.join(options)}, got {v!r}")
        return v


def _date(v) -> str | None:
    if v is None:
        return None
    if isinstance(v, (_dt.date, _dt.datetime)):
        return v.isoformat()
    return str(v)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a run config; ``overrides`` patch the ``train`` section."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    text = path.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", "",
                          mark.line + 1 if mark else None, str(path)) from None
    c = _Checker(_line_index(text), str(path))
    if not isinstance(data, dict):
        c.fail("", "top level must be a mapping")
    c.section(data, "", _TOP_KEYS)
    alpha = c.number(data, "alpha", "", 0.95, lo=0, hi=1, lo_open=True, hi_open=True)

    prob = data.get("problem")
    if not isinstance(prob, dict):
        c.fail("problem", "required mapping")
    kind = c.choice(prob, "kind", "problem", tuple(_PROBLEM_KEYS), None)
    c.section(prob, "problem", _PROBLEM_KEYS[kind])
    prob = _validate_problem(c, dict(prob), kind, path.parent)

    tr = dict(c.section(data.get("train"), "train", _TRAIN_KEYS))
    tr.update(overrides or {})
    sched_kind = c.choice(tr, "schedule", "train", SCHEDULE_KINDS[:2], "visit-harmonic")
    pol_kind = c.choice(tr, "policy", "train", POLICY_KINDS, "epsilon-greedy")
    table = tr.get("table")
    if pol_kind == "fixed-table" and not isinstance(table, list):
        c.fail("train.table", "fixed-table policy needs a list of action indices")
    n_states = prob["_n_states"]
    train = TrainConfig(
        schedule=LearningRateSchedule(sched_kind, c.number(tr, "offset", "train", 1.0, lo=1)),
        policy=BehaviorPolicy(pol_kind, c.number(tr, "epsilon", "train", 0.1, lo=0, hi=1),
                              tuple(table) if pol_kind == "fixed-table" else None),
        iterations=c.number(tr, "iterations", "train", 1_000_000, integer=True, lo=0),
        seed=c.number(tr, "seed", "train", 0, integer=True, lo=0, hi=2**64 - 1),
        initial_state=c.number(tr, "initial_state", "train", 0, integer=True, lo=0,
                               hi=n_states - 1),
        q_init=c.number(tr, "q_init", "train", 0.0),
        stability_window=c.number(tr, "stability_window", "train", 10, integer=True, lo=1),
    )
    if pol_kind == "fixed-table" and len(table) != n_states:
        c.fail("train.table", f"needs {n_states} entries")

    so = c.section(data.get("solve"), "solve", _SOLVE_KEYS)
    solve = SolveConfig(c.number(so, "tol", "solve", 1e-10, lo=0, lo_open=True),
                        c.number(so, "max_iter", "solve", 100_000, integer=True, lo=1))
    ev = c.section(data.get("eval"), "eval", _EVAL_KEYS)
    p_true = ev.get("p_true", EvalConfig().p_true)
    if not isinstance(p_true, list) or not all(
            isinstance(p, (int, float)) and 0 <= p <= 1 for p in p_true):
        c.fail("eval.p_true", "expected a list of probabilities")
    evalc = EvalConfig([float(p) for p in p_true],
                       c.number(ev, "rounds", "eval", 100_000, integer=True, lo=1),
                       c.number(ev, "seed", "eval", 0, integer=True, lo=0))

    out = data.get("output_dir") or os.environ.get(OUTPUT_ENV) or "robustq-out"
    out = Path(out)
    if not out.is_absolute():
        out = path.parent / out
    prob.pop("_n_states")
    return RunConfig(alpha, prob, train, solve, evalc, out, path.parent)


def _validate_problem(c: _Checker, prob: dict, kind: str, base: Path) -> dict:
    if kind == "coin":
        params = prob.get("params")
        if not isinstance(params, list) or not params:
            c.fail("problem.params", "need a nonempty list of binomial parameters (N >= 1)")
        for i, p in enumerate(params):
            if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0 <= p <= 1:
                c.fail(f"problem.params[{i}]", f"must be a probability, got {p!r}")
        prob["_n_states"] = env.COIN_TRIALS + 1
    elif kind == "wasserstein":
        c.number(prob, "center", "problem", 0.5, lo=0, hi=1)
        c.number(prob, "radius", "problem", None, lo=0)
        c.number(prob, "grid_step", "problem", 0.05, lo=0, lo_open=True)
        prob["_n_states"] = env.COIN_TRIALS + 1
    elif kind == "market":
        if not isinstance(prob.get("series"), str):
            c.fail("problem.series", "required path to a sign-series file")
        if not (base / prob["series"]).is_file():
            c.fail("problem.series", f"file not found: {prob['series']}")
        h = c.number(prob, "h", "problem", 5, integer=True, lo=1)
        c.number(prob, "gamma_smooth", "problem", 1e-6, lo=0, lo_open=True)
        periods = prob.get("periods")
        if periods is not None:
            if not isinstance(periods, list) or not periods:
                c.fail("problem.periods", "expected a nonempty list (N >= 1)")
            norm = []
            for i, per in enumerate(periods):
                if not isinstance(per, dict) or not set(per) <= {"label", "start", "end"}:
                    c.fail(f"problem.periods[{i}]", "expected {label, start, end}")
                norm.append({"label": str(per.get("label", f"P{i + 1}")),
                             "start": _date(per.get("start")), "end": _date(per.get("end"))})
            prob["periods"] = norm
        prob["_n_states"] = 2**h
    else:
        n_states = _labels(c, prob, "states")
        _labels(c, prob, "actions")
        c.number(prob, "n_kernels", "problem", None, integer=True, lo=1)
        for key in ("kernels", "rewards"):
            if not isinstance(prob.get(key), str):
                c.fail(f"problem.{key}", "required path to a CSV file")
            if not (base / prob[key]).is_file():
                c.fail(f"problem.{key}", f"file not found: {prob[key]}")
        prob["_n_states"] = n_states
        # fail early on non-normalised kernels
        try:
            build_problem({k: v for k, v in prob.items() if k != "_n_states"}, 0.5, base)
        except (StructureError, InputError) as e:
            c.fail("problem.kernels", str(e))
    return prob


def _labels(c: _Checker, prob: dict, key: str) -> int:
    v = prob.get(key)
    if isinstance(v, int) and not isinstance(v, bool) and v >= 1:
        return v
    if isinstance(v, list) and v:
        return len(v)
    c.fail(f"problem.{key}", "expected a positive count or a list of labels")


def _space_labels(v) -> list:
    return list(range(v)) if isinstance(v, int) else v


def build_problem(prob: dict, alpha: float, base_dir: Path = Path(".")) -> DiscountedProblem:
    kind = prob["kind"]
    if kind == "coin":
        return env.build_coin_problem(prob["params"], alpha)
    if kind == "wasserstein":
        return env.build_wasserstein_proxy(prob.get("center", 0.5), prob["radius"],
                                           prob.get("grid_step", 0.05), alpha)
    if kind == "market":
        spec = env.MarketModelSpec(prob.get("h", 5), prob.get("gamma_smooth", 1e-6))
        series = read_series(Path(base_dir) / prob["series"])
        periods = prob.get("periods") or [{"label": "all", "start": None, "end": None}]
        tables = []
        for per in periods:
            sub = series if per["start"] is None and per["end"] is None else \
                series.between(per["start"], per["end"])
            tables.append(env.market_probabilities(sub, spec))
        return env.build_market_problem(tables, spec.h, alpha,
                                        name="market:" + ",".join(p["label"] for p in periods))
    if kind == "custom":
        states = FiniteStateSpace(_space_labels(prob["states"]))
        actions = FiniteActionSpace(_space_labels(prob["actions"]))
        nx, na = len(states), len(actions)
        kernels = read_custom_kernels(Path(base_dir) / prob["kernels"], nx, na, prob["n_kernels"])
        rewards = read_custom_rewards(Path(base_dir) / prob["rewards"], nx, na)
        return DiscountedProblem(states, actions, rewards, AmbiguitySet(kernels), alpha,
                                 name="custom")
    raise StructureError(f"unknown problem kind {kind!r}")


def config_from_dict(data: dict, path: Path) -> Path:
    """Write ``data`` as YAML to ``path``; handy for scripted sweeps and tests."""
    path = Path(path)
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path

