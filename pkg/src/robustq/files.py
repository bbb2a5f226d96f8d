"""On-disk formats: CSV tables with a JSON metadata sidecar next to each.

Floats are written with ``repr`` so tables round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np

from .environments import ReturnSeries, signs_from_prices
from .evaluation import PolicyTable
from .mdp import StructureError

logger = logging.getLogger(__name__)

QTABLE_SCHEMA = "robustq.qtable/1"
POLICY_SCHEMA = "robustq.policy/1"
SERIES_SCHEMA = "robustq.signs/1"


class InputError(ValueError):
    """A user-supplied file is missing or malformed (exit code 2)."""


def fmt_label(label: Sequence[int]) -> str:
    return " ".join(str(int(v)) for v in label)


def parse_label(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split())


def sidecar(path: Path) -> Path:
    return Path(path).with_suffix(".json")


def _require(path: Path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such file")
    return path


def _write_json(path: Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_qtable(path, q, states, actions, meta: dict | None = None) -> Path:
    """Write ``q`` to ``path`` (CSV) and labels/schema to the JSON sidecar."""
    path = Path(path)
    q = np.asarray(q, dtype=float)
    states, actions = list(states), list(actions)
    if q.shape != (len(states), len(actions)):
        raise StructureError("Q table shape does not match labels")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state"] + [f"a={fmt_label(a)}" for a in actions])
        for s, row in zip(states, q.tolist()):
            w.writerow([fmt_label(s)] + [repr(v) for v in row])
    _write_json(sidecar(path), {
        "schema": QTABLE_SCHEMA,
        "states": [list(s) for s in states],
        "actions": [list(a) for a in actions],
        "shape": list(q.shape),
        "order": "row-major (state, action)",
        **(meta or {}),
    })
    return path


def read_qtable(path) -> tuple[np.ndarray, list[tuple[int, ...]], list[tuple[int, ...]]]:
    path = _require(path)
    meta_path = _require(sidecar(path))
    meta = json.loads(meta_path.read_text())
    if meta.get("schema") != QTABLE_SCHEMA:
        raise InputError(f"{meta_path}: unrecognised schema {meta.get('schema')!r}")
    states = [tuple(s) for s in meta["states"]]
    actions = [tuple(a) for a in meta["actions"]]
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    if len(body) != len(states) or any(len(r) != len(actions) + 1 for r in body):
        raise InputError(f"{path}: dimensions disagree with {meta_path}")
    for i, (r, s) in enumerate(zip(body, states), start=2):
        if parse_label(r[0]) != s:
            raise InputError(f"{path}:{i}: state label {r[0]!r} does not match sidecar")
    q = np.array([[float(v) for v in r[1:]] for r in body])
    return q, states, actions


def write_policy(path, policy: PolicyTable, states, meta: dict | None = None) -> Path:
    path = Path(path)
    states = list(states)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "action_index", "action"])
        for s, i, a in zip(states, policy.indices, policy.actions().tolist()):
            w.writerow([fmt_label(s), i, a])
    _write_json(sidecar(path), {"schema": POLICY_SCHEMA,
                                "action_values": list(policy.action_values),
                                **(meta or {})})
    return path


def read_policy(path) -> PolicyTable:
    """Read a policy CSV. The sidecar is optional; without it actions are {-1, 0, 1}."""
    path = _require(path)
    meta_path = sidecar(path)
    kwargs = {}
    if meta_path.is_file():
        meta = json.loads(meta_path.read_text())
        if meta.get("schema") != POLICY_SCHEMA:
            raise InputError(f"{meta_path}: unrecognised schema {meta.get('schema')!r}")
        kwargs["action_values"] = tuple(meta["action_values"])
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        try:
            idx = [int(r["action_index"]) for r in reader]
        except (KeyError, TypeError, ValueError) as e:
            raise InputError(f"{path}: malformed policy file ({e})") from None
    try:
        return PolicyTable(tuple(idx), **kwargs)
    except StructureError as e:
        raise InputError(f"{path}: {e}") from None


def read_prices_csv(path) -> tuple[list[str], list[float]]:
    """Two-column (date, adjusted close) CSV with a header row."""
    path = _require(path)
    dates, prices = [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise InputError(f"{path}:{lineno}: expected date,price")
            try:
                price = float(row[1])
            except ValueError:
                raise InputError(f"{path}:{lineno}: bad price {row[1]!r}") from None
            if not np.isfinite(price) or price <= 0:
                raise InputError(f"{path}:{lineno}: price must be positive, got {row[1]!r}")
            dates.append(row[0].strip())
            prices.append(price)
    if len(prices) < 2:
        raise InputError(f"{path}: need at least 2 data rows, got {len(prices)}")
    if dates != sorted(dates):
        raise InputError(f"{path}: dates must be in increasing order")
    return dates, prices


def ingest_prices(path, instrument: str = "") -> tuple[ReturnSeries, list[str]]:
    """Price CSV to sign series; also returns the dates whose return was exactly 0."""
    dates, prices = read_prices_csv(path)
    series = signs_from_prices(prices, dates, instrument or Path(path).stem)
    flat = [dates[i + 1] for i in range(len(prices) - 1) if prices[i + 1] == prices[i]]
    return series, flat


def write_series(path, series: ReturnSeries, meta: dict | None = None) -> Path:
    """Sign series CSV with the running sum of signs as a third column."""
    path = Path(path)
    dates = series.dates or tuple(str(i) for i in range(len(series)))
    cum = np.cumsum(series.signs)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "sign", "cumulative"])
        for d, s, c in zip(dates, series.signs.tolist(), cum.tolist()):
            w.writerow([d, s, c])
    rng = series.date_range
    _write_json(sidecar(path), {"schema": SERIES_SCHEMA, "instrument": series.instrument,
                                "length": len(series),
                                "start": rng[0] if rng else None,
                                "end": rng[1] if rng else None, **(meta or {})})
    return path


def read_series(path) -> ReturnSeries:
    path = _require(path)
    instrument = ""
    if sidecar(path).is_file():
        instrument = json.loads(sidecar(path).read_text()).get("instrument", "")
    dates, signs = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                signs.append(int(row["sign"]))
            except (KeyError, TypeError, ValueError):
                raise InputError(f"{path}:{lineno}: bad sign") from None
            dates.append(row.get("date") or str(lineno - 2))
    try:
        return ReturnSeries(np.array(signs), tuple(dates), instrument)
    except StructureError as e:
        raise InputError(f"{path}: {e}") from None


def read_custom_kernels(path, n_states: int, n_actions: int, n_kernels: int) -> np.ndarray:
    """CSV rows (x, a, k, x_next, probability); unlisted entries are zero."""
    path = _require(path)
    k = np.zeros((n_states, n_actions, n_kernels, n_states))
    shape = (n_states, n_actions, n_kernels, n_states)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, a, kk, y = (int(v) for v in row[:4])
                p = float(row[4])
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: expected x,a,k,x_next,probability") from None
            if not all(0 <= v < n for v, n in zip((x, a, kk, y), shape)):
                raise InputError(f"{path}:{lineno}: index out of range")
            k[x, a, kk, y] = p
    return k


def read_custom_rewards(path, n_states: int, n_actions: int) -> np.ndarray:
    """CSV rows (x, a, x_next, reward); unlisted entries are zero."""
    path = _require(path)
    r = np.zeros((n_states, n_actions, n_states))
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                x, a, y = (int(v) for v in row[:3])
                val = float(row[3])
            except (ValueError, IndexError):
                raise InputError(f"{path}:{lineno}: expected x,a,x_next,reward") from None
            if not (0 <= x < n_states and 0 <= a < n_actions and 0 <= y < n_states):
                raise InputError(f"{path}:{lineno}: index out of range")
            r[x, a, y] = val
    return r
