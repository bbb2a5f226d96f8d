"""Command-line entry point.

    robustq train    CONFIG [--seed S] [--iterations N] [--oracle] [--out DIR]
    robustq solve    CONFIG [--tol TOL] [--out DIR]
    robustq eval     --policy FILE [--policy FILE ...] [--p-true P ...] [--rounds N]
                     [--seed S] [--exact] --out FILE
    robustq backtest --series FILE [--policy FILE ...] [--trend-following]
                     [--buy-and-hold] [--h H] [--period LABEL:START:END ...] --out FILE
    robustq ingest   PRICES_CSV --out FILE [--instrument NAME]

Exit codes: 0 success, 2 invalid input or configuration, 3 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import files
from .config import ConfigError, load_config
from .evaluation import (PolicyTable, backtest, buy_and_hold_policy, compare_policies,
                         expected_profit_coin, rollout_coin, trend_following_policy)
from .files import InputError
from .mdp import StructureError, greedy_policy, robust_value_iteration
from .qlearning import robbins_monro_diagnostics, train, visit_times

logger = logging.getLogger("robustq")

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 2, 3


def _policy_table(q, problem) -> PolicyTable:
    return PolicyTable(tuple(greedy_policy(q)), tuple(problem.actions.values()))


def _write_csv(path: Path, header, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: Path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.iterations is not None:
        overrides["iterations"] = args.iterations
    cfg = load_config(args.config, overrides)
    problem = cfg.build_problem()
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)

    oracle = None
    if args.oracle:
        oracle = robust_value_iteration(problem, cfg.solve.tol, cfg.solve.max_iter).q
    result = train(cfg.train, problem, oracle)
    meta = {"problem": problem.name, "alpha": problem.alpha, "seed": cfg.train.seed,
            "iterations": cfg.train.iterations}
    files.write_qtable(out / "q_table.csv", result.q, problem.states, problem.actions, meta)
    files.write_policy(out / "policy.csv", _policy_table(result.q, problem), problem.states, meta)
    _write_csv(out / "checkpoints.csv", ["t", "policy"],
               [[c.t, " ".join(str(a) for a in c.policy)] for c in result.checkpoints])
    if oracle is not None:
        _write_csv(out / "q_error.csv", ["t", "sup_error"],
                   [[c.t, repr(c.q_error)] for c in result.checkpoints])
    diag = robbins_monro_diagnostics(cfg.train.schedule, visit_times(result))
    _write_json(out / "train_run.json", {
        **meta,
        "duration_seconds": result.duration,
        "greedy_stable": result.converged(),
        "stability_window": cfg.train.stability_window,
        "starved_pairs": [list(p) for p in diag.flagged],
        "visit_floor": diag.floor,
        "kernel_counts": result.kernel_counts.tolist(),
    })
    logger.info("wrote training artifacts to %s", out)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    problem = cfg.build_problem()
    tol = args.tol if args.tol is not None else cfg.solve.tol
    if tol <= 0:
        raise ConfigError("--tol must be positive")
    res = robust_value_iteration(problem, tol, cfg.solve.max_iter)
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    meta = {"problem": problem.name, "alpha": problem.alpha, "tol": tol,
            "residual": res.residual, "iterations": res.iterations, "converged": res.converged}
    files.write_qtable(out / "qstar.csv", res.q, problem.states, problem.actions, meta)
    files.write_policy(out / "qstar_policy.csv", _policy_table(res.q, problem), problem.states,
                       meta)
    if not res.converged:
        logger.warning("value iteration did not reach tol=%g (residual %.3g)", tol, res.residual)
    return EXIT_OK


def _policy_label(path: str) -> tuple[str, str]:
    if "=" in path:
        label, _, p = path.partition("=")
        return label, p
    return Path(path).stem, path


def cmd_eval(args) -> int:
    policies = {}
    for spec in args.policy:
        label, path = _policy_label(spec)
        policies[label] = files.read_policy(path)
    p_true = args.p_true or [round(0.1 * i, 1) for i in range(1, 10)]
    if any(not 0 <= p <= 1 for p in p_true):
        raise InputError("--p-true values must lie in [0, 1]")
    if args.rounds < 1:
        raise InputError("--rounds must be >= 1")

    reports = {}

    def evaluate(policy, p):
        if args.exact:
            mean = expected_profit_coin(policy, p)
            reports[id(policy), p] = (args.rounds * mean, mean, 0.0)
        else:
            r = rollout_coin(policy, p, args.rounds, args.seed)
            reports[id(policy), p] = (r.cumulative_profit, r.per_round_mean, r.std_error)
        return reports[id(policy), p][0]

    table = compare_policies(policies, p_true, evaluate)
    rows = []
    for i, (label, pol) in enumerate(policies.items()):
        for j, p in enumerate(p_true):
            cum, mean, se = reports[id(pol), p]
            rows.append([label, p, "exact" if args.exact else "rollout", args.rounds,
                         repr(cum), repr(mean), repr(se),
                         "" if args.exact else args.seed, int(table.best[i, j])])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ["policy", "p_true", "mode", "rounds", "cumulative_profit",
                     "per_round_mean", "std_error", "seed", "best"], rows)
    _write_json(files.sidecar(out), {"policies": {k: _policy_label(s)[1] for k, s in
                                                  zip(policies, args.policy)},
                                     "p_true": p_true, "rounds": args.rounds,
                                     "mode": "exact" if args.exact else "rollout",
                                     "seed": None if args.exact else args.seed})
    return EXIT_OK


def _parse_period(text: str) -> tuple[str, str | None, str | None]:
    parts = text.split(":")
    if len(parts) != 3:
        raise InputError(f"--period expects LABEL:START:END, got {text!r}")
    label, start, end = parts
    return label, start or None, end or None


def cmd_backtest(args) -> int:
    series = files.read_series(args.series)
    h = args.h
    if h < 1:
        raise InputError("--h must be >= 1")
    policies = {}
    for spec in args.policy or []:
        label, path = _policy_label(spec)
        policies[label] = files.read_policy(path)
    if args.trend_following:
        policies["trend-following"] = trend_following_policy(h)
    if args.buy_and_hold:
        policies["buy-and-hold"] = buy_and_hold_policy(h)
    if not policies:
        raise InputError("give at least one --policy, --trend-following or --buy-and-hold")
    periods = [_parse_period(p) for p in args.period] or [("all", None, None)]
    slices = {}
    for label, start, end in periods:
        sub = series if start is None and end is None else series.between(start, end)
        if len(sub) <= h:
            raise InputError(f"period {label!r} has {len(sub)} signs; need more than h={h}")
        slices[label] = sub
    rows = []
    for plabel, pol in policies.items():
        for label, sub in slices.items():
            rep = backtest(pol, sub, h, label)
            rows.append([plabel, label, sub.dates[0] if sub.dates else "",
                         sub.dates[-1] if sub.dates else "", rep.trades,
                         repr(rep.mean_reward_per_trade), repr(rep.cumulative_reward)])
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, ["policy", "period", "start", "end", "trades", "mean_reward_per_trade",
                     "cumulative_reward"], rows)
    return EXIT_OK


def cmd_ingest(args) -> int:
    series, flat = files.ingest_prices(args.prices, args.instrument or "")
    for d in flat:
        logger.warning("zero return on %s mapped to +1", d)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    files.write_series(out, series, {"source": str(args.prices), "zero_returns": flat})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robustq",
                                 description="Robust Q-learning with finite ambiguity sets")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run robust Q-learning")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--oracle", action="store_true",
                   help="also solve exactly and log ||Q_t - Q*|| at checkpoints")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="exact robust value iteration")
    p.add_argument("config")
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="coin-toss profit of policies")
    p.add_argument("--policy", action="append", required=True,
                   help="policy CSV, optionally LABEL=PATH; repeatable")
    p.add_argument("--p-true", type=float, action="append",
                   help="true heads probability; repeatable (default 0.1..0.9)")
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="exact expectation instead of rollout")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("backtest", help="average reward per trade on a sign series")
    p.add_argument("--series", required=True)
    p.add_argument("--policy", action="append", help="policy CSV, optionally LABEL=PATH")
    p.add_argument("--trend-following", action="store_true")
    p.add_argument("--buy-and-hold", action="store_true")
    p.add_argument("--h", type=int, default=5)
    p.add_argument("--period", action="append", default=[],
                   help="LABEL:START:END with ISO dates; either bound may be empty")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("ingest", help="price CSV (date, close) to a sign series")
    p.add_argument("prices")
    p.add_argument("--out", required=True)
    p.add_argument("--instrument")
    p.set_defaults(func=cmd_ingest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, StructureError) as e:
        print(f"robustq {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"robustq {args.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
