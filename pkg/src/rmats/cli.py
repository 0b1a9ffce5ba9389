"""Command-line entry point.

Subcommands: ``synth`` (spec -> price fixture), ``validate`` (lint price /
config / events files), ``backtest``, ``ablate``, and ``convergence``
(round-log -> statistics).  Exit codes: 0 success, 1 validation error,
2 runtime error; diagnostics go to stderr.  Output files are written
atomically (write-then-rename) and runs are byte-reproducible.
"""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import data
from .backtest import (
    BacktestConfig,
    convergence_stats,
    event_window_returns,
    performance_metrics,
    run_ablation,
    run_backtest,
)
from .config import ConfigError, StrategyConfig, load_config
from .risk import stress_test
from .strategy import make_strategy

STRATEGIES = ("rmats", "mvo", "multifactor", "sentiment_proxy", "equal_weight")


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _load_inputs(args):
    cfg = StrategyConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    events = ()
    if getattr(args, "events", None):
        events = data.load_events(args.events)
    return cfg, events


def _backtest_config(args, cfg: StrategyConfig) -> BacktestConfig:
    start = dt.date.fromisoformat(args.start) if getattr(args, "start", None) else None
    end = dt.date.fromisoformat(args.end) if getattr(args, "end", None) else None
    return BacktestConfig(
        cost_bps=cfg.cost_bps,
        start=start,
        end=end,
        initial_equity=cfg.initial_equity,
        risk_free=cfg.risk_free,
        warmup_days=cfg.warmup_days,
    )


def _metrics_payload(metrics, events_stats, convergence, stress) -> dict:
    payload = {
        "metrics": metrics.as_dict(),
        "events": [{"name": s.name, "cum_return": s.cum_return, "edd": s.edd} for s in events_stats],
        "avg_edd": float(np.mean([s.edd for s in events_stats])) if events_stats else 0.0,
        "convergence": convergence,
        "stress_test": stress,
    }
    return payload


def _write_equity_csv(path: str, dates, columns: dict) -> None:
    names = list(columns.keys())
    lines = ["date," + ",".join(names)]
    for i, d in enumerate(dates):
        lines.append(d.isoformat() + "," + ",".join(repr(float(columns[n][i])) for n in names))
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_weights_csv(path: str, result, tickers) -> None:
    lines = ["date,ticker,weight"]
    for d, w in zip(result.weight_dates, result.weights):
        for t, v in zip(tickers, w.values):
            lines.append(f"{d.isoformat()},{t},{v!r}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_rounds_csv(path: str, coordination, tickers) -> None:
    lines = ["rebalance,round,agent,field,value"]
    for date, outcome in coordination:
        day = date.isoformat()
        for rec in outcome.rounds:
            for name, msg in sorted(rec.messages.items()):
                rows = [
                    ("confidence", repr(float(msg.confidence))),
                    ("geo_risk", repr(float(msg.geo_risk))),
                    ("regime", str(int(msg.regime))),
                    ("timestamp", str(int(msg.timestamp))),
                    ("delta", repr(float(msg.delta))),
                    ("override", str(int(msg.override))),
                ]
                rows.extend((f"w_{t}", repr(float(v))) for t, v in zip(tickers, msg.weights.values))
                for fieldname, value in rows:
                    lines.append(f"{day},{rec.round},{name},{fieldname},{value}")
            if not (rec.override and rec.round > 1):
                lines.append(f"{day},{rec.round},manager,delta,{rec.delta!r}")
            lines.append(f"{day},{rec.round},manager,mean_geo,{rec.mean_geo!r}")
            lines.append(f"{day},{rec.round},manager,regime,{int(rec.regime)}")
            lines.append(f"{day},{rec.round},manager,fallback,{int(rec.fallback)}")
            lines.append(f"{day},{rec.round},manager,override,{int(rec.override)}")
        lines.append(f"{day},{outcome.rounds_used},manager,converged,{int(outcome.converged)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def _default_stress(result, table, events, cfg) -> dict | None:
    if not result.weights:
        return None
    scenarios = data.default_scenarios(table, events)
    if not scenarios:
        return None
    final = result.weights[-1]
    losses = stress_test(final, list(scenarios.values()))
    return {name: loss for name, loss in zip(scenarios.keys(), losses)}


def cmd_synth(args) -> int:
    spec = data.load_synth_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    table = data.synth_prices(spec)
    data.write_price_table(table, args.out)
    print(f"wrote {table.n_days} days x {table.n_assets} assets to {args.out}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    table = None
    if args.prices:
        table = data.load_price_table(args.prices)
        print(f"prices ok: {table.n_days} days, {table.n_assets} tickers", file=sys.stderr)
    if args.config:
        load_config(args.config)
        print("config ok", file=sys.stderr)
    if args.events:
        events = data.load_events(args.events)
        print(f"events ok: {len(events)} windows", file=sys.stderr)
    if not (args.prices or args.config or args.events):
        raise ConfigError("nothing to validate: pass --prices, --config, or --events")
    return 0


def cmd_backtest(args) -> int:
    cfg, events = _load_inputs(args)
    if args.strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy '{args.strategy}'")
    table = data.load_price_table(args.prices)
    bt_cfg = _backtest_config(args, cfg)
    strategy = make_strategy(args.strategy, cfg)
    result = run_backtest(strategy, table, bt_cfg, events=events, strategy_cfg=cfg)
    metrics = performance_metrics(result, bt_cfg)
    covered = [e for e in events if any(e.contains(d) for d in result.dates)]
    ev_stats = event_window_returns(result, covered)
    conv = None
    if result.coordination:
        outcomes = [o for _, o in result.coordination]
        flags = [any(e.contains(d) for e in events) for d, _ in result.coordination]
        conv = convergence_stats(outcomes, flags)

    os.makedirs(args.out, exist_ok=True)
    _write_equity_csv(os.path.join(args.out, "equity.csv"), result.dates, {args.strategy: result.equity})
    _write_weights_csv(os.path.join(args.out, "weights.csv"), result, table.tickers)
    if result.coordination:
        _write_rounds_csv(os.path.join(args.out, "rounds.csv"), result.coordination, table.tickers)
    payload = _metrics_payload(metrics, ev_stats, conv, _default_stress(result, table, covered, cfg))
    payload["strategy"] = args.strategy
    payload["span"] = {"start": result.dates[0].isoformat(), "end": result.dates[-1].isoformat()}
    payload["n_rebalances"] = len(result.weight_dates)
    _atomic_write(os.path.join(args.out, "report.json"), _json_dumps(payload))
    print(
        f"{args.strategy}: ann_return={metrics.ann_return:.4f} sharpe={metrics.sharpe:.3f} "
        f"mdd={metrics.mdd:.4f} calmar={metrics.calmar:.3f}",
        file=sys.stderr,
    )
    return 0


def cmd_ablate(args) -> int:
    cfg, events = _load_inputs(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    table = data.load_price_table(args.prices)
    bt_cfg = _backtest_config(args, cfg)
    rows = run_ablation(table, bt_cfg, variants, events=events, strategy_cfg=cfg)

    os.makedirs(args.out, exist_ok=True)
    first = rows[variants[0]]["result"]
    _write_equity_csv(
        os.path.join(args.out, "equity.csv"),
        first.dates,
        {v: rows[v]["result"].equity for v in variants},
    )
    payload = {"variants": {}}
    for v in variants:
        payload["variants"][v] = {
            "metrics": rows[v]["metrics"].as_dict(),
            "avg_edd": rows[v]["avg_edd"],
            "events": [{"name": s.name, "cum_return": s.cum_return, "edd": s.edd} for s in rows[v]["events"]],
            "convergence": rows[v]["convergence"],
        }
    _atomic_write(os.path.join(args.out, "report.json"), _json_dumps(payload))
    for v in variants:
        m = rows[v]["metrics"]
        print(f"{v}: ann_return={m.ann_return:.4f} mdd={m.mdd:.4f} avg_edd={rows[v]['avg_edd']:.4f}", file=sys.stderr)
    return 0


def parse_rounds_csv(path: str):
    """Rebuild per-rebalance coordination summaries from a rounds.csv export."""
    per: dict = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["rebalance", "round", "agent", "field", "value"]:
            raise data.DataError(f"{path}: header must be 'rebalance,round,agent,field,value'")
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise data.DataError(f"{path}: row {i}: expected 5 fields")
            day, rnd, agent, fieldname, value = (c.strip() for c in row)
            rec = per.setdefault(day, {"rounds_used": 0, "deltas": {}, "converged": False, "override_fired": False})
            rnd_i = int(rnd)
            rec["rounds_used"] = max(rec["rounds_used"], rnd_i)
            if agent == "manager" and fieldname == "delta":
                rec["deltas"][rnd_i] = float(value)
            if agent == "manager" and fieldname == "converged":
                rec["converged"] = bool(int(value))
            if agent == "manager" and fieldname == "override" and value not in ("0", ""):
                rec["override_fired"] = True
    out = []
    for day in sorted(per):
        rec = per[day]
        deltas = [rec["deltas"][k] for k in sorted(rec["deltas"])]
        out.append(
            {
                "date": dt.date.fromisoformat(day),
                "rounds_used": rec["rounds_used"],
                "converged": rec["converged"],
                "override_fired": rec["override_fired"],
                "all_deltas": deltas,
            }
        )
    return out


def cmd_convergence(args) -> int:
    logs = parse_rounds_csv(args.rounds)
    if not logs:
        raise data.DataError(f"{args.rounds}: no coordination records")
    flags = None
    if args.events:
        events = data.load_events(args.events)
        flags = [any(e.contains(rec["date"]) for e in events) for rec in logs]
    stats = convergence_stats(logs, flags)
    text = _json_dumps(stats)
    if args.out:
        _atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rmats", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic price fixture")
    p.add_argument("--spec", required=True, help="synth spec file (flat key=value)")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--out", required=True, help="output price CSV path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="lint price/config/events files")
    p.add_argument("--prices")
    p.add_argument("--config")
    p.add_argument("--events")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("backtest", help="run one strategy backtest")
    p.add_argument("--prices", required=True)
    p.add_argument("--strategy", default="rmats", help="|".join(STRATEGIES))
    p.add_argument("--config")
    p.add_argument("--events")
    p.add_argument("--start", help="first rebalance on/after this ISO date")
    p.add_argument("--end", help="last simulated ISO date")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output run directory")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("ablate", help="run ablation variants")
    p.add_argument("--prices", required=True)
    p.add_argument("--variants", default="full,no_recursion,no_sentiment,no_risk,no_analysis,no_did")
    p.add_argument("--config")
    p.add_argument("--events")
    p.add_argument("--start")
    p.add_argument("--end")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("convergence", help="round log in, statistics out")
    p.add_argument("--rounds", required=True, help="rounds.csv from a backtest run")
    p.add_argument("--events")
    p.add_argument("--out", help="write stats JSON here instead of stdout")
    p.set_defaults(func=cmd_convergence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, data.DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
