"""Backtest harness: monthly rebalancing with proportional costs, performance
and event metrics, ablation runner, and coordination-round statistics.

Strategies are callables ``(MarketContext) -> Weights``; at each rebalance the
context exposes only data up to the decision day, so truncating the price
table after a rebalance cannot change any earlier decision.
"""
from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass

import numpy as np

from .config import StrategyConfig, classify_universe
from .context import EventWindow, MarketContext, PortfolioState
from .coordination import CoordinationOutcome
from .core import PriceTable, Weights


@dataclass(frozen=True)
class BacktestConfig:
    """Monthly-cadence simulation settings."""

    cost_bps: float = 10.0
    start: dt.date | None = None       # first rebalance on/after this date
    end: dt.date | None = None
    initial_equity: float = 1.0
    risk_free: float = 0.0             # annualized, for the Sharpe excess
    warmup_days: int = 504

    def __post_init__(self) -> None:
        if self.cost_bps < 0:
            raise ValueError("cost_bps must be non-negative")
        if self.initial_equity <= 0:
            raise ValueError("initial equity must be positive")
        if self.start is not None and self.end is not None and not self.start < self.end:
            raise ValueError("start must precede end")


@dataclass(frozen=True)
class TradeRecord:
    date: dt.date
    turnover: float      # L1 distance between incoming drifted and new weights
    cost: float          # currency units charged


@dataclass(frozen=True)
class BacktestResult:
    dates: tuple
    equity: np.ndarray
    weight_dates: tuple
    weights: tuple                    # Weights per rebalance
    trades: tuple                     # TradeRecord per rebalance
    coordination: tuple = ()          # CoordinationOutcome per rebalance (coordinated strategies only)

    def __post_init__(self) -> None:
        e = np.asarray(self.equity, dtype=np.float64)
        object.__setattr__(self, "equity", e)
        if e.size != len(self.dates):
            raise ValueError("equity length mismatch")
        if np.any(e <= 0.0):
            raise ValueError("equity must stay positive")


@dataclass(frozen=True)
class Metrics:
    ann_return: float
    sharpe: float
    mdd: float
    calmar: float
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "ann_return": self.ann_return,
            "sharpe": self.sharpe,
            "mdd": self.mdd,
            "calmar": self.calmar,
            "degenerate": self.degenerate,
        }


def month_start_rebalances(dates, first_idx: int) -> list:
    """Indices of the first trading day of each month, from ``first_idx`` on."""
    out = []
    prev_key = None
    for i, d in enumerate(dates):
        key = (d.year, d.month)
        if key != prev_key:
            if i >= first_idx:
                out.append(i)
            prev_key = key
    return out


def run_backtest(
    strategy,
    prices: PriceTable,
    cfg: BacktestConfig,
    events=(),
    strategy_cfg: StrategyConfig | None = None,
    collect_coordination: bool = True,
) -> BacktestResult:
    """Simulate monthly rebalancing with proportional transaction costs.

    Weights drift with prices between rebalances; the cost of a rebalance is
    cost_bps * 1e-4 * ||w_new - w_drifted||_1 * equity, charged on the step
    following the decision.  equity[0] equals the configured initial equity.
    """
    scfg = strategy_cfg if strategy_cfg is not None else StrategyConfig()
    classes = classify_universe(prices.tickers, scfg)
    dates = prices.dates
    n = prices.n_assets

    if cfg.start is not None:
        start_idx = next((i for i, d in enumerate(dates) if d >= cfg.start), None)
        if start_idx is None:
            raise ValueError("start date beyond price history")
    else:
        start_idx = cfg.warmup_days
    if start_idx < cfg.warmup_days:
        raise ValueError(
            f"insufficient warm-up: need {cfg.warmup_days} trading days before the first rebalance"
        )
    end_idx = prices.n_days - 1
    if cfg.end is not None:
        end_idx = max(i for i, d in enumerate(dates) if d <= cfg.end)

    rebalances = month_start_rebalances(dates, start_idx)
    rebalances = [i for i in rebalances if i <= end_idx]
    if not rebalances:
        raise ValueError("no rebalance dates inside the configured span")
    t0 = rebalances[0]
    rebalance_set = set(rebalances)

    equity = [cfg.initial_equity]
    eq_dates = [dates[t0]]
    daily_returns: list = []
    held: np.ndarray | None = None
    pending_cost_frac = 0.0
    weight_dates = []
    weight_log = []
    trade_log = []
    coord_log = []

    for t in range(t0, end_idx + 1):
        if t in rebalance_set:
            drifted = held.copy() if held is not None else np.zeros(n)
            state = PortfolioState(
                equity=np.asarray(equity, dtype=np.float64),
                daily_returns=np.asarray(daily_returns, dtype=np.float64),
                drifted_weights=drifted if held is not None else None,
            )
            ctx = MarketContext(
                prices=prices.truncate(t + 1),
                classes=classes,
                cfg=scfg,
                event_active=any(ev.contains(dates[t]) for ev in events),
                events=tuple(events),
                portfolio=state,
            )
            w_new = strategy(ctx)
            if not isinstance(w_new, Weights):
                w_new = Weights(np.asarray(w_new, dtype=np.float64))
            outcome = getattr(strategy, "last_outcome", None)
            if collect_coordination and isinstance(outcome, CoordinationOutcome):
                coord_log.append((dates[t], outcome))
            turnover = float(np.abs(w_new.values - drifted).sum())
            cost_frac = cfg.cost_bps * 1e-4 * turnover
            trade_log.append(TradeRecord(date=dates[t], turnover=turnover, cost=cost_frac * equity[-1]))
            weight_dates.append(dates[t])
            weight_log.append(w_new)
            held = w_new.values.copy()
            pending_cost_frac = cost_frac
        if t == end_idx:
            break
        gross = float(held @ (prices.prices[t + 1] / prices.prices[t]))
        step = (1.0 - pending_cost_frac) * gross
        pending_cost_frac = 0.0
        equity.append(equity[-1] * step)
        eq_dates.append(dates[t + 1])
        daily_returns.append(step - 1.0)
        held = held * (prices.prices[t + 1] / prices.prices[t])
        s = held.sum()
        if s > 0:
            held = held / s

    return BacktestResult(
        dates=tuple(eq_dates),
        equity=np.asarray(equity, dtype=np.float64),
        weight_dates=tuple(weight_dates),
        weights=tuple(weight_log),
        trades=tuple(trade_log),
        coordination=tuple(coord_log),
    )


def performance_metrics(result: BacktestResult, cfg: BacktestConfig) -> Metrics:
    """Annualized return, Sharpe, maximum drawdown, Calmar."""
    e = result.equity
    if e.size < 2:
        raise ValueError("need at least 2 equity points")
    T = e.size - 1
    ann_return = float((e[-1] / e[0]) ** (252.0 / T) - 1.0)
    r = e[1:] / e[:-1] - 1.0
    sd = float(np.std(r, ddof=1)) if r.size >= 2 else 0.0
    degenerate = False
    if sd <= 1e-15:
        sharpe = 0.0
        degenerate = True
    else:
        rf_daily = cfg.risk_free / 252.0
        sharpe = float((r.mean() - rf_daily) / sd * math.sqrt(252.0))
    peak = np.maximum.accumulate(e)
    mdd = float(np.max(1.0 - e / peak))
    if mdd > 0.0:
        calmar = ann_return / mdd
    else:
        calmar = 0.0
        degenerate = True
    return Metrics(ann_return=ann_return, sharpe=sharpe, mdd=mdd, calmar=calmar, degenerate=degenerate)


@dataclass(frozen=True)
class EventStats:
    name: str
    cum_return: float
    edd: float            # max drawdown measured inside the window only


def event_window_returns(result: BacktestResult, events) -> list:
    """Cumulative return and intra-window drawdown for each event."""
    out = []
    for ev in events:
        idx = [i for i, d in enumerate(result.dates) if ev.contains(d)]
        if not idx:
            raise ValueError(f"event '{ev.name}' lies outside the backtest dates")
        seg = result.equity[idx[0] : idx[-1] + 1]
        cum = float(seg[-1] / seg[0] - 1.0)
        peak = np.maximum.accumulate(seg)
        edd = float(np.max(1.0 - seg / peak))
        out.append(EventStats(name=ev.name, cum_return=cum, edd=edd))
    return out


def convergence_stats(outcomes, stress_flags=None) -> dict:
    """Order statistics of rounds-used plus the per-round mean delta curve.

    ``outcomes`` may be CoordinationOutcome objects or plain dicts carrying
    ``rounds_used``, ``converged``, ``override_fired`` and ``all_deltas``.
    The delta curve starts at round 1 (distance from the equal-weight
    reference to the first aggregate) and continues with the consecutive-
    aggregate deltas.
    """
    if not outcomes:
        raise ValueError("need at least one coordination log")

    def _fields(o):
        if isinstance(o, dict):
            return o["rounds_used"], bool(o.get("converged")), bool(o.get("override_fired")), list(o["all_deltas"])
        return o.rounds_used, o.converged, o.override_fired, list(o.all_deltas())

    rounds = []
    deltas_by_round: dict = {}
    n_override = 0
    for o in outcomes:
        used, conv, override, all_d = _fields(o)
        rounds.append(used)
        n_override += int(override)
        for j, d in enumerate(all_d, start=1):
            deltas_by_round.setdefault(j, []).append(float(d))
    rounds_arr = np.asarray(rounds, dtype=np.float64)
    curve = [float(np.mean(deltas_by_round[j])) for j in sorted(deltas_by_round)]
    stats = {
        "n": len(rounds),
        "median_rounds": float(np.median(rounds_arr)),
        "mean_rounds": float(np.mean(rounds_arr)),
        "max_rounds": int(np.max(rounds_arr)),
        "frac_within_2": float(np.mean(rounds_arr <= 2)),
        "n_override": n_override,
        "delta_curve": curve,
    }
    if stress_flags is not None:
        flags = list(stress_flags)
        if len(flags) != len(outcomes):
            raise ValueError("stress flags length mismatch")
        for label, keep in (("normal", False), ("stress", True)):
            sub = [o for o, f in zip(outcomes, flags) if bool(f) == keep]
            stats[label] = convergence_stats(sub) if sub else None
    return stats


def baseline(name: str, strategy_cfg: StrategyConfig | None = None):
    """Named baseline strategy: mvo, multifactor, sentiment_proxy, equal_weight."""
    from .strategy import make_baseline

    return make_baseline(name, strategy_cfg if strategy_cfg is not None else StrategyConfig())


ABLATION_VARIANTS = ("full", "no_recursion", "no_sentiment", "no_risk", "no_analysis", "no_did")


def run_ablation(
    prices: PriceTable,
    cfg: BacktestConfig,
    variants,
    events=(),
    strategy_cfg: StrategyConfig | None = None,
) -> dict:
    """Independent full backtests of the coordinated strategy variants."""
    from .strategy import make_rmats_variant

    scfg = strategy_cfg if strategy_cfg is not None else StrategyConfig()
    out = {}
    for variant in variants:
        if variant not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant '{variant}'")
        strat = make_rmats_variant(variant, scfg)
        result = run_backtest(strat, prices, cfg, events=events, strategy_cfg=scfg)
        metrics = performance_metrics(result, cfg)
        ev_stats = event_window_returns(result, [e for e in events if _covered(e, result.dates)])
        avg_edd = float(np.mean([s.edd for s in ev_stats])) if ev_stats else 0.0
        outcomes = [o for _, o in result.coordination]
        flags = [any(e.contains(d) for e in events) for d, _ in result.coordination]
        out[variant] = {
            "metrics": metrics,
            "avg_edd": avg_edd,
            "events": ev_stats,
            "convergence": convergence_stats(outcomes, flags) if outcomes else None,
            "result": result,
        }
    return out


def _covered(ev: EventWindow, dates) -> bool:
    return any(ev.contains(d) for d in dates)
