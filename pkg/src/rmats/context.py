"""Market context handed to agents at each decision point.

The backtest engine builds the base context (prices up to the decision day,
event flag, portfolio state); the coordinating strategy enriches it with the
cross-agent quantities (health scores, shared geo score) before each round.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .config import AssetClasses, StrategyConfig
from .core import PriceTable, log_returns


@dataclass(frozen=True)
class EventWindow:
    """Named stress window; start/end inclusive, windows may overlap."""

    name: str
    start: dt.date
    end: dt.date

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"event '{self.name}': start after end")

    def contains(self, day: dt.date) -> bool:
        return self.start <= day <= self.end


@dataclass(frozen=True)
class PortfolioState:
    """What the running portfolio looks like at a decision point."""

    equity: np.ndarray            # daily equity up to and including today
    daily_returns: np.ndarray     # equity-curve daily simple returns
    drifted_weights: np.ndarray | None  # incumbent weights after price drift

    @property
    def drawdown(self) -> float:
        if self.equity.size == 0:
            return 0.0
        peak = float(np.max(self.equity))
        return 0.0 if peak <= 0 else 1.0 - float(self.equity[-1]) / peak

    def ann_vol(self, window: int = 21) -> float:
        r = self.daily_returns[-window:]
        if r.size < 2:
            return 0.0
        return float(np.std(r, ddof=1) * np.sqrt(252.0))


@dataclass(frozen=True)
class MarketContext:
    prices: PriceTable            # history up to the decision day, inclusive
    classes: AssetClasses
    cfg: StrategyConfig
    event_active: bool = False
    events: tuple = ()
    portfolio: PortfolioState | None = None
    # filled in by the coordinating strategy
    healths: dict | None = None
    geo_score: float | None = None
    geo_trailing: float | None = None
    returns: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.returns is None and self.prices.n_days >= 2:
            object.__setattr__(self, "returns", log_returns(self.prices))

    @property
    def day_index(self) -> int:
        return self.prices.n_days - 1

    @property
    def date(self) -> dt.date:
        return self.prices.dates[-1]

    @property
    def n_assets(self) -> int:
        return self.prices.n_assets


def build_context(
    prices: PriceTable,
    cfg: StrategyConfig,
    events: tuple = (),
    portfolio: PortfolioState | None = None,
    classes: AssetClasses | None = None,
) -> MarketContext:
    from .config import classify_universe

    if classes is None:
        classes = classify_universe(prices.tickers, cfg)
    today = prices.dates[-1]
    active = any(ev.contains(today) for ev in events)
    return MarketContext(
        prices=prices,
        classes=classes,
        cfg=cfg,
        event_active=active,
        events=tuple(events),
        portfolio=portfolio,
    )
