"""Report agent: cross-sectional factor portfolio.

Four classic factors (momentum, low volatility, short-horizon mean reversion,
rolling Sharpe), each z-scored across the universe, averaged into a composite,
and mapped to weights through a tempered softmax.
"""
from __future__ import annotations

import numpy as np

from .context import MarketContext
from .core import AgentMessage, BroadcastMessage, Regime, Weights


class FactorPanel:
    """Per-asset factor z-scores; columns have mean 0 and unit deviation."""

    __slots__ = ("momentum", "low_vol", "mean_rev", "roll_sharpe")

    def __init__(self, momentum, low_vol, mean_rev, roll_sharpe):
        self.momentum = np.asarray(momentum, dtype=np.float64)
        self.low_vol = np.asarray(low_vol, dtype=np.float64)
        self.mean_rev = np.asarray(mean_rev, dtype=np.float64)
        self.roll_sharpe = np.asarray(roll_sharpe, dtype=np.float64)

    def composite(self) -> np.ndarray:
        return (self.momentum + self.low_vol + self.mean_rev + self.roll_sharpe) / 4.0


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = float(np.std(x))
    if sd <= 1e-12:
        return np.zeros_like(x)
    return (x - float(np.mean(x))) / sd


def factor_scores(
    returns: np.ndarray,
    momentum_window: int = 126,
    lowvol_window: int = 63,
    meanrev_window: int = 5,
    sharpe_window: int = 63,
) -> FactorPanel:
    """Compute the factor panel from a (T, n) log-return matrix, T >= momentum_window."""
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < momentum_window:
        raise ValueError(f"insufficient history: need {momentum_window} return rows")
    momentum = r[-momentum_window:].sum(axis=0)
    low_vol = -np.std(r[-lowvol_window:], axis=0, ddof=1)
    mean_rev = -r[-meanrev_window:].sum(axis=0)
    tail = r[-sharpe_window:]
    sd = np.std(tail, axis=0, ddof=1)
    mean = tail.mean(axis=0)
    roll_sharpe = np.divide(mean, sd, out=np.zeros_like(mean), where=sd > 1e-12)
    return FactorPanel(
        momentum=_zscore(momentum),
        low_vol=_zscore(low_vol),
        mean_rev=_zscore(mean_rev),
        roll_sharpe=_zscore(roll_sharpe),
    )


def softmax_weights(scores: np.ndarray, temperature: float) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64) / temperature
    s = s - s.max()
    e = np.exp(s)
    return e / e.sum()


def _rank(x: np.ndarray) -> np.ndarray:
    # average ranks with tie handling
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    sx = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Spearman correlation; 0 when either side is constant."""
    ra, rb = _rank(np.asarray(a, float)), _rank(np.asarray(b, float))
    if np.std(ra) <= 1e-12 or np.std(rb) <= 1e-12:
        return 0.0
    return float(np.corrcoef(ra, rb)[0, 1])


def report_propose(
    ctx: MarketContext,
    prior: BroadcastMessage | None = None,
    prev: np.ndarray | None = None,
) -> AgentMessage:
    """Factor-composite proposal with softmax allocation."""
    cfg = ctx.cfg
    if ctx.prices.n_days < cfg.momentum_window + 1:
        raise ValueError(f"insufficient history: report agent needs {cfg.momentum_window + 1} trading days")
    panel = factor_scores(
        ctx.returns,
        momentum_window=cfg.momentum_window,
        lowvol_window=cfg.lowvol_window,
        meanrev_window=cfg.meanrev_window,
        sharpe_window=cfg.sharpe_window,
    )
    composite = panel.composite()
    # softmax already lands on the simplex; the projection is a cheap guard
    from .core import simplex_project_array

    w = simplex_project_array(softmax_weights(composite, cfg.softmax_temperature))
    recent = ctx.returns[-cfg.report_corr_window :].sum(axis=0)
    corr = rank_correlation(composite, recent)
    confidence = float(np.clip(corr, cfg.report_conf_lo, cfg.report_conf_hi))
    regime = prior.consensus_regime if prior is not None else Regime.BULL
    delta = 0.0 if prev is None else float(np.linalg.norm(w - prev))
    return AgentMessage(
        weights=Weights(w),
        confidence=confidence,
        geo_risk=0.5,
        regime=regime,
        timestamp=ctx.day_index,
        delta=delta,
    )
