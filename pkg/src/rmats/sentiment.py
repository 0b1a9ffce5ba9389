"""Sentiment agent: geopolitical risk scoring from market-derived proxies.

The risk score combines a defensive-minus-risk return spread, cross-sectional
volatility, and (during flagged events) a difference-in-differences estimate of
the event's impact on weak sectors.  No text or model inference is involved;
everything is derived from the price panel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .context import MarketContext
from .core import AgentMessage, BroadcastMessage, Regime, Weights


@dataclass(frozen=True)
class PanelData:
    """Unit-by-time outcome panel with treatment and period indicators."""

    outcomes: np.ndarray   # (units, periods)
    treated: np.ndarray    # bool per unit
    post: np.ndarray       # bool per period

    def __post_init__(self) -> None:
        y = np.asarray(self.outcomes, dtype=np.float64)
        d = np.asarray(self.treated, dtype=bool)
        t = np.asarray(self.post, dtype=bool)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "treated", d)
        object.__setattr__(self, "post", t)
        if y.ndim != 2 or y.shape != (d.size, t.size):
            raise ValueError("outcomes must be (units, periods)")


@dataclass(frozen=True)
class DiDResult:
    alpha: float
    beta: float
    gamma: float
    delta: float
    delta_se: float

    def __post_init__(self) -> None:
        if self.delta_se < 0.0:
            raise ValueError("delta_se must be non-negative")


def did_estimate(panel: PanelData) -> DiDResult:
    """Saturated two-group/two-period difference-in-differences estimate.

    Coefficients are the closed-form group means of the interacted OLS model;
    the interaction's standard error uses the homoskedastic OLS variance
    sigma^2 * (1/n00 + 1/n01 + 1/n10 + 1/n11).
    """
    d = panel.treated
    t = panel.post
    if not d.any() or d.all() or not t.any() or t.all():
        raise ValueError("degenerate panel: need both treated/control units and pre/post periods")
    y = panel.outcomes
    cells = {
        (0, 0): y[np.ix_(~d, ~t)].ravel(),
        (0, 1): y[np.ix_(~d, t)].ravel(),
        (1, 0): y[np.ix_(d, ~t)].ravel(),
        (1, 1): y[np.ix_(d, t)].ravel(),
    }
    means = {k: float(np.mean(v)) for k, v in cells.items()}
    alpha = means[(0, 0)]
    beta = means[(1, 0)] - means[(0, 0)]
    gamma = means[(0, 1)] - means[(0, 0)]
    delta = (means[(1, 1)] - means[(1, 0)]) - (means[(0, 1)] - means[(0, 0)])

    n_total = sum(v.size for v in cells.values())
    dof = n_total - 4
    rss = sum(float(np.sum((v - means[k]) ** 2)) for k, v in cells.items())
    if dof <= 0 or rss <= 0.0:
        delta_se = 0.0
    else:
        sigma2 = rss / dof
        delta_se = math.sqrt(sigma2 * sum(1.0 / v.size for v in cells.values()))
    return DiDResult(alpha, beta, gamma, delta, delta_se)


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def geo_risk_score(
    returns_window: np.ndarray,
    event_active: bool,
    did: DiDResult | None,
    *,
    defensive_idx,
    equity_idx,
    spread_coef: float = 1.0,
    vol_coef: float = 0.5,
    did_coef: float = 2.0,
    current_days: int = 10,
) -> float:
    """Geopolitical risk score in [0, 1].

    logistic(a * z_spread + b * z_vol + c * |delta| * 1[event]).  The current
    level of each signal is its mean over the trailing ``current_days`` rows;
    standardization statistics come from the rows before that, so raising the
    recent defensive-minus-risk spread always raises the score.
    """
    r = np.asarray(returns_window, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] < 10:
        raise ValueError("insufficient history: need at least 10 trading days")
    d_idx = list(defensive_idx)
    e_idx = list(equity_idx)
    spread = (r[:, d_idx].mean(axis=1) if d_idx else np.zeros(r.shape[0])) - (
        r[:, e_idx].mean(axis=1) if e_idx else np.zeros(r.shape[0])
    )
    cs_vol = np.std(r, axis=1)

    def _z(series: np.ndarray) -> float:
        cur = float(series[-current_days:].mean())
        base = series[:-current_days]
        if base.size < 2:
            return 0.0
        sd = float(np.std(base))
        if sd <= 1e-12:
            return 0.0
        return (cur - float(base.mean())) / sd

    x = spread_coef * _z(spread) + vol_coef * _z(cs_vol)
    if event_active and did is not None:
        x += did_coef * abs(did.delta)
    return _logistic(x)


def build_event_panel(ctx: MarketContext) -> PanelData | None:
    """2-period panel of cumulative returns around the active event's onset.

    Treated units are assets whose trailing return into the onset sits below
    the cross-sectional median; pre/post outcomes are cumulative log returns
    over matched-length windows.  Returns None when no event covers today or
    history around the onset is too short.
    """
    cfg = ctx.cfg
    today = ctx.date
    active = [ev for ev in ctx.events if ev.contains(today)]
    if not active or ctx.returns is None:
        return None
    onset_date = min(ev.start for ev in active)
    dates = ctx.prices.dates
    onset = None
    for i, d in enumerate(dates):
        if d >= onset_date:
            onset = i
            break
    if onset is None:
        onset = len(dates) - 1
    ret_onset = onset - 1  # return-row index of the onset day
    pre_n = cfg.did_pre_days
    if ret_onset < max(pre_n, cfg.did_lookback) or ret_onset >= ctx.returns.shape[0]:
        return None
    post = ctx.returns[ret_onset : min(ret_onset + pre_n, ctx.returns.shape[0])]
    pre = ctx.returns[ret_onset - pre_n : ret_onset]
    if post.shape[0] < 1 or pre.shape[0] < 1:
        return None
    trailing = ctx.returns[ret_onset - cfg.did_lookback : ret_onset].sum(axis=0)
    treated = trailing < np.median(trailing)
    if not treated.any() or treated.all():
        return None
    outcomes = np.column_stack([pre.sum(axis=0), post.sum(axis=0)])
    return PanelData(outcomes=outcomes, treated=treated, post=np.array([False, True]))


def defensive_blend(g: float, ctx: MarketContext) -> np.ndarray:
    """Convex blend between equal weight and the defensive basket."""
    n = ctx.n_assets
    neutral = np.full(n, 1.0 / n)
    defensive = ctx.classes.defensive_weights()
    return (1.0 - g) * neutral + g * defensive


def sentiment_propose(
    ctx: MarketContext,
    prior: BroadcastMessage | None = None,
    prev: np.ndarray | None = None,
) -> AgentMessage:
    """Defensively tilted proposal driven by the geo risk score."""
    cfg = ctx.cfg
    if ctx.prices.n_days < 60:
        raise ValueError("insufficient history: sentiment agent needs 60 trading days")
    window = ctx.returns[-cfg.grs_window :]
    did = build_event_panel(ctx)
    did_res = did_estimate(did) if did is not None else None
    g = geo_risk_score(
        window,
        ctx.event_active,
        did_res,
        defensive_idx=ctx.classes.defensive,
        equity_idx=ctx.classes.equity,
        spread_coef=cfg.grs_spread_coef,
        vol_coef=cfg.grs_vol_coef,
        did_coef=cfg.grs_did_coef,
        current_days=cfg.grs_current_days,
    )
    w = defensive_blend(g, ctx)
    if g > cfg.sent_stress_g:
        regime = Regime.STRESS
    elif g > cfg.sent_bear_g:
        regime = Regime.BEAR
    else:
        regime = Regime.BULL
    confidence = cfg.sent_conf_floor + (1.0 - cfg.sent_conf_floor) * abs(2.0 * g - 1.0)
    delta = 0.0 if prev is None else float(np.linalg.norm(w - prev))
    return AgentMessage(
        weights=Weights(w),
        confidence=confidence,
        geo_risk=g,
        regime=regime,
        timestamp=ctx.day_index,
        delta=delta,
    )
