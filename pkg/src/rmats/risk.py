"""Risk agent: tail-risk estimation, stress testing, and the circuit breaker.

Covariance tracking uses an exponentially weighted second-moment recursion on
demeaned returns; value-at-risk and its conditional tail mean come from the
empirical distribution (worst-k convention, no parametric assumptions).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import optimizer
from .context import MarketContext
from .core import AgentMessage, BroadcastMessage, Regime, Weights


@dataclass(frozen=True)
class CovMatrix:
    """Symmetric PSD covariance of daily returns, ridge-regularized."""

    values: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance must be square")
        if float(np.abs(m - m.T).max()) > 1e-12:
            raise ValueError("covariance must be symmetric")
        if float(np.linalg.eigvalsh(m).min()) < -1e-10:
            raise ValueError("covariance must be positive semi-definite")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


@dataclass(frozen=True)
class RiskThresholds:
    """Drawdown / geo-risk / annualized-volatility breaker levels."""

    theta_dd: float
    theta_geo: float
    theta_vol: float

    def __post_init__(self) -> None:
        for v in (self.theta_dd, self.theta_geo, self.theta_vol):
            if not 0.0 < v <= 1.0:
                raise ValueError("thresholds must lie in (0, 1]")


@dataclass(frozen=True)
class TailRisk:
    var: float
    cvar: float
    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.cvar < self.var - 1e-12:
            raise ValueError("cvar must dominate var")


def ewma_covariance(returns: np.ndarray, decay: float, ridge: float = 1e-10) -> CovMatrix:
    """Exponentially weighted covariance, seeded from the first 30 rows.

    Sigma_t = decay * Sigma_{t-1} + (1 - decay) * r_t r_t' on demeaned returns;
    the closed-form weighted sum below reproduces that recursion.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    T, n = r.shape
    if T < 30:
        raise ValueError("insufficient history: need at least 30 return rows")
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must lie in (0, 1)")
    centered = r - r.mean(axis=0)
    init = np.cov(centered[:30], rowvar=False, ddof=1).reshape(n, n)
    tail = centered[30:]
    m = tail.shape[0]
    if m == 0:
        sigma = init
    else:
        # Sigma_T = decay^m * init + (1-decay) * sum_t decay^(m-1-t) r_t r_t'
        wts = (1.0 - decay) * decay ** np.arange(m - 1, -1, -1, dtype=np.float64)
        sigma = decay**m * init + np.einsum("t,ti,tj->ij", wts, tail, tail)
    sigma = 0.5 * (sigma + sigma.T) + ridge * np.eye(n)
    return CovMatrix(sigma)


def historical_cvar(pnl: np.ndarray, alpha: float) -> TailRisk:
    """Empirical tail risk: the worst floor((1-alpha)*T) returns define the tail.

    VaR is the negated k-th worst return (the lower-interpolation quantile);
    CVaR is the negated mean of the k worst.
    """
    x = np.asarray(pnl, dtype=np.float64).ravel()
    if x.size < 50:
        raise ValueError("insufficient history: need at least 50 observations")
    if not 0.5 < alpha < 1.0:
        raise ValueError("alpha must lie in (0.5, 1)")
    k = max(1, int(math.floor((1.0 - alpha) * x.size)))
    tail = np.sort(x)[:k]
    var = -float(tail[-1])
    cvar = -float(tail.mean())
    return TailRisk(var=var, cvar=cvar, alpha=alpha)


def circuit_breaker(dd: float, grs: float, vol: float, th: RiskThresholds) -> bool:
    """Strict three-way disjunction; boundary values do not trip it."""
    if dd < 0 or grs < 0 or vol < 0:
        raise ValueError("breaker inputs must be non-negative")
    return dd > th.theta_dd or grs > th.theta_geo or vol > th.theta_vol


def stress_test(w: Weights, scenarios) -> list:
    """Per-scenario portfolio loss fractions: loss = -w . shock."""
    losses = []
    wv = w.values
    for shock in scenarios:
        s = np.asarray(shock, dtype=np.float64).ravel()
        if s.size != wv.size:
            raise ValueError(f"shock length {s.size} != universe size {wv.size}")
        losses.append(-float(wv @ s))
    return losses


def effective_thresholds(cfg, geo_trailing: float | None) -> RiskThresholds:
    """Geo threshold tightens as the trailing consensus geo score rises."""
    theta_geo = cfg.theta_geo
    if geo_trailing is not None:
        theta_geo = cfg.theta_geo * (1.0 - cfg.geo_adapt_coef * min(max(geo_trailing, 0.0), 1.0))
    theta_geo = min(max(theta_geo, 1e-9), 1.0)
    return RiskThresholds(theta_dd=cfg.theta_dd, theta_geo=theta_geo, theta_vol=cfg.theta_vol)


def budget_reference(ctx: MarketContext) -> float:
    """Aggregate geo level that sets this rebalance's exposure budget.

    Uses the trailing consensus geo when available, else today's market geo
    score; fixed for the whole rebalance so the budget does not drift while
    the agents iterate.
    """
    if ctx.geo_trailing is not None:
        return ctx.geo_trailing
    if ctx.geo_score is not None:
        return ctx.geo_score
    return 0.5


def sector_caps_for(classes, cap: float) -> tuple:
    """Per-class caps, scaled up minimally when they cannot cover the simplex."""
    groups = classes.sector_groups()
    total = cap * len(groups)
    eff = cap if total >= 1.0 else min(1.0, cap / total)
    return tuple((grp, eff) for grp in groups)


def build_constraints(ctx: MarketContext, grs: float, risk_aversion: float | None = None) -> optimizer.OptConstraints:
    """Sector caps plus the dynamically tightened geo budget."""
    cfg = ctx.cfg
    gamma = cfg.gamma0 * (1.0 - 0.5 * min(max(grs, 0.0), 1.0))
    return optimizer.OptConstraints(
        risk_aversion=risk_aversion if risk_aversion is not None else cfg.risk_aversion,
        sector_caps=sector_caps_for(ctx.classes, cfg.sector_cap),
        grs_vector=ctx.classes.geo_sensitivity(cfg),
        gamma_geo=gamma,
    )


def shrink_for_allocation(sigma: CovMatrix, shrink: float) -> np.ndarray:
    """Shrink off-diagonals toward zero before optimizing weights.

    A short-memory covariance estimate carries large correlation noise; used
    raw, minimum variance amplifies it into unstable corner books.  Shrinkage
    only affects allocation; risk measurement uses the unshrunk matrix.
    """
    s = min(max(shrink, 0.0), 1.0)
    d = np.diag(np.diag(sigma.values))
    return (1.0 - s) * sigma.values + s * d


def min_variance_weights(ctx: MarketContext, sigma: CovMatrix, grs: float) -> Weights:
    """Minimum-variance portfolio under the shared constraint set (mu = 0)."""
    cfg = ctx.cfg
    cons = build_constraints(ctx, grs)
    return optimizer.optimize(
        np.zeros(sigma.n),
        shrink_for_allocation(sigma, cfg.cov_shrink),
        cons,
        step=cfg.opt_step,
        iters=cfg.opt_iters,
        cycles=cfg.proj_cycles,
        tol=cfg.proj_tol,
    )


def risk_propose(
    ctx: MarketContext,
    prior: BroadcastMessage | None = None,
    prev: np.ndarray | None = None,
    cached_minvar: Weights | None = None,
) -> AgentMessage:
    """De-risking proposal: circuit-breaker override or a minimum-variance book.

    ``cached_minvar`` lets the caller reuse the rebalance's minimum-variance
    solution across rounds when it still satisfies the current geo budget.
    """
    cfg = ctx.cfg
    grs = prior.mean_geo if prior is not None else (ctx.geo_score if ctx.geo_score is not None else 0.5)
    port = ctx.portfolio
    dd = port.drawdown if port is not None else 0.0
    vol = port.ann_vol(cfg.vol_window) if port is not None else 0.0
    th = effective_thresholds(cfg, ctx.geo_trailing)

    if circuit_breaker(dd, grs, vol, th):
        w = ctx.classes.defensive_weights()
        delta = 0.0 if prev is None else float(np.linalg.norm(w - prev))
        return AgentMessage(
            weights=Weights(w),
            confidence=1.0,
            geo_risk=grs,
            regime=Regime.STRESS,
            timestamp=ctx.day_index,
            delta=delta,
            override=True,
        )

    returns = ctx.returns
    if returns is None or returns.shape[0] < 50:
        raise ValueError("insufficient history for risk estimation")
    sigma = ewma_covariance(returns[-cfg.hmm_window :], cfg.ewma_decay)
    # the exposure budget is a per-rebalance quantity, so the book from an
    # earlier round stays valid and the cache is exact
    budget_grs = budget_reference(ctx)
    cons = build_constraints(ctx, budget_grs)
    w_opt = None
    if cached_minvar is not None:
        cached = cached_minvar.values
        if float(cons.grs_vector @ cached) <= cons.gamma_geo + cfg.proj_tol:
            w_opt = cached_minvar
    if w_opt is None:
        w_opt = min_variance_weights(ctx, sigma, budget_grs)

    pnl = returns[-cfg.cvar_window :] @ w_opt.values
    tail = historical_cvar(pnl, cfg.cvar_alpha)
    confidence = 1.0 - min(1.0, tail.cvar / cfg.cvar_budget) if tail.cvar > 0 else 1.0
    delta = 0.0 if prev is None else float(np.linalg.norm(w_opt.values - prev))
    return AgentMessage(
        weights=w_opt,
        confidence=confidence,
        geo_risk=grs,
        regime=prior.consensus_regime if prior is not None else Regime.BULL,
        timestamp=ctx.day_index,
        delta=delta,
    )
