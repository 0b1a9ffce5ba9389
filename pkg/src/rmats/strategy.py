"""Strategy wiring: the coordinated multi-agent strategy and the baselines.

The coordinated strategy owns all cross-rebalance state: per-agent proposal
history for health bookkeeping, the analysis agent's fitted model and fusion
state, and the trailing consensus geo score that tightens the breaker and the
geo exposure budget.
"""
from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import analysis, coordination, optimizer, report, risk, sentiment
from .config import AGENT_NAMES, StrategyConfig
from .context import MarketContext
from .coordination import HealthInputs, health_score
from .core import Weights


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def estimate_mu(ctx: MarketContext) -> np.ndarray:
    """Trailing mean daily log return, shrunk toward zero."""
    cfg = ctx.cfg
    window = ctx.returns[-cfg.mu_window :]
    return (1.0 - cfg.mu_shrink) * window.mean(axis=0)


class _AgentRoundState:
    """Tracks an agent's previous-round proposal for the delta field."""

    __slots__ = ("prev",)

    def __init__(self) -> None:
        self.prev = None


class RmatsStrategy:
    """Recursive multi-agent strategy with convergence-gated coordination.

    ``variant`` selects the ablation: 'full', 'no_recursion' (single round),
    'no_sentiment' / 'no_risk' / 'no_analysis' (agent removed), or 'no_did'
    (event causal term zeroed in the geo score).
    """

    def __init__(self, cfg: StrategyConfig, variant: str = "full") -> None:
        if variant == "no_recursion":
            cfg = replace(cfg, r_max=1)
        elif variant == "no_did":
            cfg = replace(cfg, grs_did_coef=0.0)
        self.cfg = cfg
        self.variant = variant
        self.agent_names = [
            n
            for n in AGENT_NAMES
            if not (variant == "no_sentiment" and n == "sentiment")
            and not (variant == "no_risk" and n == "risk")
            and not (variant == "no_analysis" and n == "analysis")
        ]
        self.last_outcome = None
        self._kalman = None
        self._history: dict = {name: [] for name in self.agent_names}
        self._geo_history: list = []
        self._last_rounds: int | None = None
        self._rebalance_count = 0

    # -- health bookkeeping -------------------------------------------------

    def _agent_pnl(self, ctx: MarketContext, name: str) -> np.ndarray:
        """Daily simple returns of the agent's historically held proposal."""
        hist = self._history[name]
        if not hist:
            return np.empty(0)
        days = np.array([d for d, _ in hist])
        window = self.cfg.health_window
        t = ctx.day_index
        rets = np.expm1(ctx.returns)
        lo = max(int(days[0]) + 1, t - window + 1)
        pnl = []
        for d in range(lo, t + 1):
            k = int(np.searchsorted(days, d - 1, side="right")) - 1
            if k < 0:
                continue
            pnl.append(float(hist[k][1] @ rets[d - 1]))
        return np.asarray(pnl)

    def _healths(self, ctx: MarketContext) -> dict:
        cfg = self.cfg
        if self._rebalance_count == 0:
            return {name: cfg.health_init for name in self.agent_names}
        hw = cfg.health_weights()
        out = {}
        for name in self.agent_names:
            pnl = self._agent_pnl(ctx, name)
            if pnl.size >= 2:
                accuracy = float(np.mean(pnl > 0.0))
                sd = float(np.std(pnl, ddof=1))
                sharpe = 0.0 if sd <= 1e-15 else float(pnl.mean() / sd * math.sqrt(252.0))
                profit = _logistic(sharpe)
            else:
                accuracy, profit = 0.5, 0.5
            hist = self._history[name]
            if len(hist) >= 2:
                move = float(np.linalg.norm(hist[-1][1] - hist[-2][1]))
                stability = 1.0 - min(1.0, move / math.sqrt(2.0))
            else:
                stability = 1.0
            latency = (self._last_rounds or 1) / cfg.r_max
            out[name] = health_score(
                HealthInputs(accuracy=accuracy, stability=stability, risk_adj_profit=profit, latency=latency), hw
            )
        return out

    # -- agent wrappers -----------------------------------------------------

    def _build_agents(self, ctx: MarketContext) -> dict:
        cfg = self.cfg
        states = {name: _AgentRoundState() for name in self.agent_names}
        agents = {}

        if "sentiment" in self.agent_names:

            def sentiment_agent(c, prior, _s=states["sentiment"]):
                msg = sentiment.sentiment_propose(c, prior, prev=_s.prev)
                _s.prev = msg.weights.values
                return msg

            agents["sentiment"] = sentiment_agent

        if "report" in self.agent_names:

            def report_agent(c, prior, _s=states["report"]):
                msg = report.report_propose(c, prior, prev=_s.prev)
                _s.prev = msg.weights.values
                return msg

            agents["report"] = report_agent

        if "analysis" in self.agent_names:
            model_obs = analysis.fit_context_model(ctx)
            if self._kalman is None:
                self._kalman = analysis.default_kalman_state(cfg)

            def analysis_agent(c, prior, _s=states["analysis"], _m=model_obs):
                msg, self._kalman = analysis.propose_with_state(c, prior, _m, self._kalman, prev=_s.prev)
                _s.prev = msg.weights.values
                return msg

            agents["analysis"] = analysis_agent

        if "risk" in self.agent_names:
            cache = {"minvar": None}

            def risk_agent(c, prior, _s=states["risk"], _cache=cache):
                msg = risk.risk_propose(c, prior, prev=_s.prev, cached_minvar=_cache["minvar"])
                if not msg.override:
                    _cache["minvar"] = msg.weights
                _s.prev = msg.weights.values
                return msg

            agents["risk"] = risk_agent

        return agents

    # -- strategy interface ---------------------------------------------------

    def __call__(self, ctx: MarketContext) -> Weights:
        cfg = self.cfg
        healths = self._healths(ctx)

        window = ctx.returns[-cfg.grs_window :]
        panel = sentiment.build_event_panel(ctx)
        did_res = sentiment.did_estimate(panel) if panel is not None else None
        geo_score = sentiment.geo_risk_score(
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
        geo_trailing = float(np.mean(self._geo_history[-3:])) if self._geo_history else None
        enriched = replace(ctx, cfg=cfg, healths=healths, geo_score=geo_score, geo_trailing=geo_trailing)

        agents = self._build_agents(enriched)
        outcome = coordination.coordinate(enriched, agents, cfg)
        self.last_outcome = outcome

        if outcome.override_fired:
            final = outcome.final_weights
        else:
            cons = risk.build_constraints(enriched, risk.budget_reference(enriched))
            projected = optimizer.project_feasible(
                outcome.final_weights.values, cons, cycles=cfg.proj_cycles, tol=cfg.proj_tol
            )
            projected = np.maximum(projected, 0.0)
            final = Weights(projected / projected.sum())

        last_messages = outcome.rounds[-1].messages
        for name in self.agent_names:
            if name in last_messages:
                self._history[name].append((ctx.day_index, last_messages[name].weights.values.copy()))
        self._geo_history.append(outcome.mean_geo)
        self._last_rounds = outcome.rounds_used
        self._rebalance_count += 1
        return final


# -- baselines ----------------------------------------------------------------


def _mvo_strategy(cfg: StrategyConfig):
    def strat(ctx: MarketContext) -> Weights:
        mu = estimate_mu(ctx)
        sigma = risk.ewma_covariance(ctx.returns[-cfg.hmm_window :], cfg.ewma_decay)
        caps = risk.sector_caps_for(ctx.classes, cfg.sector_cap)
        cons = optimizer.OptConstraints(risk_aversion=cfg.risk_aversion, sector_caps=caps)
        return optimizer.optimize(
            mu,
            risk.shrink_for_allocation(sigma, cfg.cov_shrink),
            cons,
            step=cfg.opt_step,
            iters=cfg.opt_iters,
            cycles=cfg.proj_cycles,
            tol=cfg.proj_tol,
        )

    return strat


def make_baseline(name: str, cfg: StrategyConfig):
    if name == "equal_weight":
        return lambda ctx: Weights.uniform(ctx.n_assets)
    if name == "mvo":
        return _mvo_strategy(cfg)
    if name == "multifactor":
        return lambda ctx: report.report_propose(ctx).weights
    if name == "sentiment_proxy":
        return lambda ctx: sentiment.sentiment_propose(ctx).weights
    raise ValueError(f"unknown baseline '{name}'")


def make_rmats_variant(variant: str, cfg: StrategyConfig) -> RmatsStrategy:
    return RmatsStrategy(cfg, variant=variant)


def make_strategy(name: str, cfg: StrategyConfig):
    """CLI-facing factory: 'rmats' or a baseline name."""
    if name == "rmats":
        return RmatsStrategy(cfg)
    return make_baseline(name, cfg)
