"""Manager agent: health scoring, weighted aggregation, and the
convergence-gated message rounds.

Round 1 collects proposals with no prior; every later round re-queries the
agents with the previous broadcast.  The loop stops when consecutive
aggregates move less than ``eps`` in L2, when the risk agent issues a
circuit-breaker override, or at the round cap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import StrategyConfig
from .context import MarketContext
from .core import BroadcastMessage, Regime, Weights

_REGIME_PRIORITY = {Regime.STRESS: 0, Regime.BEAR: 1, Regime.BULL: 2}


@dataclass(frozen=True)
class HealthInputs:
    """Accuracy, stability, risk-adjusted profit, latency; all in [0, 1]."""

    accuracy: float
    stability: float
    risk_adj_profit: float
    latency: float

    def __post_init__(self) -> None:
        for v in (self.accuracy, self.stability, self.risk_adj_profit, self.latency):
            if not 0.0 <= v <= 1.0:
                raise ValueError("health inputs must lie in [0, 1]")


@dataclass(frozen=True)
class HealthWeights:
    alpha: float
    beta: float
    gamma: float
    delta: float

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma, self.delta) < 0:
            raise ValueError("health weights must be non-negative")
        if self.alpha + self.beta + self.gamma < self.delta:
            raise ValueError("alpha + beta + gamma must dominate delta")


def health_score(h: HealthInputs, w: HealthWeights) -> float:
    """Weighted health, clipped to [0, 1] so it can weight aggregation."""
    raw = w.alpha * h.accuracy + w.beta * h.stability + w.gamma * h.risk_adj_profit - w.delta * h.latency
    return min(1.0, max(0.0, raw))


def aggregation_coefficients(messages, healths) -> tuple:
    """Per-agent confidence-times-health coefficients and a fallback flag."""
    coef = np.array([m.confidence * h for m, h in zip(messages, healths)], dtype=np.float64)
    total = float(coef.sum())
    if total <= 0.0:
        return np.full(len(messages), 1.0 / len(messages)), True
    return coef / total, False


def aggregate(messages, healths) -> Weights:
    """Confidence-and-health-weighted mean of the proposed weight vectors."""
    if len(messages) == 0:
        raise ValueError("no messages to aggregate")
    if len(healths) != len(messages):
        raise ValueError("healths length mismatch")
    if any(h < 0 for h in healths):
        raise ValueError("healths must be non-negative")
    coef, _ = aggregation_coefficients(messages, healths)
    stacked = np.vstack([m.weights.values for m in messages])
    return Weights(coef @ stacked)


def converged(w_new: Weights, w_prev: Weights, eps: float = 0.008) -> bool:
    """Strict L2 test on consecutive aggregates."""
    if len(w_new) != len(w_prev):
        raise ValueError("weight length mismatch")
    return float(np.linalg.norm(w_new.values - w_prev.values)) < eps


def consensus_geo(messages) -> float:
    """Confidence-weighted mean geo score (plain mean when all confidences are 0)."""
    c = np.array([m.confidence for m in messages], dtype=np.float64)
    g = np.array([m.geo_risk for m in messages], dtype=np.float64)
    total = float(c.sum())
    if total <= 0.0:
        return float(g.mean())
    return float((c * g).sum() / total)


def consensus_regime(messages, healths) -> Regime:
    """Health-weighted majority vote; ties break Stress > Bear > Bull."""
    votes = {}
    for m, h in zip(messages, healths):
        votes[m.regime] = votes.get(m.regime, 0.0) + float(h)
    return min(votes, key=lambda rg: (-votes[rg], _REGIME_PRIORITY[rg]))


@dataclass(frozen=True)
class RoundRecord:
    """One coordination round: agent messages plus the manager's view."""

    round: int
    messages: dict
    agg_weights: Weights | None
    mean_geo: float
    regime: Regime
    delta: float            # round 1: distance from equal weight; else from previous aggregate
    fallback: bool
    override: bool


@dataclass(frozen=True)
class CoordinationOutcome:
    final_weights: Weights
    rounds_used: int
    converged: bool
    deltas: tuple                      # ||agg_r - agg_{r-1}|| for r >= 2
    override_fired: bool
    initial_delta: float               # ||agg_1 - equal weight|| (defensive-basket distance on override)
    mean_geo: float
    regime: Regime
    rounds: tuple = field(repr=False, default=())   # full RoundRecord log

    def __post_init__(self) -> None:
        if not 1 <= self.rounds_used:
            raise ValueError("rounds_used must be >= 1")
        expected = self.rounds_used - 1 if not self.override_fired else max(0, self.rounds_used - 2)
        if len(self.deltas) != expected:
            raise ValueError("delta log length inconsistent with rounds_used")

    def all_deltas(self) -> tuple:
        """Per-round delta curve including the round-1 reference distance."""
        return (self.initial_delta,) + tuple(self.deltas)


def coordinate(ctx: MarketContext, agents: dict, cfg: StrategyConfig) -> CoordinationOutcome:
    """Run the message rounds for one decision point.

    ``agents`` maps name -> propose(ctx, prior) -> AgentMessage, queried in
    insertion order.  Healths are read from ``ctx.healths`` (default 0.5).
    Any agent exception aborts coordination; there is no partial aggregation.
    """
    if not agents:
        raise ValueError("need at least one agent")
    names = list(agents.keys())
    healths = [float((ctx.healths or {}).get(name, cfg.health_init)) for name in names]
    n = ctx.n_assets
    reference = Weights.uniform(n)

    rounds: list = []
    deltas: list = []
    prev_agg: Weights | None = None
    broadcast: BroadcastMessage | None = None

    for r in range(1, cfg.r_max + 1):
        messages = {name: agents[name](ctx, broadcast) for name in names}
        ordered = [messages[name] for name in names]

        override_msg = next((m for m in ordered if m.override), None)
        if override_msg is not None:
            # circuit-breaker override: adopt the de-risking book, skip aggregation
            init_delta = (
                float(np.linalg.norm(override_msg.weights.values - reference.values))
                if prev_agg is None
                else deltas_initial(rounds)
            )
            rounds.append(
                RoundRecord(
                    round=r,
                    messages=messages,
                    agg_weights=None,
                    mean_geo=override_msg.geo_risk,
                    regime=Regime.STRESS,
                    delta=init_delta if r == 1 else 0.0,
                    fallback=False,
                    override=True,
                )
            )
            return CoordinationOutcome(
                final_weights=override_msg.weights,
                rounds_used=r,
                converged=False,
                deltas=tuple(deltas[: max(0, r - 2)]),
                override_fired=True,
                initial_delta=init_delta,
                mean_geo=override_msg.geo_risk,
                regime=Regime.STRESS,
                rounds=tuple(rounds),
            )

        coef, fallback = aggregation_coefficients(ordered, healths)
        agg = Weights(coef @ np.vstack([m.weights.values for m in ordered]))
        geo = consensus_geo(ordered)
        regime = consensus_regime(ordered, healths)
        if prev_agg is None:
            delta = float(np.linalg.norm(agg.values - reference.values))
        else:
            delta = float(np.linalg.norm(agg.values - prev_agg.values))
            deltas.append(delta)
        rounds.append(
            RoundRecord(
                round=r,
                messages=messages,
                agg_weights=agg,
                mean_geo=geo,
                regime=regime,
                delta=delta,
                fallback=fallback,
                override=False,
            )
        )
        if prev_agg is not None and converged(agg, prev_agg, cfg.eps):
            return CoordinationOutcome(
                final_weights=agg,
                rounds_used=r,
                converged=True,
                deltas=tuple(deltas),
                override_fired=False,
                initial_delta=rounds[0].delta,
                mean_geo=geo,
                regime=regime,
                rounds=tuple(rounds),
            )
        prev_agg = agg
        broadcast = BroadcastMessage(
            agg_weights=agg,
            mean_geo=geo,
            consensus_regime=regime,
            health=np.array(healths, dtype=np.float64),
            circuit_breaker=False,
            round=r,
        )

    last = rounds[-1]
    return CoordinationOutcome(
        final_weights=last.agg_weights,
        rounds_used=cfg.r_max,
        converged=False,
        deltas=tuple(deltas),
        override_fired=False,
        initial_delta=rounds[0].delta,
        mean_geo=last.mean_geo,
        regime=last.regime,
        rounds=tuple(rounds),
    )


def deltas_initial(rounds) -> float:
    return rounds[0].delta if rounds else 0.0
