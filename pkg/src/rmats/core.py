"""Shared domain types: portfolio weights, regimes, agent messages, price tables.

Everything here is immutable after construction and safe to share across
threads; all operations are pure functions of their inputs.
"""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

WEIGHT_SUM_TOL = 1e-9


class Regime(IntEnum):
    """Latent market state."""

    BULL = 0
    BEAR = 1
    STRESS = 2


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Weights:
    """Long-only portfolio weights on the probability simplex."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = _freeze(np.atleast_1d(np.asarray(self.values, dtype=np.float64)))
        object.__setattr__(self, "values", v)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("weights must be finite")
        if np.any(v < 0.0):
            raise ValueError("weights must be non-negative")
        if abs(float(v.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to 1")

    def __len__(self) -> int:
        return int(self.values.size)

    @staticmethod
    def uniform(n: int) -> "Weights":
        return Weights(np.full(n, 1.0 / n))

    @staticmethod
    def raw(values) -> "Weights":
        """Skip invariant checks; for carrying untrusted data into validation."""
        w = object.__new__(Weights)
        object.__setattr__(w, "values", _freeze(np.atleast_1d(np.asarray(values, dtype=np.float64))))
        return w


@dataclass(frozen=True)
class AgentMessage:
    """One agent's per-round proposal sent to the manager.

    ``delta`` is the L2 distance to the same agent's previous-round proposal
    (0 on the first round).  ``override`` marks an emergency de-risking
    message that short-circuits aggregation; only the risk agent sets it.
    """

    weights: Weights
    confidence: float
    geo_risk: float
    regime: Regime
    timestamp: int
    delta: float
    override: bool = False


@dataclass(frozen=True)
class BroadcastMessage:
    """Manager's per-round consensus state, broadcast to all agents."""

    agg_weights: Weights
    mean_geo: float
    consensus_regime: Regime
    health: np.ndarray
    circuit_breaker: bool
    round: int

    def __post_init__(self) -> None:
        h = _freeze(np.atleast_1d(np.asarray(self.health, dtype=np.float64)))
        object.__setattr__(self, "health", h)
        if np.any(h < 0.0) or np.any(h > 1.0):
            raise ValueError("health entries must lie in [0, 1]")
        if self.round < 0:
            raise ValueError("round must be >= 0")


@dataclass(frozen=True)
class PriceTable:
    """Date-aligned adjusted-close matrix; rows = dates, columns = tickers."""

    dates: tuple
    tickers: tuple
    prices: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        p = _freeze(np.asarray(self.prices, dtype=np.float64))
        object.__setattr__(self, "prices", p)
        if p.ndim != 2 or p.shape != (len(self.dates), len(self.tickers)):
            raise ValueError("price matrix shape must be (dates, tickers)")
        if len(self.tickers) == 0 or len(self.dates) == 0:
            raise ValueError("price table must be non-empty")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise ValueError(f"dates must be strictly ascending (at {b})")
        if not np.all(np.isfinite(p)) or np.any(p <= 0.0):
            raise ValueError("all prices must be positive and finite")

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    @property
    def n_days(self) -> int:
        return len(self.dates)

    def truncate(self, n_days: int) -> "PriceTable":
        """First ``n_days`` rows as a new table."""
        if not 1 <= n_days <= self.n_days:
            raise ValueError("truncation length out of range")
        return PriceTable(self.dates[:n_days], self.tickers, self.prices[:n_days])

    def index_of(self, day: dt.date) -> int:
        """Index of the last trading day <= ``day``."""
        lo = 0
        for i, d in enumerate(self.dates):
            if d <= day:
                lo = i
            else:
                break
        if self.dates[0] > day:
            raise ValueError(f"date {day} precedes price history")
        return lo


def validate_message(m: AgentMessage, n: int) -> list:
    """Check an AgentMessage against the schema; violations are data, not faults.

    Returns an empty list when the message is valid for a universe of size
    ``n``, otherwise a list of human-readable violation strings.
    """
    violations = []
    w = m.weights.values
    if len(m.weights) != n:
        violations.append(f"weights length {len(m.weights)} != universe size {n}")
    if np.any(w < 0.0):
        violations.append("weights contain negative entries")
    if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOL:
        violations.append("weights not normalized")
    if not 0.0 <= m.confidence <= 1.0:
        violations.append("confidence out of range")
    if not 0.0 <= m.geo_risk <= 1.0:
        violations.append("geo_risk out of range")
    if m.regime not in (Regime.BULL, Regime.BEAR, Regime.STRESS):
        violations.append("regime out of range")
    if m.delta < 0.0:
        violations.append("delta must be non-negative")
    if m.timestamp < 0:
        violations.append("timestamp must be non-negative")
    return violations


def simplex_project_array(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty input")
    if not np.all(np.isfinite(v)):
        raise ValueError("input must be finite")
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u * idx > (css - 1.0))[0][-1]
    theta = (css[rho] - 1.0) / float(rho + 1)
    return np.maximum(v - theta, 0.0)


def project_to_simplex(v: Sequence[float]) -> Weights:
    """Project an arbitrary real vector onto the simplex; idempotent."""
    return Weights(simplex_project_array(np.asarray(v, dtype=np.float64)))


def log_returns(p) -> np.ndarray:
    """Per-day log returns; row t holds ln(p_t / p_{t-1}).

    Accepts a PriceTable or a raw (T, n) price array with T >= 2.
    """
    prices = p.prices if isinstance(p, PriceTable) else np.asarray(p, dtype=np.float64)
    if prices.ndim == 1:
        prices = prices[:, None]
    if prices.shape[0] < 2:
        raise ValueError("need at least 2 rows of prices")
    if np.any(prices <= 0.0) or not np.all(np.isfinite(prices)):
        raise ValueError("invalid price")
    return np.diff(np.log(prices), axis=0)
