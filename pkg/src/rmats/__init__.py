"""Recursive multi-agent portfolio engine.

Four specialized signal agents (sentiment, report, analysis, risk) coordinated
by a manager through convergence-gated message rounds, plus a deterministic
backtest harness with event metrics, ablations, and convergence statistics.
"""

from .config import AssetClasses, ConfigError, StrategyConfig, classify_universe, load_config
from .context import EventWindow, MarketContext, PortfolioState, build_context
from .core import (
    AgentMessage,
    BroadcastMessage,
    PriceTable,
    Regime,
    Weights,
    log_returns,
    project_to_simplex,
    validate_message,
)

__version__ = "0.1.0"

__all__ = [
    "AgentMessage",
    "AssetClasses",
    "BroadcastMessage",
    "ConfigError",
    "EventWindow",
    "MarketContext",
    "PortfolioState",
    "PriceTable",
    "Regime",
    "StrategyConfig",
    "Weights",
    "build_context",
    "classify_universe",
    "load_config",
    "log_returns",
    "project_to_simplex",
    "validate_message",
    "__version__",
]
