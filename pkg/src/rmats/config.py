"""Strategy configuration: every tunable default, a flat key=value file parser,
and the asset-class bookkeeping shared by the agents.

The file format is intentionally primitive: one ``key = value`` pair per line,
``#`` starts a comment, no sections, no nesting.  Unknown keys are rejected and
every value is range-checked so a config typo fails fast instead of silently
changing a run.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Sequence

import numpy as np

US_EQUITY_TICKERS = ("XLK", "XLE", "XLF", "XLV", "XLI", "XLP", "XLY", "XLU", "XLB", "XLRE", "SPY")
INTL_EQUITY_TICKERS = ("EWJ", "EWG", "EWU", "FXI", "EEM")
FIXED_INCOME_TICKERS = ("TLT", "IEF", "LQD", "EMB")
COMMODITY_TICKERS = ("GLD", "SLV", "USO", "DBC")
GOLD_TICKERS = ("GLD",)

CLASS_NAMES = ("us_equity", "intl_equity", "fixed_income", "commodity")
# Prefixes used by the synthetic generator so fixtures classify without config edits.
_CLASS_PREFIXES = {"EQ": "us_equity", "IN": "intl_equity", "FI": "fixed_income", "CO": "commodity"}

AGENT_NAMES = ("sentiment", "report", "analysis", "risk")


class ConfigError(ValueError):
    """Raised for unknown keys or out-of-range values in a config file."""


@dataclass(frozen=True)
class StrategyConfig:
    """Flat bag of every pinned tunable; defaults reproduce the reference runs."""

    # coordination protocol
    eps: float = 0.008
    r_max: int = 8
    hw_accuracy: float = 0.4
    hw_stability: float = 0.2
    hw_profit: float = 0.3
    hw_latency: float = 0.1
    health_init: float = 0.5
    health_window: int = 63

    # sentiment agent / geopolitical risk score
    grs_spread_coef: float = 1.0
    grs_vol_coef: float = 0.5
    grs_did_coef: float = 2.0
    grs_window: int = 262
    grs_current_days: int = 10
    did_pre_days: int = 10
    did_lookback: int = 20
    sent_conf_floor: float = 0.3
    sent_stress_g: float = 0.7
    sent_bear_g: float = 0.5

    # analysis agent (regime model + signal fusion)
    hmm_states: int = 3
    hmm_max_iter: int = 200
    hmm_tol: float = 1e-6
    hmm_window: int = 504
    hmm_var_floor: float = 1e-8
    obs_vol_window: int = 20
    blend_prior: float = 0.5
    kalman_q: float = 1e-4
    kalman_r: float = 0.01
    # per-class fractions (us_equity, intl_equity, fixed_income, commodity);
    # bull holds the largest equity block, stress concentrates on the defensive classes
    template_bull: tuple = (0.40, 0.11, 0.36, 0.13)
    template_bear: tuple = (0.30, 0.08, 0.46, 0.16)
    template_stress: tuple = (0.20, 0.06, 0.52, 0.22)

    # report agent (factor portfolio)
    momentum_window: int = 126
    lowvol_window: int = 63
    meanrev_window: int = 5
    sharpe_window: int = 63
    softmax_temperature: float = 2.0
    report_conf_lo: float = 0.2
    report_conf_hi: float = 0.9
    report_corr_window: int = 21

    # risk agent
    ewma_decay: float = 0.94
    cov_shrink: float = 1.0       # off-diagonal shrinkage for allocation only
    cvar_alpha: float = 0.95
    cvar_budget: float = 0.03
    cvar_window: int = 252
    theta_dd: float = 0.08
    theta_geo: float = 0.75
    theta_vol: float = 0.25
    geo_adapt_coef: float = 0.25
    vol_window: int = 21

    # optimizer
    reward_lambda1: float = 0.8
    reward_lambda2: float = 1.5
    reward_theta: float = 0.05
    risk_aversion: float = 5.0
    opt_step: float = 0.01
    opt_iters: int = 500
    proj_cycles: int = 100
    proj_tol: float = 1e-9
    sector_cap: float = 0.5
    gamma0: float = 0.6
    geo_sens_us_equity: float = 0.75
    geo_sens_intl_equity: float = 1.0
    geo_sens_fixed_income: float = 0.1
    geo_sens_commodity: float = 0.4
    mu_window: int = 126
    mu_shrink: float = 0.5

    # backtest harness
    cost_bps: float = 10.0
    warmup_days: int = 504
    risk_free: float = 0.0
    initial_equity: float = 1.0
    seed: int = 7

    # universe class membership (comma-separated in config files)
    us_equity_tickers: tuple = US_EQUITY_TICKERS
    intl_equity_tickers: tuple = INTL_EQUITY_TICKERS
    fixed_income_tickers: tuple = FIXED_INCOME_TICKERS
    commodity_tickers: tuple = COMMODITY_TICKERS
    gold_tickers: tuple = GOLD_TICKERS

    def health_weights(self) -> "HealthWeights":
        from .coordination import HealthWeights

        return HealthWeights(self.hw_accuracy, self.hw_stability, self.hw_profit, self.hw_latency)

    def template(self, regime) -> tuple:
        from .core import Regime

        return {
            Regime.BULL: self.template_bull,
            Regime.BEAR: self.template_bear,
            Regime.STRESS: self.template_stress,
        }[Regime(regime)]


_TUPLE_STR_KEYS = {
    "us_equity_tickers",
    "intl_equity_tickers",
    "fixed_income_tickers",
    "commodity_tickers",
    "gold_tickers",
}
_TUPLE_FLOAT_KEYS = {"template_bull", "template_bear", "template_stress"}

_RANGE_CHECKS = {
    "eps": lambda v: v > 0,
    "r_max": lambda v: v >= 1,
    "hw_accuracy": lambda v: v >= 0,
    "hw_stability": lambda v: v >= 0,
    "hw_profit": lambda v: v >= 0,
    "hw_latency": lambda v: v >= 0,
    "health_init": lambda v: 0 <= v <= 1,
    "grs_did_coef": lambda v: v >= 0,
    "grs_window": lambda v: v >= 10,
    "grs_current_days": lambda v: v >= 1,
    "sent_conf_floor": lambda v: 0 <= v <= 1,
    "sent_stress_g": lambda v: 0 < v <= 1,
    "sent_bear_g": lambda v: 0 < v <= 1,
    "hmm_states": lambda v: v >= 1,
    "hmm_max_iter": lambda v: v >= 1,
    "hmm_tol": lambda v: v > 0,
    "hmm_window": lambda v: v >= 50,
    "hmm_var_floor": lambda v: v > 0,
    "blend_prior": lambda v: 0 <= v <= 1,
    "kalman_q": lambda v: v > 0,
    "kalman_r": lambda v: v > 0,
    "softmax_temperature": lambda v: v > 0,
    "ewma_decay": lambda v: 0 < v < 1,
    "cov_shrink": lambda v: 0 <= v <= 1,
    "cvar_alpha": lambda v: 0.5 < v < 1,
    "cvar_budget": lambda v: v > 0,
    "theta_dd": lambda v: 0 < v <= 1,
    "theta_geo": lambda v: 0 < v <= 1,
    "theta_vol": lambda v: 0 < v <= 1,
    "geo_adapt_coef": lambda v: 0 <= v < 1,
    "reward_lambda1": lambda v: v >= 0,
    "reward_lambda2": lambda v: v >= 0,
    "reward_theta": lambda v: 0 < v < 1,
    "risk_aversion": lambda v: v > 0,
    "opt_step": lambda v: v > 0,
    "opt_iters": lambda v: v >= 1,
    "proj_cycles": lambda v: v >= 1,
    "proj_tol": lambda v: v > 0,
    "sector_cap": lambda v: 0 < v <= 1,
    "gamma0": lambda v: v > 0,
    "mu_shrink": lambda v: 0 <= v <= 1,
    "cost_bps": lambda v: v >= 0,
    "warmup_days": lambda v: v >= 50,
    "initial_equity": lambda v: v > 0,
}


def _parse_value(key: str, raw: str, kind: type):
    raw = raw.strip()
    if key in _TUPLE_STR_KEYS:
        return tuple(t.strip().upper() for t in raw.split(",") if t.strip())
    if key in _TUPLE_FLOAT_KEYS:
        parts = tuple(float(t) for t in raw.split(",") if t.strip())
        if len(parts) != 4:
            raise ConfigError(f"key '{key}' needs 4 class fractions")
        if abs(sum(parts) - 1.0) > 1e-9 or any(p < 0 for p in parts):
            raise ConfigError(f"key '{key}' fractions must be non-negative and sum to 1")
        return parts
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': cannot parse '{raw}'") from exc
    raise ConfigError(f"key '{key}' has unsupported type")


def validate_config(cfg: StrategyConfig) -> None:
    for key, check in _RANGE_CHECKS.items():
        if not check(getattr(cfg, key)):
            raise ConfigError(f"key '{key}' out of range: {getattr(cfg, key)!r}")
    for key in _TUPLE_FLOAT_KEYS:
        parts = getattr(cfg, key)
        if len(parts) != 4 or abs(sum(parts) - 1.0) > 1e-9 or any(p < 0 for p in parts):
            raise ConfigError(f"key '{key}' fractions must be non-negative and sum to 1")
    if cfg.hw_accuracy + cfg.hw_stability + cfg.hw_profit < cfg.hw_latency:
        raise ConfigError("health weights must satisfy alpha+beta+gamma >= delta")
    if cfg.report_conf_lo > cfg.report_conf_hi:
        raise ConfigError("report confidence bounds out of order")


def load_config(path: str, base: StrategyConfig | None = None) -> StrategyConfig:
    """Parse a flat key=value config file over the built-in defaults."""
    cfg = base if base is not None else StrategyConfig()
    known = {f.name: f.type for f in fields(StrategyConfig)}
    defaults = StrategyConfig()
    updates = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            updates[key] = _parse_value(key, raw, type(getattr(defaults, key)))
    cfg = replace(cfg, **updates)
    validate_config(cfg)
    return cfg


@dataclass(frozen=True)
class AssetClasses:
    """Per-class column indices for one universe, in table order."""

    tickers: tuple
    us_equity: tuple
    intl_equity: tuple
    fixed_income: tuple
    commodity: tuple
    gold: tuple

    @property
    def defensive(self) -> tuple:
        """Fixed income plus gold: the de-risking basket."""
        return tuple(sorted(set(self.fixed_income) | set(self.gold)))

    @property
    def equity(self) -> tuple:
        return tuple(sorted(set(self.us_equity) | set(self.intl_equity)))

    def by_name(self, name: str) -> tuple:
        return getattr(self, name)

    def class_fractions_to_weights(self, fractions: Sequence[float], variances=None) -> np.ndarray:
        """Expand per-class fractions into per-asset weights.

        Inside a class the fraction is split equally, or proportionally to
        inverse variance when trailing variances are supplied (keeps the
        template consistent with a minimum-variance book).  Empty classes have
        their fraction redistributed across the non-empty ones so the result
        stays on the simplex.
        """
        groups = [self.us_equity, self.intl_equity, self.fixed_income, self.commodity]
        live = [(g, f) for g, f in zip(groups, fractions) if len(g) > 0]
        if not live:
            raise ValueError("universe has no classified assets")
        total = sum(f for _, f in live)
        w = np.zeros(len(self.tickers))
        v = None if variances is None else np.asarray(variances, dtype=np.float64)
        for g, f in live:
            idx = list(g)
            share = (f / total) if total > 0.0 else (1.0 / len(live))
            if v is not None and np.all(v[idx] > 0.0):
                inv = 1.0 / v[idx]
                w[idx] = share * inv / inv.sum()
            else:
                w[idx] = share / len(idx)
        return w

    def defensive_weights(self) -> np.ndarray:
        idx = self.defensive
        if not idx:
            idx = tuple(range(len(self.tickers)))
        w = np.zeros(len(self.tickers))
        w[list(idx)] = 1.0 / len(idx)
        return w

    def geo_sensitivity(self, cfg: StrategyConfig) -> np.ndarray:
        g = np.empty(len(self.tickers))
        per_class = {
            "us_equity": cfg.geo_sens_us_equity,
            "intl_equity": cfg.geo_sens_intl_equity,
            "fixed_income": cfg.geo_sens_fixed_income,
            "commodity": cfg.geo_sens_commodity,
        }
        for name in CLASS_NAMES:
            for i in self.by_name(name):
                g[i] = per_class[name]
        return g

    def sector_groups(self) -> list:
        return [self.by_name(name) for name in CLASS_NAMES if len(self.by_name(name)) > 0]


def classify_universe(tickers: Sequence[str], cfg: StrategyConfig) -> AssetClasses:
    """Assign each ticker to an asset class.

    Exact config lists win; otherwise the EQ/IN/FI/CO prefixes used by the
    synthetic generator apply; anything else defaults to US equity.
    """
    buckets = {name: [] for name in CLASS_NAMES}
    gold = []
    exact = {}
    for name, lst in (
        ("us_equity", cfg.us_equity_tickers),
        ("intl_equity", cfg.intl_equity_tickers),
        ("fixed_income", cfg.fixed_income_tickers),
        ("commodity", cfg.commodity_tickers),
    ):
        for t in lst:
            exact[t.upper()] = name
    for i, raw in enumerate(tickers):
        t = raw.upper()
        name = exact.get(t)
        if name is None:
            name = _CLASS_PREFIXES.get(t[:2], "us_equity")
        buckets[name].append(i)
        if t in {g.upper() for g in cfg.gold_tickers}:
            gold.append(i)
    return AssetClasses(
        tickers=tuple(tickers),
        us_equity=tuple(buckets["us_equity"]),
        intl_equity=tuple(buckets["intl_equity"]),
        fixed_income=tuple(buckets["fixed_income"]),
        commodity=tuple(buckets["commodity"]),
        gold=tuple(gold),
    )
