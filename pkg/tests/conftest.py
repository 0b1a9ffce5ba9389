import datetime as dt

import numpy as np
import pytest

from rmats.config import StrategyConfig, classify_universe
from rmats.context import MarketContext
from rmats.core import PriceTable
from rmats.data import load_synth_spec, synth_prices, trading_calendar

FIXTURE_SPEC = "fixtures/synth_spec.txt"


@pytest.fixture(scope="session")
def ref_spec():
    return load_synth_spec(FIXTURE_SPEC)


@pytest.fixture(scope="session")
def ref_table(ref_spec):
    return synth_prices(ref_spec)


@pytest.fixture(scope="session")
def ref_events(ref_spec):
    return ref_spec.events


@pytest.fixture(scope="session")
def cfg():
    return StrategyConfig()


@pytest.fixture(scope="session", autouse=True)
def warm_numba(cfg):
    # trigger JIT compilation outside any timed section
    from rmats.analysis import hmm_fit
    from rmats.optimizer import OptConstraints, project_feasible

    rng = np.random.default_rng(0)
    hmm_fit(rng.normal(0, 1, (60, 1)), k=2)
    project_feasible(np.array([0.7, 0.3]), OptConstraints(risk_aversion=1.0, sector_caps=(((0,), 0.6), ((1,), 1.0))))


def make_table(returns: np.ndarray, tickers=None, start=dt.date(2021, 1, 4), base=100.0) -> PriceTable:
    """Price table whose log returns equal ``returns`` exactly."""
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim == 1:
        r = r[:, None]
    n = r.shape[1]
    if tickers is None:
        tickers = tuple(f"EQ{i + 1:02d}" for i in range(n))
    prices = base * np.exp(np.vstack([np.zeros(n), np.cumsum(r, axis=0)]))
    dates = trading_calendar(start, r.shape[0] + 1)
    return PriceTable(dates, tuple(tickers), prices)


def make_ctx(table: PriceTable, cfg: StrategyConfig, events=(), **extra) -> MarketContext:
    classes = classify_universe(table.tickers, cfg)
    today = table.dates[-1]
    return MarketContext(
        prices=table,
        classes=classes,
        cfg=cfg,
        event_active=any(ev.contains(today) for ev in events),
        events=tuple(events),
        **extra,
    )


@pytest.fixture()
def ctx_at(ref_table, ref_events, cfg):
    def _build(day: dt.date, **extra) -> MarketContext:
        idx = ref_table.index_of(day)
        return make_ctx(ref_table.truncate(idx + 1), cfg, events=ref_events, **extra)

    return _build
