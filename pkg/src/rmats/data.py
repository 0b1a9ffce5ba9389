"""File ingestion and the synthetic fixture generator.

Canonical price format: UTF-8 CSV, header ``date,<T1>,<T2>,...``, ISO dates
ascending, empty cell = missing (forward-filled, leading gaps back-filled),
plain decimal points.  Events and scenario files are small CSVs with fixed
headers.  All parse errors carry row/column locations.
"""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

from .context import EventWindow
from .core import PriceTable, Regime


class DataError(ValueError):
    """Malformed input file."""


def _parse_date(raw: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw.strip())
    except ValueError as exc:
        raise DataError(f"{where}: bad date '{raw}'") from exc


def load_price_table(path: str) -> PriceTable:
    """Parse and clean the canonical price file."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2 or header[0].strip().lower() != "date":
            raise DataError(f"{path}: header must be 'date,<T1>,...'")
        tickers = [h.strip() for h in header[1:]]
        if any(not t for t in tickers):
            raise DataError(f"{path}: blank ticker in header")
        dates = []
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(tickers) + 1:
                raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(tickers) + 1}")
            day = _parse_date(row[0], f"{path}: row {i}")
            if dates and day <= dates[-1]:
                raise DataError(f"{path}: row {i}: dates not strictly ascending")
            dates.append(day)
            vals = []
            for j, cell in enumerate(row[1:], start=1):
                cell = cell.strip()
                if cell == "":
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: row {i}, column {header[j]}: unparseable cell '{cell}'") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    prices = np.asarray(rows, dtype=np.float64)
    for j, t in enumerate(tickers):
        col = prices[:, j]
        if np.all(np.isnan(col)):
            raise DataError(f"{path}: column {t} has no data")
    # forward-fill, then back-fill any leading gap from the first observation
    for j in range(prices.shape[1]):
        col = prices[:, j]
        last = math.nan
        for i in range(col.size):
            if math.isnan(col[i]):
                col[i] = last
            else:
                last = col[i]
        first_valid = col[~np.isnan(col)][0]
        col[np.isnan(col)] = first_valid
    bad = np.argwhere(prices <= 0.0)
    if bad.size:
        i, j = bad[0]
        raise DataError(f"{path}: row {i + 2}, column {tickers[j]}: non-positive price")
    return PriceTable(tuple(dates), tuple(tickers), prices)


def format_price_value(x: float) -> str:
    """Shortest round-trip decimal representation, no exponents for typical prices."""
    s = repr(float(x))
    return s


def write_price_table(table: PriceTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("date," + ",".join(table.tickers) + "\n")
        for i, d in enumerate(table.dates):
            fh.write(d.isoformat() + "," + ",".join(format_price_value(v) for v in table.prices[i]) + "\n")


def load_events(path: str) -> tuple:
    """Events CSV: header ``name,start,end`` with ISO dates."""
    events = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:3]] != ["name", "start", "end"]:
            raise DataError(f"{path}: header must be 'name,start,end'")
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3:
                raise DataError(f"{path}: row {i}: expected 3 fields")
            name = row[0].strip()
            start = _parse_date(row[1], f"{path}: row {i}")
            end = _parse_date(row[2], f"{path}: row {i}")
            if start > end:
                raise DataError(f"{path}: row {i}: event '{name}' start after end")
            events.append(EventWindow(name=name, start=start, end=end))
    return tuple(events)


def write_events(events, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("name,start,end\n")
        for ev in events:
            fh.write(f"{ev.name},{ev.start.isoformat()},{ev.end.isoformat()}\n")


def load_scenarios(path: str, tickers) -> dict:
    """Scenario CSV: header ``scenario,<T1>,...`` matching the universe order."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0].strip().lower() != "scenario":
            raise DataError(f"{path}: header must be 'scenario,<T1>,...'")
        cols = [h.strip() for h in header[1:]]
        if list(cols) != list(tickers):
            raise DataError(f"{path}: scenario tickers do not match the universe")
        out = {}
        for i, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(cols) + 1:
                raise DataError(f"{path}: row {i}: expected {len(cols) + 1} fields")
            try:
                out[row[0].strip()] = np.array([float(c) for c in row[1:]], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}: row {i}: unparseable shock") from None
    return out


# ---------------------------------------------------------------------------
# synthetic fixture generation


@dataclass(frozen=True)
class RegimeParams:
    """Per-class drift and volatility (annualized) for one regime.

    ``factor_vol`` is the daily sigma of the common factor; per-asset
    idiosyncratic variance is whatever remains of the class volatility.
    """

    drift: tuple    # (us_equity, intl_equity, fixed_income, commodity)
    vol: tuple
    factor_vol: float


DEFAULT_REGIME_PARAMS = {
    Regime.BULL: RegimeParams(drift=(0.14, 0.08, 0.03, 0.05), vol=(0.13, 0.20, 0.045, 0.25), factor_vol=0.007),
    Regime.BEAR: RegimeParams(drift=(-0.12, -0.10, 0.02, -0.06), vol=(0.17, 0.22, 0.055, 0.28), factor_vol=0.009),
    Regime.STRESS: RegimeParams(drift=(-0.55, -0.60, 0.12, -0.30), vol=(0.38, 0.42, 0.08, 0.34), factor_vol=0.022),
}

# common-factor loadings per class; defensive assets move against equity stress
FACTOR_LOADINGS = {"us_equity": 1.0, "intl_equity": 0.9, "fixed_income": -0.15, "commodity": 0.25}

_CLASS_SHARES = (10, 5, 4, 4)   # per-class asset counts for a 23-asset universe, scaled to n


@dataclass(frozen=True)
class SynthSpec:
    """Specification for a synthetic price fixture."""

    n_assets: int = 24
    days: int = 1300
    seed: int = 7
    start: dt.date = dt.date(2020, 1, 1)
    regime_schedule: tuple = ()          # (regime, n_days) pairs; padded with BULL
    events: tuple = ()                   # EventWindow list; forces STRESS + defensive drift
    regime_params: dict = field(default_factory=lambda: dict(DEFAULT_REGIME_PARAMS))
    defensive_event_drift: float = 0.35  # annualized boost to defensive assets inside events
    base_price: float = 100.0

    def __post_init__(self) -> None:
        if self.days < 800:
            raise ValueError("need at least 800 days (warm-up plus test span)")
        if self.n_assets < 4:
            raise ValueError("need at least 4 assets (one per class)")


def synth_class_layout(n_assets: int) -> list:
    """Ticker list mirroring the real universe's class proportions."""
    total = sum(_CLASS_SHARES)
    counts = [max(1, round(n_assets * s / total)) for s in _CLASS_SHARES]
    while sum(counts) > n_assets:
        counts[counts.index(max(counts))] -= 1
    while sum(counts) < n_assets:
        counts[0] += 1
    prefixes = ("EQ", "IN", "FI", "CO")
    tickers = []
    for prefix, cnt in zip(prefixes, counts):
        tickers.extend(f"{prefix}{i + 1:02d}" for i in range(cnt))
    return tickers


def trading_calendar(start: dt.date, days: int) -> tuple:
    """Consecutive weekdays from ``start``."""
    out = []
    d = start
    while len(out) < days:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return tuple(out)


def _schedule_to_daily(spec: SynthSpec, dates) -> list:
    regimes = []
    for regime, n in spec.regime_schedule:
        regimes.extend([Regime(regime)] * int(n))
    while len(regimes) < len(dates):
        regimes.append(Regime.BULL)
    regimes = regimes[: len(dates)]
    for i, d in enumerate(dates):
        if any(ev.contains(d) for ev in spec.events):
            regimes[i] = Regime.STRESS
    return regimes


def synth_prices(spec: SynthSpec) -> PriceTable:
    """Regime-conditional geometric returns with one common factor.

    Deterministic per seed; event windows force the stress regime and add a
    positive drift to the defensive (fixed income) block.
    """
    from .config import StrategyConfig, classify_universe

    rng = np.random.default_rng(spec.seed)
    tickers = synth_class_layout(spec.n_assets)
    dates = trading_calendar(spec.start, spec.days)
    classes = classify_universe(tickers, StrategyConfig())
    class_of = np.empty(spec.n_assets, dtype=object)
    for name in ("us_equity", "intl_equity", "fixed_income", "commodity"):
        for i in classes.by_name(name):
            class_of[i] = name

    loadings = np.array([FACTOR_LOADINGS[c] for c in class_of])
    class_col = {"us_equity": 0, "intl_equity": 1, "fixed_income": 2, "commodity": 3}
    col = np.array([class_col[c] for c in class_of])
    regimes = _schedule_to_daily(spec, dates)

    n_ret = spec.days - 1
    factor = rng.standard_normal(n_ret)
    idio = rng.standard_normal((n_ret, spec.n_assets))
    log_ret = np.empty((n_ret, spec.n_assets))
    defensive = np.zeros(spec.n_assets, dtype=bool)
    defensive[list(classes.defensive)] = True

    for t in range(n_ret):
        day = dates[t + 1]          # return realized into day t+1
        params = spec.regime_params[regimes[t + 1]]
        drift = np.array([params.drift[c] for c in col]) / 252.0
        vol = np.array([params.vol[c] for c in col]) / math.sqrt(252.0)
        common = loadings * params.factor_vol * factor[t]
        resid_var = np.maximum(vol**2 - (loadings * params.factor_vol) ** 2, 0.0)
        ret = drift + common + np.sqrt(resid_var) * idio[t]
        if any(ev.contains(day) for ev in spec.events):
            ret[defensive] += spec.defensive_event_drift / 252.0
        log_ret[t] = ret

    prices = np.vstack(
        [np.full(spec.n_assets, spec.base_price), spec.base_price * np.exp(np.cumsum(log_ret, axis=0))]
    )
    return PriceTable(dates, tuple(tickers), prices)


def load_synth_spec(path: str) -> SynthSpec:
    """Synth spec file: flat key=value, same comment rules as the config format.

    Keys: n_assets, days, seed, start, base_price, defensive_event_drift,
    regime_schedule (e.g. ``bull:260,bear:60,stress:20``), and
    events (``name:start:end`` triplets joined by ``;``).
    """
    kv = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise DataError(f"{path}: line {lineno}: expected 'key = value'")
            key, raw = (p.strip() for p in text.split("=", 1))
            kv[key] = raw
    known = {"n_assets", "days", "seed", "start", "base_price", "defensive_event_drift", "regime_schedule", "events"}
    unknown = set(kv) - known
    if unknown:
        raise DataError(f"{path}: unknown key '{sorted(unknown)[0]}'")
    args = {}
    for key in ("n_assets", "days", "seed"):
        if key in kv:
            args[key] = int(kv[key])
    for key in ("base_price", "defensive_event_drift"):
        if key in kv:
            args[key] = float(kv[key])
    if "start" in kv:
        args["start"] = _parse_date(kv["start"], f"{path}: start")
    if "regime_schedule" in kv and kv["regime_schedule"]:
        sched = []
        names = {"bull": Regime.BULL, "bear": Regime.BEAR, "stress": Regime.STRESS}
        for part in kv["regime_schedule"].split(","):
            name, _, n = part.strip().partition(":")
            if name.lower() not in names or not n.isdigit():
                raise DataError(f"{path}: bad regime_schedule entry '{part.strip()}'")
            sched.append((names[name.lower()], int(n)))
        args["regime_schedule"] = tuple(sched)
    if "events" in kv and kv["events"]:
        events = []
        for part in kv["events"].split(";"):
            bits = part.strip().split(":")
            if len(bits) != 3:
                raise DataError(f"{path}: bad event entry '{part.strip()}'")
            events.append(
                EventWindow(
                    name=bits[0],
                    start=_parse_date(bits[1], f"{path}: events"),
                    end=_parse_date(bits[2], f"{path}: events"),
                )
            )
        args["events"] = tuple(events)
    try:
        return SynthSpec(**args)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def default_scenarios(table: PriceTable, events) -> dict:
    """Worst 5-day universe move inside each event window that the data covers."""
    from .core import log_returns

    rets = log_returns(table)
    out = {}
    for ev in events:
        idx = [i for i, d in enumerate(table.dates) if ev.contains(d)]
        if len(idx) < 6:
            continue
        lo, hi = idx[0], idx[-1]
        window = rets[max(lo - 1, 0) : hi]
        best = None
        for s in range(window.shape[0] - 4):
            move = window[s : s + 5].sum(axis=0)
            score = float(move.mean())
            if best is None or score < best[0]:
                best = (score, move)
        if best is not None:
            out[ev.name] = best[1]
    return out
