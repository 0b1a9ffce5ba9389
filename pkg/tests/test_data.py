import datetime as dt

import numpy as np
import pytest

from rmats.context import EventWindow
from rmats.core import Regime, log_returns
from rmats.data import (
    DataError,
    SynthSpec,
    default_scenarios,
    load_events,
    load_price_table,
    load_scenarios,
    load_synth_spec,
    synth_class_layout,
    synth_prices,
    trading_calendar,
    write_events,
    write_price_table,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


class TestPriceFile:
    def test_well_formed_file(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA,BBB\n2021-01-04,10,20\n2021-01-05,11,21\n2021-01-06,12,22\n")
        t = load_price_table(path)
        assert t.n_days == 3 and t.tickers == ("AAA", "BBB")

    def test_missing_cell_forward_filled(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA\n2021-01-04,10\n2021-01-05,\n2021-01-06,12\n")
        t = load_price_table(path)
        assert t.prices[1, 0] == 10.0

    def test_leading_gap_back_filled(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA\n2021-01-04,\n2021-01-05,11\n")
        t = load_price_table(path)
        assert t.prices[0, 0] == 11.0

    def test_descending_dates_rejected_with_row(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA\n2021-01-05,10\n2021-01-04,11\n")
        with pytest.raises(DataError, match="row 3"):
            load_price_table(path)

    def test_unparseable_cell_located(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA\n2021-01-04,oops\n")
        with pytest.raises(DataError, match="column AAA"):
            load_price_table(path)

    def test_empty_column_rejected(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA,BBB\n2021-01-04,10,\n2021-01-05,11,\n")
        with pytest.raises(DataError, match="column BBB"):
            load_price_table(path)

    def test_bad_header_rejected(self, tmp_path):
        path = write(tmp_path, "p.csv", "time,AAA\n2021-01-04,10\n")
        with pytest.raises(DataError, match="header"):
            load_price_table(path)

    def test_nonpositive_price_rejected(self, tmp_path):
        path = write(tmp_path, "p.csv", "date,AAA\n2021-01-04,0\n")
        with pytest.raises(DataError, match="non-positive"):
            load_price_table(path)

    def test_write_read_round_trip_is_exact(self, tmp_path, ref_table):
        path = str(tmp_path / "round.csv")
        small = ref_table.truncate(40)
        write_price_table(small, path)
        back = load_price_table(path)
        assert back.tickers == small.tickers
        assert back.dates == small.dates
        assert np.array_equal(back.prices, small.prices)


class TestEventsAndScenarios:
    def test_events_round_trip(self, tmp_path):
        events = (EventWindow("a", dt.date(2022, 1, 3), dt.date(2022, 2, 1)),)
        path = str(tmp_path / "e.csv")
        write_events(events, path)
        assert load_events(path) == events

    def test_event_order_validated(self, tmp_path):
        path = write(tmp_path, "e.csv", "name,start,end\nx,2022-02-01,2022-01-01\n")
        with pytest.raises(DataError, match="start after end"):
            load_events(path)

    def test_scenarios_parse_and_match_universe(self, tmp_path):
        path = write(tmp_path, "s.csv", "scenario,AAA,BBB\ncrash,-0.2,0.1\n")
        out = load_scenarios(path, ("AAA", "BBB"))
        assert np.allclose(out["crash"], [-0.2, 0.1])
        with pytest.raises(DataError, match="do not match"):
            load_scenarios(path, ("AAA", "CCC"))

    def test_default_scenarios_from_events(self, ref_table, ref_events):
        scen = default_scenarios(ref_table, ref_events)
        assert len(scen) == len(ref_events)
        for shock in scen.values():
            assert shock.shape == (ref_table.n_assets,)


class TestSynth:
    def test_layout_mirrors_universe_shape(self):
        tickers = synth_class_layout(24)
        assert len(tickers) == 24
        assert sum(t.startswith("FI") for t in tickers) >= 1
        assert tickers[0].startswith("EQ")

    def test_calendar_is_weekdays(self):
        cal = trading_calendar(dt.date(2021, 1, 1), 10)
        assert all(d.weekday() < 5 for d in cal)
        assert len(cal) == 10

    def test_deterministic_per_seed(self):
        spec = SynthSpec(n_assets=6, days=820, seed=3)
        a, b = synth_prices(spec), synth_prices(spec)
        assert np.array_equal(a.prices, b.prices)
        c = synth_prices(SynthSpec(n_assets=6, days=820, seed=4))
        assert not np.array_equal(a.prices, c.prices)

    def test_zero_vol_zero_drift_is_constant(self):
        from rmats.data import RegimeParams

        flat = RegimeParams(drift=(0, 0, 0, 0), vol=(0, 0, 0, 0), factor_vol=0.0)
        spec = SynthSpec(
            n_assets=4,
            days=810,
            seed=0,
            regime_params={Regime.BULL: flat, Regime.BEAR: flat, Regime.STRESS: flat},
            defensive_event_drift=0.0,
        )
        t = synth_prices(spec)
        assert np.allclose(t.prices, 100.0)

    def test_stress_windows_depress_equities(self, ref_spec, ref_table):
        rets = log_returns(ref_table)
        eq_cols = [i for i, t in enumerate(ref_table.tickers) if t.startswith(("EQ", "IN"))]
        in_stress, outside = [], []
        for i in range(1, ref_table.n_days):
            day = ref_table.dates[i]
            (in_stress if any(ev.contains(day) for ev in ref_spec.events) else outside).append(i - 1)
        assert rets[np.ix_(in_stress, eq_cols)].mean() < rets[np.ix_(outside, eq_cols)].mean()

    def test_spec_file_parsing(self, tmp_path):
        path = write(
            tmp_path,
            "spec.txt",
            "n_assets = 8\ndays = 900\nseed = 5\nstart = 2020-06-01\n"
            "regime_schedule = bull:500,bear:100\nevents = x:2022-01-05:2022-02-01\n",
        )
        spec = load_synth_spec(path)
        assert spec.n_assets == 8 and spec.days == 900 and spec.seed == 5
        assert spec.regime_schedule == ((Regime.BULL, 500), (Regime.BEAR, 100))
        assert spec.events[0].name == "x"

    def test_spec_unknown_key_rejected(self, tmp_path):
        path = write(tmp_path, "spec.txt", "bogus = 1\n")
        with pytest.raises(DataError, match="unknown key 'bogus'"):
            load_synth_spec(path)

    def test_too_few_days_rejected(self):
        with pytest.raises(ValueError, match="at least 800"):
            SynthSpec(days=700)
