"""Acceptance gate: every release criterion at its pinned tolerance.

Each test prints one ``ACCEPTANCE <name>: PASS|FAIL`` line and enforces its
runtime budget.  The heavy shared computations (the reference coordinated
backtest and the ablation sweep) are charged to the first criterion that
needs them.
"""
import contextlib
import math
import sys
import time

import numpy as np
import pytest

from rmats.backtest import BacktestConfig, convergence_stats, performance_metrics, run_ablation, run_backtest
from rmats.config import StrategyConfig
from rmats.core import Weights
from rmats.data import load_synth_spec, synth_prices
from rmats.strategy import RmatsStrategy

from .conftest import FIXTURE_SPEC, make_table
from .test_analysis import brute_force_filtered, sample_chain
from .test_risk import brute_force_tail

_cache = {}


def _fixture():
    if "fixture" not in _cache:
        spec = load_synth_spec(FIXTURE_SPEC)
        _cache["fixture"] = (spec, synth_prices(spec))
    return _cache["fixture"]


def _full_run():
    if "full" not in _cache:
        spec, table = _fixture()
        cfg = StrategyConfig()
        t0 = time.perf_counter()
        strat = RmatsStrategy(cfg)
        result = run_backtest(strat, table, BacktestConfig(), events=spec.events, strategy_cfg=cfg)
        elapsed = time.perf_counter() - t0
        outcomes = [o for _, o in result.coordination]
        flags = [any(ev.contains(d) for ev in spec.events) for d, _ in result.coordination]
        _cache["full"] = (result, convergence_stats(outcomes, flags), elapsed)
    return _cache["full"]


@pytest.fixture()
def announce(capfd):
    def _announce(line: str) -> None:
        # step outside pytest's capture so the line always reaches the terminal
        with capfd.disabled():
            print(line, file=sys.stderr, flush=True)

    return _announce


@contextlib.contextmanager
def criterion(announce, name: str, budget_s: float, prepaid: float = 0.0):
    t0 = time.perf_counter()
    try:
        yield
    except Exception:
        announce(f"ACCEPTANCE {name}: FAIL")
        raise
    elapsed = time.perf_counter() - t0 + prepaid
    announce(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s / budget {budget_s:.0f}s)")
    assert elapsed < budget_s, f"{name} exceeded its runtime budget"


def test_convergence_protocol(announce):
    _, stats, elapsed = _full_run()
    with criterion(announce, "convergence_protocol", 10.0, prepaid=elapsed):
        assert stats["n"] >= 27
        assert stats["median_rounds"] == 2.0
        assert stats["max_rounds"] <= 8
        assert stats["frac_within_2"] >= 0.70


def test_delta_decay(announce):
    _, stats, _ = _full_run()
    with criterion(announce, "delta_decay", 10.0):
        curve = stats["delta_curve"]
        assert len(curve) >= 2
        drop = (curve[0] - curve[1]) / curve[0]
        assert drop >= 0.90


def test_cvar_oracle(announce):
    from rmats.risk import historical_cvar

    with criterion(announce, "cvar_oracle", 30.0):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(50, 400))
            pnl = rng.normal(0, 0.02, n)
            tr = historical_cvar(pnl, 0.95)
            var_b, cvar_b = brute_force_tail(pnl, 0.95)
            assert tr.var == var_b and tr.cvar == cvar_b
        sigma = 0.01
        draws = rng.normal(0.0, sigma, 1_000_000)
        z95 = 1.6448536269514722
        analytic = sigma * math.exp(-0.5 * z95 * z95) / math.sqrt(2.0 * math.pi) / 0.05
        got = historical_cvar(draws, 0.95).cvar
        assert abs(got - analytic) / analytic < 0.02


def test_hmm_criteria(announce):
    from rmats.analysis import HmmModel, hmm_fit, regime_posterior

    with criterion(announce, "hmm", 60.0):
        # filtered posteriors equal exhaustive path enumeration
        model = HmmModel(
            initial=np.array([0.5, 0.3, 0.2]),
            transition=np.array([[0.7, 0.2, 0.1], [0.15, 0.7, 0.15], [0.05, 0.25, 0.7]]),
            means=np.array([[0.004], [-0.002], [-0.03]]),
            variances=np.array([[2.5e-5], [1e-4], [9e-4]]),
        )
        rng = np.random.default_rng(77)
        for T in (1, 3, 6):
            obs = rng.normal(0, 0.02, (T, 1))
            assert np.allclose(regime_posterior(model, obs), brute_force_filtered(model, obs), atol=1e-9)

        # decoding accuracy on a well-separated 3-regime generator
        means = [0.001, -0.001, -0.02]
        sds = [0.004, 0.012, 0.035]
        trans = np.array([[0.98, 0.015, 0.005], [0.02, 0.97, 0.01], [0.02, 0.03, 0.95]])
        states, obs = sample_chain(np.random.default_rng(42), trans, means, sds, 3000)
        fit = hmm_fit(obs, k=3)
        assert np.all(np.diff(fit.log_likelihoods) >= -1e-8)
        post = regime_posterior(fit, obs)
        decoded = post.argmax(axis=1)
        match = {s: int(np.argmin(np.abs(fit.means[:, 0] - means[s]))) for s in range(3)}
        accuracy = float(np.mean([match[s] == d for s, d in zip(states, decoded)]))
        assert accuracy >= 0.90


def test_did_criteria(announce):
    from rmats.sentiment import PanelData, did_estimate

    with criterion(announce, "did", 5.0):
        y = np.array([[0.0, 0.1], [0.0, -0.3]])
        res = did_estimate(PanelData(y, np.array([False, True]), np.array([False, True])))
        assert res.delta == pytest.approx(-0.4, abs=1e-15)

        rng = np.random.default_rng(3)
        units, periods = 50, 40
        d = np.arange(units) < 25
        t = np.arange(periods) >= 20
        panel = PanelData(rng.normal(0, 0.01, (units, periods)) + 0.5 * (d[:, None] & t[None, :]), d, t)
        assert abs(did_estimate(panel).delta - 0.5) <= 0.02


def test_optimizer_criteria(announce):
    from rmats.optimizer import OptConstraints, objective, optimize

    with criterion(announce, "optimizer", 60.0):
        mu = np.array([0.001, 0.0])
        sigma = np.eye(2) * 1e-4
        w = optimize(mu, sigma, OptConstraints(risk_aversion=5.0, sector_caps=(((0, 1), 1.0),)))
        grid = np.linspace(0.0, 1.0, 10001)
        objs = mu[0] * grid - 5.0 * ((grid**2 + (1.0 - grid) ** 2) * 1e-4)
        assert objective(w.values, mu, sigma, 5.0) >= objs.max() - 1e-3

        capped = optimize(
            np.array([0.01, 0.0]),
            sigma,
            OptConstraints(risk_aversion=5.0, sector_caps=(((0,), 0.3), ((1,), 1.0))),
        )
        assert capped.values[0] == pytest.approx(0.3, abs=1e-9)

        rng = np.random.default_rng(0)
        checked = 0
        while checked < 100:
            n = int(rng.integers(2, 9))
            a = rng.normal(0, 0.01, (n + 2, n))
            sigma_r = a.T @ a / (n + 2) + 1e-6 * np.eye(n)
            mu_r = rng.normal(0, 1e-3, n)
            half = max(1, n // 2)
            caps = ((tuple(range(half)), float(rng.uniform(0.4, 1.0))), (tuple(range(half, n)), 1.0))
            g = rng.uniform(0, 1, n)
            gamma = float(g.min() + rng.uniform(0.1, 0.6) * (g.max() - g.min()) + 1e-3)
            cons = OptConstraints(
                risk_aversion=float(rng.uniform(1, 20)), sector_caps=caps, grs_vector=g, gamma_geo=gamma
            )
            try:
                w_r = optimize(mu_r, sigma_r, cons).values
            except ValueError:
                continue
            checked += 1
            assert abs(w_r.sum() - 1.0) <= 1e-8
            assert w_r.min() >= -1e-8
            assert w_r[:half].sum() <= caps[0][1] + 1e-8
            assert float(g @ w_r) <= gamma + 1e-8


def test_backtest_identities(announce):
    with criterion(announce, "backtest_identities", 30.0):
        rng = np.random.default_rng(5)

        def equal_weight(ctx):
            return Weights.uniform(ctx.n_assets)

        # buy-and-hold identity
        single = make_table(rng.normal(0, 0.01, (300, 1)), tickers=("EQ01",))
        res = run_backtest(equal_weight, single, BacktestConfig(cost_bps=0.0, warmup_days=60))
        t0 = single.index_of(res.dates[0])
        assert np.allclose(res.equity, single.prices[t0:, 0] / single.prices[t0, 0], rtol=1e-12)

        # cost monotonicity
        multi = make_table(rng.normal(0.0002, 0.01, (400, 3)), tickers=("EQ01", "FI01", "CO01"))
        free = run_backtest(equal_weight, multi, BacktestConfig(cost_bps=0.0, warmup_days=60))
        paid = run_backtest(equal_weight, multi, BacktestConfig(cost_bps=10.0, warmup_days=60))
        assert np.all(free.equity[1:] >= paid.equity[1:])

        # no look-ahead under truncation
        cfg_bt = BacktestConfig(warmup_days=60)
        full = run_backtest(equal_weight, multi, cfg_bt)
        cut = multi.truncate(multi.index_of(full.weight_dates[3]) + 1)
        partial = run_backtest(equal_weight, cut, cfg_bt)
        for (d1, w1), (d2, w2) in zip(
            zip(partial.weight_dates, partial.weights), zip(full.weight_dates, full.weights)
        ):
            assert d1 == d2 and np.array_equal(w1.values, w2.values)

        # calmar identity on a computed result
        m = performance_metrics(paid, cfg_bt)
        assert m.mdd > 0
        assert m.calmar * m.mdd == pytest.approx(m.ann_return, abs=1e-12)

        # published mean-variance row satisfies the same identity
        assert 0.0808 / 0.1549 == pytest.approx(0.522, abs=5e-4)


def test_ablation_direction(announce):
    spec, table = _fixture()
    cfg = StrategyConfig()
    with criterion(announce, "ablation_direction", 120.0):
        rows = run_ablation(
            table,
            BacktestConfig(),
            ["full", "no_recursion", "no_sentiment", "no_risk", "no_analysis", "no_did"],
            events=spec.events,
            strategy_cfg=cfg,
        )
        assert rows["no_risk"]["metrics"].mdd > rows["full"]["metrics"].mdd
        outcomes = [o for _, o in rows["no_recursion"]["result"].coordination]
        assert outcomes and all(o.rounds_used == 1 for o in outcomes)


def test_cli_determinism(announce, tmp_path):
    from rmats.cli import main
    from rmats.data import write_events

    spec, _ = _fixture()
    with criterion(announce, "cli_determinism", 120.0):
        prices = tmp_path / "prices.csv"
        events = tmp_path / "events.csv"
        assert main(["synth", "--spec", FIXTURE_SPEC, "--out", str(prices)]) == 0
        write_events(spec.events, str(events))
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            rc = main(
                [
                    "backtest",
                    "--prices",
                    str(prices),
                    "--strategy",
                    "rmats",
                    "--events",
                    str(events),
                    "--out",
                    str(out),
                ]
            )
            assert rc == 0
            outs.append(out)
        for name in ("report.json", "equity.csv", "weights.csv", "rounds.csv"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), f"{name} differs"
