import numpy as np
import pandas as pd
import pytest

from rmats.core import Regime
from rmats.report import factor_scores, rank_correlation, report_propose, softmax_weights

from .conftest import make_ctx, make_table


def pandas_factor_oracle(returns: np.ndarray):
    """Independent spreadsheet-style recomputation of the factor panel."""
    r = pd.DataFrame(returns)
    momentum = r.tail(126).sum()
    low_vol = -r.tail(63).std(ddof=1)
    mean_rev = -r.tail(5).sum()
    sharpe = r.tail(63).mean() / r.tail(63).std(ddof=1)

    def z(s: pd.Series) -> np.ndarray:
        sd = s.std(ddof=0)
        if sd <= 1e-12:
            return np.zeros(len(s))
        return ((s - s.mean()) / sd).to_numpy()

    return z(momentum), z(low_vol), z(mean_rev), z(sharpe)


class TestFactorScores:
    def test_identical_assets_score_zero(self):
        r = np.tile(np.random.default_rng(0).normal(0, 0.01, (130, 1)), (1, 4))
        panel = factor_scores(r)
        for col in (panel.momentum, panel.low_vol, panel.mean_rev, panel.roll_sharpe):
            assert np.allclose(col, 0.0)

    def test_rising_asset_leads_momentum_and_sharpe(self):
        rng = np.random.default_rng(1)
        r = rng.normal(0, 0.002, (130, 4))
        r[:, 2] += 0.004
        panel = factor_scores(r)
        assert panel.momentum.argmax() == 2
        assert panel.roll_sharpe.argmax() == 2

    def test_matches_independent_recomputation(self):
        rng = np.random.default_rng(3)
        r = rng.normal(0.0002, 0.012, (130, 3))
        panel = factor_scores(r)
        mom, lv, mr, sh = pandas_factor_oracle(r)
        assert np.allclose(panel.momentum, mom, atol=1e-9)
        assert np.allclose(panel.low_vol, lv, atol=1e-9)
        assert np.allclose(panel.mean_rev, mr, atol=1e-9)
        assert np.allclose(panel.roll_sharpe, sh, atol=1e-9)

    def test_zscore_columns_are_normalized(self):
        rng = np.random.default_rng(4)
        panel = factor_scores(rng.normal(0, 0.01, (200, 8)))
        for col in (panel.momentum, panel.low_vol, panel.mean_rev, panel.roll_sharpe):
            assert abs(col.mean()) < 1e-6
            assert abs(col.std() - 1.0) < 1e-6

    def test_short_history_rejected(self):
        with pytest.raises(ValueError, match="insufficient history"):
            factor_scores(np.zeros((100, 3)))


class TestSoftmaxAllocation:
    def test_constant_composite_gives_equal_weights(self):
        w = softmax_weights(np.full(6, 1.3), 2.0)
        assert np.allclose(w, 1 / 6)

    def test_dominant_score_concentrates(self):
        scores = np.zeros(5)
        scores[1] = 10.0
        w = softmax_weights(scores, 2.0)
        assert w[1] > 0.9

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        s = rng.normal(0, 1, 7)
        assert np.allclose(softmax_weights(s, 2.0), softmax_weights(s + 4.2, 2.0), atol=1e-12)


class TestRankCorrelation:
    def test_perfect_monotone_gives_one(self):
        a = np.array([0.1, 0.5, 0.9, 1.4])
        assert rank_correlation(a, a**3) == pytest.approx(1.0)

    def test_constant_input_gives_zero(self):
        assert rank_correlation(np.ones(5), np.arange(5.0)) == 0.0

    def test_matches_scipy(self):
        from scipy.stats import spearmanr

        rng = np.random.default_rng(6)
        a, b = rng.normal(size=40), rng.normal(size=40)
        assert rank_correlation(a, b) == pytest.approx(float(spearmanr(a, b).statistic), abs=1e-12)


class TestReportProposal:
    def test_weights_valid_and_regime_defaults_to_bull(self, cfg):
        rng = np.random.default_rng(7)
        table = make_table(rng.normal(0.0002, 0.01, (150, 5)))
        msg = report_propose(make_ctx(table, cfg))
        assert msg.regime == Regime.BULL
        assert msg.geo_risk == 0.5
        assert cfg.report_conf_lo <= msg.confidence <= cfg.report_conf_hi
        assert abs(msg.weights.values.sum() - 1.0) < 1e-9

    def test_golden_weights_on_pinned_fixture(self, cfg):
        # frozen from the reference implementation run
        rng = np.random.default_rng(11)
        r3 = rng.normal(0.0003, 0.01, (140, 3))
        r3[:, 0] += 0.001
        r3[:, 2] -= 0.0005
        table = make_table(r3, tickers=("EQ01", "FI01", "CO01"))
        msg = report_propose(make_ctx(table, cfg))
        golden = [0.3296020249774137, 0.3490803019421803, 0.32131767308040604]
        assert np.allclose(msg.weights.values, golden, atol=1e-12)
        assert msg.confidence == pytest.approx(0.5, abs=1e-12)

    def test_composite_shift_leaves_weights_unchanged(self, cfg):
        rng = np.random.default_rng(8)
        table = make_table(rng.normal(0, 0.01, (150, 4)))
        ctx = make_ctx(table, cfg)
        msg1 = report_propose(ctx)
        msg2 = report_propose(ctx)
        assert np.array_equal(msg1.weights.values, msg2.weights.values)
