"""Analysis agent: 3-state Gaussian regime model and scalar signal fusion.

The regime model is a diagonal-Gaussian hidden Markov chain fit by
expectation-maximization with a deterministic quantile-split initialization,
so fits are reproducible without any random draws.  Posteriors are filtered
(forward-only): row t conditions on observations 1..t and never looks ahead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .context import MarketContext
from .core import AgentMessage, BroadcastMessage, Regime, Weights

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class HmmModel:
    """Diagonal-Gaussian hidden Markov model parameters."""

    initial: np.ndarray      # (K,)
    transition: np.ndarray   # (K, K), row-stochastic
    means: np.ndarray        # (K, d)
    variances: np.ndarray    # (K, d), floored positive
    log_likelihoods: tuple = ()   # per-iteration training log-likelihood

    def __post_init__(self) -> None:
        A = np.asarray(self.transition, dtype=np.float64)
        pi = np.asarray(self.initial, dtype=np.float64)
        if np.any(np.abs(A.sum(axis=1) - 1.0) > 1e-9) or abs(pi.sum() - 1.0) > 1e-9:
            raise ValueError("transition rows and initial distribution must sum to 1")
        if np.any(np.asarray(self.variances) < 1e-8 - 1e-15):
            raise ValueError("variances below floor")

    @property
    def n_states(self) -> int:
        return int(self.initial.size)

    @property
    def n_dims(self) -> int:
        return int(self.means.shape[1])


@njit(cache=True)
def _forward_scaled(pi, A, B):
    """Scaled forward pass; returns (alpha, c) with alpha rows normalized."""
    T, K = B.shape
    alpha = np.empty((T, K))
    c = np.empty(T)
    s = 0.0
    for k in range(K):
        alpha[0, k] = pi[k] * B[0, k]
        s += alpha[0, k]
    c[0] = s
    for k in range(K):
        alpha[0, k] /= s
    for t in range(1, T):
        s = 0.0
        for k in range(K):
            acc = 0.0
            for j in range(K):
                acc += alpha[t - 1, j] * A[j, k]
            acc *= B[t, k]
            alpha[t, k] = acc
            s += acc
        c[t] = s
        for k in range(K):
            alpha[t, k] /= s
    return alpha, c


@njit(cache=True)
def _backward_scaled(A, B, c):
    T, K = B.shape
    beta = np.empty((T, K))
    for k in range(K):
        beta[T - 1, k] = 1.0
    for t in range(T - 2, -1, -1):
        for j in range(K):
            acc = 0.0
            for k in range(K):
                acc += A[j, k] * B[t + 1, k] * beta[t + 1, k]
            beta[t, j] = acc / c[t + 1]
    return beta


def _log_emissions(obs: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    # (T, K): sum over dims of diagonal-Gaussian log densities
    diff = obs[:, None, :] - means[None, :, :]
    return -0.5 * np.sum(diff * diff / variances[None, :, :] + np.log(variances)[None, :, :] + _LOG2PI, axis=2)


def _scaled_emissions(obs, means, variances):
    logb = _log_emissions(obs, means, variances)
    shift = logb.max(axis=1)
    return np.exp(logb - shift[:, None]), shift


def _quantile_split_init(obs: np.ndarray, k: int, var_floor: float):
    """Seed states from contiguous quantile groups of the first observation dim."""
    order = np.argsort(obs[:, 0], kind="stable")
    groups = np.array_split(order, k)
    means = np.vstack([obs[g].mean(axis=0) for g in groups])
    variances = np.vstack([np.maximum(obs[g].var(axis=0), var_floor) for g in groups])
    if k == 1:
        transition = np.ones((1, 1))
    else:
        transition = np.full((k, k), 0.2 / (k - 1))
        np.fill_diagonal(transition, 0.8)
    initial = np.full(k, 1.0 / k)
    return initial, transition, means, variances


def hmm_fit(
    obs: np.ndarray,
    k: int = 3,
    seed: int = 0,
    max_iter: int = 200,
    tol: float = 1e-6,
    var_floor: float = 1e-8,
) -> HmmModel:
    """Fit by EM; per-iteration log-likelihood is non-decreasing.

    Initialization is a deterministic quantile split of the first observation
    dimension, so the result does not depend on ``seed``; the parameter is
    kept for interface stability.
    """
    del seed
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[:, None]
    T = obs.shape[0]
    if T < 50:
        raise ValueError("insufficient observations: need at least 50")
    if not np.all(np.isfinite(obs)):
        raise ValueError("observations must be finite")
    if float(np.ptp(obs, axis=0).max()) <= 0.0:
        raise ValueError("degenerate input: all observations identical")

    pi, A, means, variances = _quantile_split_init(obs, k, var_floor)
    lls = []
    prev_ll = -np.inf
    for _ in range(max_iter):
        B, shift = _scaled_emissions(obs, means, variances)
        alpha, c = _forward_scaled(pi, A, B)
        ll = float(np.sum(np.log(c)) + np.sum(shift))
        lls.append(ll)
        beta = _backward_scaled(A, B, c)
        gamma = alpha * beta
        gamma /= gamma.sum(axis=1, keepdims=True)
        if k > 1:
            flow = alpha[:-1].T @ (B[1:] * beta[1:] / c[1:, None])
            xi = A * flow
            A = xi / xi.sum(axis=1, keepdims=True)
        pi = gamma[0].copy()
        denom = gamma.sum(axis=0)
        means = (gamma.T @ obs) / denom[:, None]
        sq = gamma.T @ (obs * obs)
        variances = np.maximum(sq / denom[:, None] - means * means, var_floor)
        if ll - prev_ll < tol and np.isfinite(prev_ll):
            break
        prev_ll = ll
    return HmmModel(pi, A, means, variances, log_likelihoods=tuple(lls))


def regime_posterior(model: HmmModel, obs: np.ndarray) -> np.ndarray:
    """Filtered state posterior: row t is P(state | observations up to t)."""
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim == 1:
        obs = obs[:, None]
    if obs.shape[1] != model.n_dims:
        raise ValueError(f"observation dimension {obs.shape[1]} != model dimension {model.n_dims}")
    B, _ = _scaled_emissions(obs, model.means, model.variances)
    alpha, _ = _forward_scaled(model.initial, model.transition, B)
    return alpha


def regime_label(model: HmmModel) -> dict:
    """Map state index -> Regime.

    Stress is the state with the highest first-dimension variance (ties break
    to the lower mean); of the remaining two, the higher mean is Bull.
    """
    var0 = model.variances[:, 0]
    mean0 = model.means[:, 0]
    states = list(range(model.n_states))
    stress = min(states, key=lambda s: (-var0[s], mean0[s]))
    rest = sorted((s for s in states if s != stress), key=lambda s: -mean0[s])
    labels = {stress: Regime.STRESS}
    if rest:
        labels[rest[0]] = Regime.BULL
    for s in rest[1:]:
        labels[s] = Regime.BEAR
    return labels


@dataclass(frozen=True)
class KalmanState:
    """Random-walk scalar state with per-source observation noises."""

    z: float
    p: float
    q: float
    r_obs: tuple

    def __post_init__(self) -> None:
        if self.p < 0.0 or self.q <= 0.0 or any(r <= 0.0 for r in self.r_obs):
            raise ValueError("require p >= 0, q > 0 and positive observation noises")
        object.__setattr__(self, "r_obs", tuple(float(r) for r in self.r_obs))


def kalman_fuse(state: KalmanState, observations) -> KalmanState:
    """One predict step then sequential scalar updates, one per source."""
    obs = [float(o) for o in observations]
    if len(obs) != len(state.r_obs):
        raise ValueError(f"expected {len(state.r_obs)} observations, got {len(obs)}")
    z = state.z
    p = state.p + state.q
    for o, r in zip(obs, state.r_obs):
        gain = p / (p + r)
        z = z + gain * (o - z)
        p = (1.0 - gain) * p
    return KalmanState(z=z, p=p, q=state.q, r_obs=state.r_obs)


def build_observations(returns: np.ndarray, vol_window: int = 20) -> np.ndarray:
    """Two-dimensional regime observations from a return matrix.

    Dim 0 is the universe mean daily log return; dim 1 is the trailing-mean
    cross-sectional volatility, so high-dispersion periods separate on
    variance.  Output has returns.shape[0] - vol_window + 1 rows.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.shape[0] < vol_window + 1:
        raise ValueError("insufficient history for observation construction")
    mean_ret = r.mean(axis=1)
    cs_vol = np.std(r, axis=1)
    kernel = np.full(vol_window, 1.0 / vol_window)
    roll = np.convolve(cs_vol, kernel, mode="valid")
    return np.column_stack([mean_ret[vol_window - 1 :], roll])


def fit_context_model(ctx: MarketContext):
    """Fit the regime model on the trailing window.

    Returns (model, obs, asset_variances); the variances are the diagonal of
    the same exponentially weighted covariance the risk agent tracks, used to
    spread template class fractions within each class.
    """
    from .risk import ewma_covariance

    cfg = ctx.cfg
    if ctx.prices.n_days < 252:
        raise ValueError("insufficient history: analysis agent needs 252 trading days")
    window = ctx.returns[-cfg.hmm_window :]
    obs = build_observations(window, cfg.obs_vol_window)
    model = hmm_fit(
        obs,
        k=cfg.hmm_states,
        seed=cfg.seed,
        max_iter=cfg.hmm_max_iter,
        tol=cfg.hmm_tol,
        var_floor=cfg.hmm_var_floor,
    )
    variances = np.diag(ewma_covariance(window, cfg.ewma_decay).values).copy()
    return model, obs, variances


_REGIME_PRIORITY = {Regime.STRESS: 0, Regime.BEAR: 1, Regime.BULL: 2}


def default_kalman_state(cfg) -> KalmanState:
    return KalmanState(z=0.0, p=1.0, q=cfg.kalman_q, r_obs=(cfg.kalman_r,) * 3)


def _logit(x: float) -> float:
    x = min(max(x, 1e-6), 1.0 - 1e-6)
    return math.log(x / (1.0 - x))


def propose_with_state(
    ctx: MarketContext,
    prior: BroadcastMessage | None,
    model_obs,
    kalman: KalmanState,
    prev: np.ndarray | None = None,
):
    """Regime-template proposal; returns (message, updated kalman state)."""
    cfg = ctx.cfg
    model, obs, variances = model_obs
    posterior = regime_posterior(model, obs)[-1]
    labels = regime_label(model)
    by_regime = {}
    for s, reg in labels.items():
        by_regime[reg] = by_regime.get(reg, 0.0) + float(posterior[s])
    regime = min(by_regime, key=lambda rg: (-by_regime[rg], _REGIME_PRIORITY[rg]))
    confidence = float(posterior.max())

    template = ctx.classes.class_fractions_to_weights(cfg.template(regime), variances)
    if prior is not None:
        w = (1.0 - cfg.blend_prior) * template + cfg.blend_prior * prior.agg_weights.values
    else:
        w = template

    # fuse consensus geo, stress posterior, and a volatility signal on the logit scale
    vol_col = obs[:, 1] if obs.shape[1] > 1 else obs[:, 0]
    sd = float(np.std(vol_col))
    z_vol = 0.0 if sd <= 1e-12 else (float(vol_col[-1]) - float(vol_col.mean())) / sd
    sources = [
        prior.mean_geo if prior is not None else 0.5,
        by_regime.get(Regime.STRESS, 0.0),
        1.0 / (1.0 + math.exp(-z_vol)),
    ]
    kalman = kalman_fuse(kalman, [_logit(s) for s in sources])
    geo = 1.0 / (1.0 + math.exp(-kalman.z))

    delta = 0.0 if prev is None else float(np.linalg.norm(w - prev))
    msg = AgentMessage(
        weights=Weights(w),
        confidence=confidence,
        geo_risk=geo,
        regime=regime,
        timestamp=ctx.day_index,
        delta=delta,
    )
    return msg, kalman


def analysis_propose(ctx: MarketContext, prior: BroadcastMessage | None = None) -> AgentMessage:
    """Single-shot form: fits the window model and uses a fresh fusion state."""
    model_obs = fit_context_model(ctx)
    msg, _ = propose_with_state(ctx, prior, model_obs, default_kalman_state(ctx.cfg))
    return msg
