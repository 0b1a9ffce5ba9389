"""Constrained mean-variance optimization and risk-aware reward scoring.

The optimizer maximizes mu'w - lambda * w'Sigma*w over the long-only simplex
subject to per-sector caps and a geopolitical exposure budget, via projected
gradient ascent with cyclic alternating projections onto the constraint sets.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import Weights


@dataclass(frozen=True)
class RewardParams:
    """Penalty weights for volatility and excess drawdown."""

    lambda1: float = 0.8
    lambda2: float = 1.5
    theta: float = 0.05

    def __post_init__(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0 or not 0.0 < self.theta < 1.0:
            raise ValueError("require lambda1, lambda2 >= 0 and theta in (0, 1)")


def reward(r_t: float, sigma_t: float, dd_t: float, p: RewardParams) -> float:
    """Risk-aware reward: return less volatility and excess-drawdown penalties."""
    if sigma_t < 0 or dd_t < 0:
        raise ValueError("sigma_t and dd_t must be non-negative")
    return r_t - p.lambda1 * sigma_t - p.lambda2 * max(0.0, dd_t - p.theta)


@dataclass(frozen=True)
class ExpectedReturns:
    """Per-asset expected daily returns."""

    mu: np.ndarray

    def __post_init__(self) -> None:
        m = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "mu", m)
        if not np.all(np.isfinite(m)):
            raise ValueError("expected returns must be finite")


@dataclass(frozen=True)
class OptConstraints:
    """Feasible set: simplex, per-sector caps, geo exposure half-space."""

    risk_aversion: float
    sector_caps: tuple            # ((member indices...), cap) pairs
    grs_vector: np.ndarray | None = None
    gamma_geo: float | None = None
    leverage_cap: float = 1.0

    def __post_init__(self) -> None:
        if self.risk_aversion <= 0:
            raise ValueError("risk_aversion must be positive")
        if self.leverage_cap < 1.0:
            raise ValueError("leverage cap below 1 is infeasible for fully invested long-only weights")
        caps = tuple((tuple(members), float(cap)) for members, cap in self.sector_caps)
        object.__setattr__(self, "sector_caps", caps)
        for members, cap in caps:
            if not 0.0 < cap <= 1.0:
                raise ValueError("sector caps must lie in (0, 1]")
            if len(members) == 0:
                raise ValueError("sector cap with no members")
        if self.grs_vector is not None:
            g = np.asarray(self.grs_vector, dtype=np.float64)
            object.__setattr__(self, "grs_vector", g)
            if np.any(g < 0.0) or np.any(g > 1.0):
                raise ValueError("geo sensitivities must lie in [0, 1]")
            if self.gamma_geo is None or self.gamma_geo <= 0.0:
                raise ValueError("gamma_geo must be positive when a geo vector is set")


def min_geo_exposure(cons: OptConstraints, n: int) -> float:
    """Smallest attainable w'grs over the simplex-with-caps set (exact greedy)."""
    if cons.grs_vector is None:
        return 0.0
    room = np.ones(n)
    caps = []
    for members, cap in cons.sector_caps:
        caps.append([set(members), cap])
    order = np.argsort(cons.grs_vector, kind="stable")
    remaining = 1.0
    total = 0.0
    for i in order:
        if remaining <= 1e-15:
            break
        take = min(room[i], remaining)
        for entry in caps:
            if i in entry[0]:
                take = min(take, entry[1])
        if take <= 0.0:
            continue
        for entry in caps:
            if i in entry[0]:
                entry[1] -= take
        total += take * float(cons.grs_vector[i])
        remaining -= take
    if remaining > 1e-9:
        raise ValueError("infeasible: sector caps sum below 1")
    return total


def check_feasible(cons: OptConstraints, n: int) -> None:
    cap_total = 0.0
    covered = set()
    for members, cap in cons.sector_caps:
        cap_total += cap
        covered.update(members)
    uncovered = n - len(covered)
    if cap_total + uncovered < 1.0 - 1e-12:
        raise ValueError("infeasible: sector caps sum below 1")
    if cons.grs_vector is not None:
        if min_geo_exposure(cons, n) > cons.gamma_geo + 1e-12:
            raise ValueError("infeasible: geo budget unattainable under caps")


@njit(cache=True)
def _simplex_nb(w):
    n = w.size
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    rho = 0
    for i in range(n):
        if u[i] * (i + 1) > css[i] - 1.0:
            rho = i
    theta = (css[rho] - 1.0) / (rho + 1)
    out = w - theta
    for i in range(n):
        if out[i] < 0.0:
            out[i] = 0.0
    return out


@njit(cache=True)
def _pocs_nb(v, masks, caps, g, gamma, has_geo, max_cycles, tol):
    w = v.copy()
    n = w.size
    n_groups = caps.size
    gg = 0.0
    if has_geo:
        for i in range(n):
            gg += g[i] * g[i]
    for _ in range(max_cycles):
        w = _simplex_nb(w)
        for k in range(n_groups):
            s = 0.0
            cnt = 0
            for i in range(n):
                if masks[k, i]:
                    s += w[i]
                    cnt += 1
            excess = s - caps[k]
            if excess > 0.0 and cnt > 0:
                adj = excess / cnt
                for i in range(n):
                    if masks[k, i]:
                        w[i] -= adj
        if has_geo and gg > 0.0:
            viol = -gamma
            for i in range(n):
                viol += g[i] * w[i]
            if viol > 0.0:
                c = viol / gg
                for i in range(n):
                    w[i] -= c * g[i]
        worst = 0.0
        ssum = 0.0
        mn = 0.0
        for i in range(n):
            ssum += w[i]
            if w[i] < mn:
                mn = w[i]
        worst = abs(ssum - 1.0)
        if -mn > worst:
            worst = -mn
        for k in range(n_groups):
            s = -caps[k]
            for i in range(n):
                if masks[k, i]:
                    s += w[i]
            if s > worst:
                worst = s
        if has_geo:
            e = -gamma
            for i in range(n):
                e += g[i] * w[i]
            if e > worst:
                worst = e
        if worst <= tol:
            break
    return w


def _cap_arrays(cons: OptConstraints, n: int):
    n_groups = len(cons.sector_caps)
    masks = np.zeros((n_groups, n), dtype=np.bool_)
    caps = np.empty(n_groups, dtype=np.float64)
    for k, (members, cap) in enumerate(cons.sector_caps):
        masks[k, list(members)] = True
        caps[k] = cap
    return masks, caps


def project_feasible(v: np.ndarray, cons: OptConstraints, cycles: int = 100, tol: float = 1e-9) -> np.ndarray:
    """Cyclic alternating projections: simplex, sector half-spaces, geo half-space."""
    w = np.ascontiguousarray(v, dtype=np.float64)
    masks, caps = _cap_arrays(cons, w.size)
    has_geo = cons.grs_vector is not None
    g = np.ascontiguousarray(cons.grs_vector) if has_geo else np.zeros(w.size)
    gamma = cons.gamma_geo if has_geo else 0.0
    out = _pocs_nb(w, masks, caps, g, gamma, has_geo, cycles * 10, tol)
    if _max_violation(out, cons) > tol:
        # near-tangent geometry (budget at the edge of attainability) converges
        # slowly; only those cases pay for the extra cycles
        out = _pocs_nb(out, masks, caps, g, gamma, has_geo, cycles * 1000, tol)
    return out


def _max_violation(w: np.ndarray, cons: OptConstraints) -> float:
    worst = abs(float(w.sum()) - 1.0)
    worst = max(worst, float(-w.min()) if w.min() < 0 else 0.0)
    for members, cap in cons.sector_caps:
        worst = max(worst, float(w[list(members)].sum()) - cap)
    if cons.grs_vector is not None:
        worst = max(worst, float(cons.grs_vector @ w) - cons.gamma_geo)
    return worst


def objective(w: np.ndarray, mu: np.ndarray, sigma: np.ndarray, lam: float) -> float:
    return float(mu @ w - lam * w @ sigma @ w)


def optimize(
    mu: np.ndarray,
    sigma: np.ndarray,
    cons: OptConstraints,
    step: float = 0.01,
    iters: int = 500,
    cycles: int = 100,
    tol: float = 1e-9,
) -> Weights:
    """Projected gradient ascent from equal weights; deterministic.

    ``step`` is a floor: on daily-return scales the quadratic term's curvature
    L = 2 * lambda * eig_max(sigma) is tiny and a fixed small step cannot
    converge within the iteration budget, so the effective step is
    max(step, 1/L), which keeps the ascent monotone for a concave quadratic.
    """
    mu = mu.mu if isinstance(mu, ExpectedReturns) else np.asarray(mu, dtype=np.float64).ravel()
    sigma = np.asarray(sigma, dtype=np.float64)
    n = mu.size
    if sigma.shape != (n, n):
        raise ValueError("sigma shape mismatch")
    eigs = np.linalg.eigvalsh(sigma)
    if float(eigs.min()) < -1e-8:
        raise ValueError("sigma is not positive semi-definite")
    check_feasible(cons, n)
    lam = cons.risk_aversion
    lipschitz = 2.0 * lam * float(eigs.max())
    eff_step = max(step, 1.0 / lipschitz) if lipschitz > 0 else 1e4
    w = project_feasible(np.full(n, 1.0 / n), cons, cycles, tol)
    best = objective(w, mu, sigma, lam)
    stall = 0
    for _ in range(iters):
        grad = mu - 2.0 * lam * (sigma @ w)
        gnorm = float(np.linalg.norm(grad))
        # bound the raw displacement so projections start near the feasible set
        step_t = min(eff_step, 1.0 / gnorm) if gnorm > 0 else eff_step
        w_next = project_feasible(w + step_t * grad, cons, cycles, tol)
        moved = float(np.abs(w_next - w).max())
        w = w_next
        obj = objective(w, mu, sigma, lam)
        # stop once the ascent stalls; remaining iterations cannot improve
        stall = stall + 1 if obj - best <= 1e-12 else 0
        if obj > best:
            best = obj
        if moved < 1e-10 or stall >= 5:
            break
    return Weights(np.maximum(w, 0.0) / np.maximum(w, 0.0).sum())


def select_risk_aversion(
    history: np.ndarray,
    candidates,
    cons: OptConstraints,
    p: RewardParams,
    mu: np.ndarray | None = None,
    sigma: np.ndarray | None = None,
    mu_shrink: float = 0.5,
    vol_window: int = 21,
) -> float:
    """Pick the candidate risk aversion whose portfolio maximizes mean reward
    over the trailing window; ties break toward the larger (more defensive) value.

    Return/covariance inputs default to the window's shrunk mean and sample
    covariance so the selection is self-contained.
    """
    history = np.asarray(history, dtype=np.float64)
    if history.shape[0] < 63:
        raise ValueError("insufficient history: need a 63-day window")
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ValueError("empty candidate grid")
    if mu is None:
        mu = (1.0 - mu_shrink) * history.mean(axis=0)
    if sigma is None:
        n = history.shape[1]
        sigma = np.cov(history, rowvar=False, ddof=1).reshape(n, n) + 1e-10 * np.eye(n)
    best_lam, best_score = None, -np.inf
    for lam in cands:
        w = optimize(mu, sigma, OptConstraints(
            risk_aversion=lam,
            sector_caps=cons.sector_caps,
            grs_vector=cons.grs_vector,
            gamma_geo=cons.gamma_geo,
        )).values
        pnl = history @ w
        equity = np.cumprod(1.0 + pnl)
        peak = np.maximum.accumulate(equity)
        dd = 1.0 - equity / peak
        score = 0.0
        for t in range(pnl.size):
            lo = max(0, t - vol_window + 1)
            seg = pnl[lo : t + 1]
            sig = float(np.std(seg, ddof=1)) if seg.size >= 2 else 0.0
            score += reward(float(pnl[t]), sig, float(dd[t]), p)
        score /= pnl.size
        if score > best_score or (score == best_score and best_lam is not None and lam > best_lam):
            best_lam, best_score = lam, score
    return best_lam
