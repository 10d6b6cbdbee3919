"""Cox proportional hazards with Breslow ties and Breslow baseline hazard."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..core import TimeGrid
from ..errors import NoEvents

BETA_NORM_CAP = 50.0


def cox_partial_likelihood(beta, X, times, events):
    """Breslow partial log-likelihood, score vector and Hessian.

    Parameters
    ----------
    beta : ndarray, shape (p,)
    X : ndarray, shape (n, p)
    times : ndarray, shape (n,)
    events : bool ndarray, shape (n,)

    Returns
    -------
    ll : float
    grad : ndarray, shape (p,)
    hess : ndarray, shape (p, p)
    """
    X = np.asarray(X, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    n, p = X.shape
    eta = X @ beta
    shift = eta.max() if n else 0.0
    r = np.exp(eta - shift)

    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p))
    S0, S1, S2 = 0.0, np.zeros(p), np.zeros((p, p))
    # sweep times downward; the risk set at t is everyone with time >= t
    uniq = np.unique(times)[::-1]
    group_of = np.searchsorted(-uniq, -times)
    order = np.argsort(group_of, kind="stable")
    bounds = np.searchsorted(group_of[order], np.arange(uniq.size + 1))
    for gi in range(uniq.size):
        members = order[bounds[gi]:bounds[gi + 1]]
        Xg, rg = X[members], r[members]
        S0 += rg.sum()
        S1 += rg @ Xg
        S2 += (Xg * rg[:, None]).T @ Xg
        dead = members[events[members]]
        d = dead.size
        if d == 0:
            continue
        mean = S1 / S0
        ll += float(eta[dead].sum() - d * (np.log(S0) + shift))
        grad += X[dead].sum(axis=0) - d * mean
        hess -= d * (S2 / S0 - np.outer(mean, mean))
    return ll, grad, hess


@dataclass
class CoxFit:
    beta: np.ndarray
    offset: float
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    scale: np.ndarray
    n_iter: int = 0
    separation_detected: bool = False
    history: list = field(default_factory=list)


def cox_fit(X, times, events, max_iter=100, tol=1e-9) -> CoxFit:
    """Maximize the Breslow partial likelihood by damped Newton steps.

    Columns are scaled to unit standard deviation internally; the returned
    ``beta`` is on the original scale.  When the Hessian is not negative
    definite a gradient step is taken instead.  If the scaled coefficient
    norm passes 50 the fit stops at that norm and ``separation_detected`` is
    set.
    """
    X = np.asarray(X, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if not events.any():
        raise NoEvents("Cox model needs at least one observed event")
    n, p = X.shape
    sd = X.std(axis=0) if n else np.ones(p)
    sd = np.where(sd > 0, sd, 1.0)
    Z = (X - X.mean(axis=0)) / sd

    beta = np.zeros(p)
    ll, g, Hs = cox_partial_likelihood(beta, Z, times, events)
    history = [ll]
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            np.linalg.cholesky(-Hs)
            direction = np.linalg.solve(-Hs, g)
        except np.linalg.LinAlgError:
            direction = g / max(1.0, np.linalg.norm(g))
        step = 1.0
        while True:
            cand = beta + step * direction
            ll_new, g_new, H_new = cox_partial_likelihood(cand, Z, times, events)
            if ll_new >= ll - 1e-12 or step < 1e-10:
                break
            step *= 0.5
        moved = float(np.linalg.norm(cand - beta))
        beta, ll, g, Hs = cand, ll_new, g_new, H_new
        history.append(ll)
        if np.linalg.norm(beta) > BETA_NORM_CAP:
            beta = beta * (BETA_NORM_CAP / np.linalg.norm(beta))
            separated = True
            warnings.warn("SEPARATION_DETECTED: Cox coefficients hit the norm cap", RuntimeWarning)
            break
        # under separation the gradient vanishes but Newton steps stay O(1),
        # so convergence is judged on the step, not on the gradient
        if moved < tol * max(1.0, float(np.linalg.norm(beta))):
            break

    beta_raw = beta / sd
    eta = X @ beta_raw
    offset = float(eta.mean())
    risk = np.exp(eta - offset)
    ev_times = np.unique(times[events])
    increments = np.array([
        np.sum(events & (times == t)) / risk[times >= t].sum() for t in ev_times
    ])
    return CoxFit(beta_raw, offset, ev_times, np.cumsum(increments), sd, it, separated, history)


def cox_survival(fit: CoxFit, X, grid: TimeGrid) -> np.ndarray:
    """``S[n, i] = exp(-H0(b_i-) * exp(x beta - offset))`` on the grid boundaries."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    # events strictly before each boundary
    idx = np.searchsorted(fit.baseline_times, grid.boundaries, side="left")
    H0 = np.concatenate([[0.0], fit.baseline_cumhaz])[idx]
    risk = np.exp(X @ fit.beta - fit.offset)
    S = np.exp(-np.outer(risk, H0))
    S[:, 0] = 1.0
    return np.clip(S, 0.0, 1.0)


def breslow_baseline_survival(times, events, grid: TimeGrid) -> np.ndarray:
    """Covariate-free Breslow survival ``exp(-Nelson-Aalen)`` on the grid boundaries."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    out = np.ones(grid.m + 1)
    for i, b in enumerate(grid.boundaries):
        if i == 0:
            continue
        H = sum(np.sum(events & (times == t)) / np.sum(times >= t)
                for t in np.unique(times[events & (times < b)]))
        out[i] = np.exp(-H)
    return out
