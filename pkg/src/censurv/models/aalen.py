"""Aalen's additive hazards model fitted by per-event-time least squares."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..core import TimeGrid

RIDGE = 1e-6
_COND_LIMIT = 1e12


@dataclass
class AalenFit:
    event_times: np.ndarray   # (E,)
    increments: np.ndarray    # (E, p): dB at each event time
    n_ridged: int = 0

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative coefficient paths ``B(t)`` at the event times."""
        return np.cumsum(self.increments, axis=0)


def _solve_normal(Xr, dN):
    A = Xr.T @ Xr
    rhs = Xr.T @ dN
    ev = np.linalg.eigvalsh(A)
    singular = ev[0] <= 0 or ev[-1] / ev[0] > _COND_LIMIT
    if singular:
        A = A + RIDGE * np.eye(A.shape[0])
    return np.linalg.solve(A, rhs), singular


def aalen_fit(X, times, events) -> AalenFit:
    """Least-squares increments ``dB = (Xr' Xr)^-1 Xr' dN`` at each event time.

    ``Xr`` is the design of the patients still at risk (time >= t), bias
    column included.  Near-singular normal equations get a ``1e-6`` ridge.
    With no events the path is empty and every survival curve is 1.
    """
    X = np.asarray(X, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    p = X.shape[1]
    ev_times = np.unique(times[events])
    if ev_times.size == 0:
        warnings.warn("NO_EVENTS: Aalen path is empty", RuntimeWarning)
    incs = np.zeros((ev_times.size, p))
    n_ridged = 0
    for e, t in enumerate(ev_times):
        at_risk = times >= t
        Xr = X[at_risk]
        dN = (events & (times == t))[at_risk].astype(np.float64)
        incs[e], ridged = _solve_normal(Xr, dN)
        n_ridged += ridged
    return AalenFit(ev_times, incs, n_ridged)


def aalen_survival(fit: AalenFit, X, grid: TimeGrid) -> np.ndarray:
    """Product integral ``prod (1 - x dB)`` over event times before each boundary."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if fit.event_times.size == 0:
        return np.ones((n, grid.m + 1))
    factors = np.clip(1.0 - X @ fit.increments.T, 0.0, 1.0)
    cum = np.concatenate([np.ones((n, 1)), np.cumprod(factors, axis=1)], axis=1)
    idx = np.searchsorted(fit.event_times, grid.boundaries, side="left")
    S = cum[:, idx]
    S[:, 0] = 1.0
    return S


def aalen_interval_increments(fit: AalenFit, grid: TimeGrid) -> np.ndarray:
    """Sum of increments falling inside each grid interval, shape (m, p)."""
    out = np.zeros((grid.m, fit.increments.shape[1]))
    if fit.event_times.size:
        idx = grid.interval_index(fit.event_times)
        keep = idx < grid.m
        np.add.at(out, idx[keep], fit.increments[keep])
    return out
