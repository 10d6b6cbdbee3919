"""Exact likelihood of the discrete-time survival CRF.

A patient's death interval is encoded as a monotone binary sequence
``y^1..y^m`` (``y^t = 1`` once the patient is dead).  Only the ``m + 1``
monotone sequences have non-zero probability, so the model is a categorical
distribution over the outcome index ``k`` (intervals survived) with scores

    s[k] = sum_{t=k+1}^{m} x . theta^t  +  pairwise(k)

where ``pairwise(k)`` counts the ``(0,0)``, ``(0,1)`` and ``(1,1)`` adjacent
pairs of the sequence for ``k`` and weighs them by ``w00, w01, w11``.  The
``(1,0)`` transition is forbidden outright.

Index convention: the numerator for a death with outcome index ``k`` sums the
unary terms from ``t = k + 1``; a patient censored at ``j`` is consistent with
``k = j + 1 .. m``.

Batched functions work on a matrix of unary terms ``U[n, t-1] = x_n . theta_n^t``
so the same code serves every model family.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .core import Outcome, TimeGrid
from .errors import DimMismatch, IndexOutOfRange, OracleScaleExceeded

__all__ = [
    "PairwisePotentials",
    "ExplanationSet",
    "OutcomeDistribution",
    "pair_counts",
    "scores_from_unary",
    "batch_log_likelihood",
    "batch_survival_curves",
    "outcome_scores",
    "outcome_distribution",
    "log_prob_event",
    "log_prob_censored",
    "grad_log_prob",
    "survival_curve",
    "predicted_event_time",
    "predicted_event_times",
    "brute_force_distribution",
    "explanation_csv",
    "survival_curve_csv",
]

ORACLE_MAX_M = 20


@dataclass(frozen=True)
class PairwisePotentials:
    w00: float = 0.0
    w01: float = 0.0
    w11: float = 0.0
    enabled: bool = False

    def __post_init__(self):
        vals = np.array([self.w00, self.w01, self.w11], dtype=np.float64)
        if not np.all(np.isfinite(vals)):
            raise ValueError("pairwise potentials must be finite")
        if not self.enabled and np.any(vals != 0.0):
            raise ValueError("disabled pairwise potentials must be zero")

    @classmethod
    def from_vector(cls, w) -> "PairwisePotentials":
        if w is None:
            return cls()
        w = np.asarray(w, dtype=np.float64)
        return cls(float(w[0]), float(w[1]), float(w[2]), enabled=True)

    def vector(self) -> np.ndarray:
        return np.array([self.w00, self.w01, self.w11], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ExplanationSet:
    """Per-interval linear models ``theta^1..theta^m`` plus pairwise potentials.

    ``scope`` is ``"patient"`` for patient-specific explanations and
    ``"global"`` when the same weights apply to everyone.  ``attention`` holds
    the ``(m, K)`` dictionary weights when the explanation came from a
    dictionary mixture.
    """

    thetas: np.ndarray
    pairwise: PairwisePotentials = field(default_factory=PairwisePotentials)
    scope: str = "patient"
    attention: np.ndarray | None = None

    def __post_init__(self):
        th = np.array(self.thetas, dtype=np.float64)
        if th.ndim != 2 or th.shape[0] < 1:
            raise DimMismatch(f"thetas must be (m, d_x), got {th.shape}")
        if not np.all(np.isfinite(th)):
            raise ValueError("thetas must be finite")
        th.setflags(write=False)
        object.__setattr__(self, "thetas", th)

    @property
    def m(self) -> int:
        return self.thetas.shape[0]

    @property
    def d_x(self) -> int:
        return self.thetas.shape[1]


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    log_probs: np.ndarray

    @property
    def m(self) -> int:
        return self.log_probs.size - 1

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def pair_counts(m: int) -> np.ndarray:
    """Matrix ``F[k] = (#(0,0), #(0,1), #(1,1))`` adjacent pairs for outcome ``k``."""
    k = np.arange(m + 1)
    return np.stack([
        np.maximum(k - 1, 0),
        ((k > 0) & (k < m)).astype(np.int64),
        np.maximum(m - k - 1, 0),
    ], axis=1).astype(np.float64)


def scores_from_unary(U, w=None) -> np.ndarray:
    """Scores ``s[..., k]`` for every outcome from unary terms ``U[..., m]``."""
    U = np.asarray(U, dtype=np.float64)
    m = U.shape[-1]
    suffix = np.cumsum(U[..., ::-1], axis=-1)[..., ::-1]
    S = np.concatenate([suffix, np.zeros(U.shape[:-1] + (1,))], axis=-1)
    if w is not None:
        S = S + pair_counts(m) @ np.asarray(w, dtype=np.float64)
    return S


def batch_log_likelihood(U, w, lo, hi):
    """Log-probability of the feasible outcome range and its gradients.

    Parameters
    ----------
    U : ndarray, shape (n, m)
        Unary terms.
    w : ndarray of shape (3,) or None
        Pairwise weights ``(w00, w01, w11)``; ``None`` disables them.
    lo, hi : int arrays, shape (n,)
        Inclusive feasible outcome range per record (``lo == hi`` for an
        observed death).

    Returns
    -------
    logp : ndarray, shape (n,)
    dU : ndarray, shape (n, m)
        ``d logp / d U``.
    dw : ndarray, shape (n, 3)
        ``d logp / d w`` per record (computed even when ``w`` is None).
    """
    U = np.asarray(U, dtype=np.float64)
    n, m = U.shape
    S = scores_from_unary(U, w)
    ks = np.arange(m + 1)
    lo = np.asarray(lo).reshape(-1, 1)
    hi = np.asarray(hi).reshape(-1, 1)
    if np.any(lo < 0) or np.any(hi > m) or np.any(lo > hi):
        raise IndexOutOfRange("feasible range outside 0..m")
    feasible = (ks >= lo) & (ks <= hi)
    S_f = np.where(feasible, S, -np.inf)
    log_z = logsumexp(S, axis=1, keepdims=True)
    log_zf = logsumexp(S_f, axis=1, keepdims=True)
    p = np.exp(S - log_z)
    q = np.exp(S_f - log_zf)
    # d s[k] / d U_t = [k < t]; expectations of that indicator give P(K < t)
    dU = np.cumsum(q, axis=1)[:, :m] - np.cumsum(p, axis=1)[:, :m]
    F = pair_counts(m)
    dw = q @ F - p @ F
    return (log_zf - log_z)[:, 0], dU, dw


def batch_survival_curves(U, w=None) -> np.ndarray:
    """``S[n, i] = P(K >= i)`` for ``i = 0..m``."""
    S = scores_from_unary(U, w)
    p = np.exp(S - logsumexp(S, axis=-1, keepdims=True))
    surv = np.cumsum(p[..., ::-1], axis=-1)[..., ::-1]
    surv = np.clip(surv, 0.0, 1.0)
    surv[..., 0] = 1.0
    # guard float noise so the curve never ticks upward
    return np.minimum.accumulate(surv, axis=-1)


def _unary(x, e: ExplanationSet) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != e.d_x:
        raise DimMismatch(f"x has shape {x.shape}, explanation expects d_x={e.d_x}")
    return e.thetas @ x


def _w(e: ExplanationSet):
    return e.pairwise.vector() if e.pairwise.enabled else None


def outcome_scores(x, e: ExplanationSet) -> np.ndarray:
    return scores_from_unary(_unary(x, e), _w(e))


def outcome_distribution(x, e: ExplanationSet) -> OutcomeDistribution:
    s = outcome_scores(x, e)
    return OutcomeDistribution(s - logsumexp(s))


def log_prob_event(x, e: ExplanationSet, k: int) -> float:
    if not 0 <= k <= e.m - 1:
        raise IndexOutOfRange(f"k={k} outside 0..{e.m - 1}")
    return float(outcome_distribution(x, e).log_probs[k])


def log_prob_censored(x, e: ExplanationSet, j: int) -> float:
    if not 0 <= j <= e.m - 1:
        raise IndexOutOfRange(f"j={j} outside 0..{e.m - 1}")
    s = outcome_scores(x, e)
    return float(logsumexp(s[j + 1:]) - logsumexp(s))


def grad_log_prob(x, e: ExplanationSet, outcome: Outcome):
    """Log-probability of ``outcome`` and its gradients.

    Returns
    -------
    logp : float
    d_thetas : ndarray, shape (m, d_x)
    d_pairwise : ndarray, shape (3,)
        Gradient with respect to ``(w00, w01, w11)``.
    """
    u = _unary(x, e)
    lo, hi = outcome.feasible(e.m)
    if outcome.censored:
        if not 0 <= outcome.censored_at <= e.m - 1:
            raise IndexOutOfRange(f"censored_at={outcome.censored_at} outside 0..{e.m - 1}")
    elif not 0 <= outcome.k <= e.m - 1:
        raise IndexOutOfRange(f"k={outcome.k} outside 0..{e.m - 1}")
    logp, dU, dw = batch_log_likelihood(u[None, :], _w(e), [lo], [hi])
    return float(logp[0]), np.outer(dU[0], np.asarray(x, dtype=np.float64)), dw[0]


def survival_curve(x, e: ExplanationSet) -> np.ndarray:
    return batch_survival_curves(_unary(x, e)[None, :], _w(e))[0]


def predicted_event_times(S, grid: TimeGrid) -> np.ndarray:
    """Median-rule point prediction for a batch of curves ``(n, m+1)``."""
    S = np.atleast_2d(np.asarray(S, dtype=np.float64))
    below = S[:, 1:] < 0.5
    first = np.where(below.any(axis=1), below.argmax(axis=1), grid.m - 1)
    return grid.midpoints[first]


def predicted_event_time(S, grid: TimeGrid) -> float:
    """Midpoint of the first interval ``i`` with ``S[i] < 0.5``, else of the last one."""
    return float(predicted_event_times(S, grid)[0])


def brute_force_distribution(x, e: ExplanationSet) -> OutcomeDistribution:
    """Outcome distribution by explicit enumeration of all ``2^m`` binary sequences.

    Sequences containing a ``1 -> 0`` transition get probability zero; the
    remaining ones are scored term by term.  Slow on purpose: it shares no
    code with the closed form.
    """
    m = e.m
    if m > ORACLE_MAX_M:
        raise OracleScaleExceeded(f"m={m} > {ORACLE_MAX_M}")
    u = _unary(x, e)
    pw = e.pairwise
    omega = {(0, 0): pw.w00, (0, 1): pw.w01, (1, 1): pw.w11}
    log_w = np.full(m + 1, -np.inf)
    chunk = 1 << min(m, 14)
    for start in range(0, 1 << m, chunk):
        codes = np.arange(start, start + chunk, dtype=np.int64)
        Y = (codes[:, None] >> np.arange(m)) & 1
        if m > 1:
            a, b = Y[:, :-1], Y[:, 1:]
            valid = ~np.any((a == 1) & (b == 0), axis=1)
        else:
            valid = np.ones(len(codes), dtype=bool)
        Y = Y[valid]
        score = Y @ u
        if pw.enabled and m > 1:
            a, b = Y[:, :-1], Y[:, 1:]
            for (ya, yb), val in omega.items():
                score = score + val * np.sum((a == ya) & (b == yb), axis=1)
        k = m - Y.sum(axis=1)
        for kk, sc in zip(k, score):
            log_w[kk] = np.logaddexp(log_w[kk], sc)
    return OutcomeDistribution(log_w - np.logaddexp.reduce(log_w))


def _fmt(v) -> str:
    return repr(float(v))


def explanation_csv(e: ExplanationSet, feature_names, rows=None) -> str:
    """CSV ``feature,interval_1..interval_m``, one row per attribute."""
    names = list(feature_names)
    if len(names) != e.d_x:
        raise DimMismatch(f"{len(names)} feature names for d_x={e.d_x}")
    rows = range(e.d_x) if rows is None else rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature"] + [f"interval_{t}" for t in range(1, e.m + 1)])
    for i in rows:
        w.writerow([names[i]] + [_fmt(v) for v in e.thetas[:, i]])
    return buf.getvalue()


def survival_curve_csv(S, grid: TimeGrid) -> str:
    """CSV ``time_days,survival_prob`` with one row per grid boundary."""
    S = np.asarray(S, dtype=np.float64)
    if S.size != grid.m + 1:
        raise DimMismatch(f"curve has {S.size} points, grid needs {grid.m + 1}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time_days", "survival_prob"])
    for t, s in zip(grid.boundaries, S):
        w.writerow([_fmt(t), _fmt(s)])
    return buf.getvalue()
