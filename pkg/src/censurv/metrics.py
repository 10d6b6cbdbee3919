"""Survival metrics: temporal quantiles, accuracy at a horizon, RAE, k-fold CV."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import Dataset, TimeGrid
from .crf import predicted_event_times
from .errors import EmptyDataset, NoEvents, NoLabeledPatients, SurvivalError, TooFewRecords
from .models import fit, predict_survival_batch

__all__ = [
    "EvalReport",
    "temporal_quantile",
    "status_at",
    "accuracy_from_curves",
    "acc_at",
    "rae_from_curves",
    "rae",
    "constant_baseline_acc",
    "evaluate",
    "evaluate_curves",
    "kfold_indices",
    "kfold_eval",
    "reports_csv",
]

QUANTILES = (0.25, 0.5, 0.75)


@dataclass
class EvalReport:
    acc25: float
    acc50: float
    acc75: float
    rae: float
    included: dict = field(default_factory=dict)
    excluded: dict = field(default_factory=dict)
    taus: dict = field(default_factory=dict)
    model: str = ""
    split: str = ""
    n: int = 0

    def row(self) -> list:
        return [self.model, self.acc25, self.acc50, self.acc75, self.rae]

    def to_dict(self) -> dict:
        return asdict(self)


def temporal_quantile(dataset: Dataset, p: float) -> float:
    """Smallest last-follow-up time whose empirical CDF reaches ``p``."""
    t = dataset.times() if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.float64)
    if t.size == 0:
        raise EmptyDataset("temporal quantile of an empty dataset")
    return float(np.quantile(t, p, method="inverted_cdf"))


def status_at(times, events, tau):
    """Known status at ``tau``: 1 survivor, 0 dead, -1 unknown (censored before ``tau``)."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    status = np.where(events, (times > tau).astype(int), np.where(times >= tau, 1, -1))
    return status


def _curve_at(curves, grid: TimeGrid, tau):
    """Survival probability at the end of the interval containing ``tau``."""
    i = min(int(grid.interval_index(tau)) + 1, grid.m)
    return curves[:, i]


def accuracy_from_curves(curves, dataset: Dataset, tau: float, threshold: float = 0.5):
    """Accuracy (percent) of survivor/non-survivor calls at ``tau``.

    Returns ``(accuracy, n_included, n_excluded)``.
    """
    curves = np.atleast_2d(np.asarray(curves, dtype=np.float64))
    status = status_at(dataset.times(), dataset.events(), tau)
    keep = status >= 0
    if not keep.any():
        raise NoLabeledPatients(f"no patient has a known status at tau={tau}")
    pred = (_curve_at(curves, dataset.grid, tau) >= threshold).astype(int)
    correct = int(np.sum(pred[keep] == status[keep]))
    return 100.0 * correct / int(keep.sum()), int(keep.sum()), int((~keep).sum())


def acc_at(model, dataset: Dataset, tau: float) -> float:
    return accuracy_from_curves(predict_survival_batch(model, dataset), dataset, tau)[0]


def _rae_mask(dataset: Dataset):
    return dataset.events() & (dataset.times() < dataset.grid.cap)


def rae_from_curves(curves, dataset: Dataset):
    """Mean of ``min(|t_hat - t| / t, 1)`` over patients with an in-grid death.

    ``t`` is floored at one interval width.  Returns ``(rae, n_included)``.
    """
    mask = _rae_mask(dataset)
    if not mask.any():
        raise NoEvents("RAE needs at least one uncensored patient")
    grid = dataset.grid
    t_hat = predicted_event_times(np.atleast_2d(curves)[mask], grid)
    t = dataset.times()[mask]
    floor = grid.widths[np.minimum(grid.interval_index(t), grid.m - 1)]
    err = np.minimum(np.abs(t_hat - t) / np.maximum(t, floor), 1.0)
    return float(err.mean()), int(mask.sum())


def rae(model, dataset: Dataset) -> float:
    return rae_from_curves(predict_survival_batch(model, dataset), dataset)[0]


def constant_baseline_acc(dataset: Dataset, tau: float) -> float:
    """Best accuracy achievable by predicting the same class for everyone."""
    status = status_at(dataset.times(), dataset.events(), tau)
    known = status[status >= 0]
    if known.size == 0:
        raise NoLabeledPatients(f"no patient has a known status at tau={tau}")
    frac = known.mean()
    return 100.0 * max(frac, 1.0 - frac)


def evaluate_curves(curves, dataset: Dataset, taus=None, model="", split="", strict=True) -> EvalReport:
    """Metrics for precomputed curves.

    ``taus`` maps each quantile to a horizon; by default they are computed
    on ``dataset`` itself.  With ``strict=False`` a metric that cannot be
    computed is reported as NaN instead of raising.
    """
    if len(dataset) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    if taus is None:
        taus = {q: temporal_quantile(dataset, q) for q in QUANTILES}
    accs, inc, exc = {}, {}, {}
    for q in QUANTILES:
        key = f"acc{int(q * 100)}"
        try:
            accs[key], inc[key], exc[key] = accuracy_from_curves(curves, dataset, taus[q])
        except SurvivalError:
            if strict:
                raise
            accs[key], inc[key], exc[key] = math.nan, 0, len(dataset)
    try:
        r, inc["rae"] = rae_from_curves(curves, dataset)
        exc["rae"] = len(dataset) - inc["rae"]
    except SurvivalError:
        if strict:
            raise
        r, inc["rae"], exc["rae"] = math.nan, 0, len(dataset)
    return EvalReport(accs["acc25"], accs["acc50"], accs["acc75"], r, inc, exc,
                      {str(q): float(t) for q, t in taus.items()}, model, split, len(dataset))


def evaluate(model, dataset: Dataset, taus=None, split="", strict=True) -> EvalReport:
    return evaluate_curves(predict_survival_batch(model, dataset), dataset, taus,
                           model=model.family, split=split, strict=strict)


def kfold_indices(n: int, k: int, seed: int):
    """Seeded shuffle cut into ``k`` contiguous folds; returns a list of index arrays."""
    if n < k or k < 2:
        raise TooFewRecords(f"{n} records cannot form {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    edges = np.linspace(0, n, k + 1).astype(int)
    return [perm[a:b] for a, b in zip(edges[:-1], edges[1:])]


def _mean_report(reports, model):
    vals = {key: float(np.nanmean([getattr(r, key) for r in reports]))
            if any(not math.isnan(getattr(r, key)) for r in reports) else math.nan
            for key in ("acc25", "acc50", "acc75", "rae")}
    inc = {key: int(sum(r.included.get(key, 0) for r in reports)) for key in reports[0].included}
    exc = {key: int(sum(r.excluded.get(key, 0) for r in reports)) for key in reports[0].excluded}
    return EvalReport(vals["acc25"], vals["acc50"], vals["acc75"], vals["rae"], inc, exc,
                      reports[0].taus, model, "mean", sum(r.n for r in reports))


def kfold_eval(spec, dataset: Dataset, k: int = 5, seed: int = 0, fit_fn=None, log_fn=None):
    """Cross-validated evaluation.

    Each fold in turn is the test set; the rest is shuffled and split
    90/10 into train and validation.  Horizons are the temporal quantiles of
    the whole dataset.  Returns ``(mean_report, fold_reports)``.
    """
    fit_fn = fit_fn or fit
    folds = kfold_indices(len(dataset), k, seed)
    taus = {q: temporal_quantile(dataset, q) for q in QUANTILES}
    reports = []
    family = getattr(spec, "family", str(spec))
    for i, test_idx in enumerate(folds):
        rest = np.concatenate([f for j, f in enumerate(folds) if j != i])
        n_valid = max(1, int(round(0.1 * rest.size))) if rest.size > 1 else 0
        train_idx, valid_idx = rest[:rest.size - n_valid], rest[rest.size - n_valid:]
        model = fit_fn(spec, dataset.subset(train_idx), dataset.subset(valid_idx))
        test = dataset.subset(test_idx)
        rep = evaluate_curves(predict_survival_batch(model, test), test, taus, model=family,
                              split=f"fold{i + 1}", strict=False)
        reports.append(rep)
        if log_fn is not None:
            log_fn(rep)
    return _mean_report(reports, family), reports


def reports_csv(reports) -> str:
    """CSV with columns ``model,acc25,acc50,acc75,rae,split``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "acc25", "acc50", "acc75", "rae", "split"])
    for r in reports:
        w.writerow([r.model] + [f"{v:.4f}" for v in (r.acc25, r.acc50, r.acc75, r.rae)] + [r.split])
    return buf.getvalue()
