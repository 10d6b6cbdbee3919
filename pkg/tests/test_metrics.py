import math

import numpy as np
import pytest

from censurv import TimeGrid
from censurv.errors import EmptyDataset, NoEvents, NoLabeledPatients, TooFewRecords
from censurv.metrics import (EvalReport, accuracy_from_curves, constant_baseline_acc, evaluate_curves,
                             kfold_eval, kfold_indices, rae_from_curves, reports_csv, status_at,
                             temporal_quantile)
from censurv.models import ModelArtifact

from conftest import make_dataset

GRID = TimeGrid.uniform(10, 1.0)


def step_curve(t_death, m=10):
    """Curve that drops to 0 at the end of the interval containing ``t_death``."""
    S = np.ones(m + 1)
    S[int(t_death) + 1:] = 0.0
    return S


def test_temporal_quantile():
    assert temporal_quantile([10, 20, 30, 40], 0.5) == 20
    assert temporal_quantile([7.0] * 5, 0.3) == 7.0
    assert temporal_quantile(np.arange(1, 1001), 0.25) == 250
    with pytest.raises(EmptyDataset):
        temporal_quantile([], 0.5)


def test_status_at():
    np.testing.assert_array_equal(status_at([1, 5, 2, 6], [1, 1, 0, 0], 3.0), [0, 1, -1, 1])


def test_perfect_predictions():
    times = np.array([0.5, 2.5, 4.5, 7.5, 9.5])
    d = make_dataset(times, [1, 1, 1, 1, 1], grid=GRID)
    curves = np.array([step_curve(t) for t in times])
    for tau in (1.0, 3.0, 8.0):
        acc, inc, exc = accuracy_from_curves(curves, d, tau)
        assert acc == 100.0 and inc == 5 and exc == 0


def test_accuracy_counting():
    # patient 3 is censored before tau and is excluded
    d = make_dataset([1.5, 6.5, 7.5, 2.0], [1, 1, 0, 0], grid=GRID)
    tau = 5.0
    good = np.array([step_curve(1.5), step_curve(6.5), np.ones(11), np.ones(11)])
    assert accuracy_from_curves(good, d, tau) == (100.0, 3, 1)
    one_wrong = good.copy()
    one_wrong[1] = step_curve(3.0)
    acc, inc, exc = accuracy_from_curves(one_wrong, d, tau)
    assert acc == pytest.approx(200 / 3) and (inc, exc) == (3, 1)


def test_accuracy_needs_labels():
    d = make_dataset([1.0, 2.0], [0, 0], grid=GRID)
    with pytest.raises(NoLabeledPatients):
        accuracy_from_curves(np.ones((2, 11)), d, 5.0)


def test_rae_formula():
    grid = TimeGrid.uniform(10, 1.0)
    # predicted midpoint 2.5 vs truth 5 -> 0.5; predicted 9.5 vs truth 2 -> clipped 1
    d = make_dataset([5.0, 2.0], [1, 1], grid=grid)
    curves = np.array([step_curve(2.0), np.ones(11)])
    r, n = rae_from_curves(curves, d)
    assert n == 2
    assert r == pytest.approx((0.5 + 1.0) / 2)


def test_rae_ignores_censored_and_needs_events():
    d = make_dataset([5.0, 2.0], [1, 0], grid=GRID)
    r, n = rae_from_curves(np.array([step_curve(5.0), np.ones(11)]), d)
    assert n == 1 and r == pytest.approx(0.5 / 5.0)
    with pytest.raises(NoEvents):
        rae_from_curves(np.ones((1, 11)), make_dataset([3.0], [0], grid=GRID))


def test_rae_midpoint_oracle():
    rng = np.random.default_rng(0)
    grid = TimeGrid.uniform(20, 7.0)
    k = rng.integers(0, 20, size=200)
    t = (k + rng.random(200)) * 7
    d = make_dataset(t, np.ones(200), grid=grid)
    curves = np.array([step_curve(kk, 20) for kk in k])
    r, _ = rae_from_curves(curves, d)
    per = np.minimum(np.abs(grid.midpoints[k] - t) / np.maximum(t, 7.0), 1)
    assert r == pytest.approx(per.mean())
    assert r <= np.mean(np.minimum(3.5 / np.maximum(t, 7.0), 1)) + 1e-12


def test_constant_baseline():
    d = make_dataset([1.0, 2.0, 8.0, 9.0, 9.5], [1, 1, 1, 0, 1], grid=GRID)
    assert constant_baseline_acc(d, 5.0) == 60.0
    assert accuracy_from_curves(np.ones((5, 11)), d, 5.0)[0] == 60.0


def test_evaluate_curves_and_strictness():
    d = make_dataset([1.0, 2.0, 8.0], [0, 0, 0], grid=GRID)
    with pytest.raises(NoEvents):
        evaluate_curves(np.ones((3, 11)), d)
    rep = evaluate_curves(np.ones((3, 11)), d, strict=False)
    assert math.isnan(rep.rae) and rep.acc25 == 100.0
    with pytest.raises(EmptyDataset):
        evaluate_curves(np.ones((0, 11)), d.subset([]))


def test_kfold_indices_partition():
    folds = kfold_indices(23, 5, seed=1)
    assert len(folds) == 5
    allidx = np.sort(np.concatenate(folds))
    np.testing.assert_array_equal(allidx, np.arange(23))
    assert max(map(len, folds)) - min(map(len, folds)) <= 1
    with pytest.raises(TooFewRecords):
        kfold_indices(3, 5, seed=0)


class ConstantModel:
    """Predicts survival everywhere; stands in for an artifact."""


def constant_fit(spec, train, valid):
    from censurv.models import ModelSpec
    from censurv.kernel import ParamStore
    store = ParamStore()
    store.add("theta", np.full((train.grid.m, train.d_x), 0.0))
    store.params["theta"][:, 0] = -30.0     # every patient survives the grid
    return ModelArtifact(ModelSpec(family="crf"), store, train.grid, train.attribute_names,
                         train.context_names, train.context_kind, {})


def test_constant_model_kfold_matches_base_rates():
    rng = np.random.default_rng(4)
    t = rng.uniform(0, 10, 50)
    ev = rng.random(50) < 0.7
    d = make_dataset(t, ev, grid=GRID)
    mean, folds = kfold_eval("crf", d, k=5, seed=2, fit_fn=constant_fit)
    taus = {q: temporal_quantile(d, q) for q in (0.25, 0.5, 0.75)}
    for rep, idx in zip(folds, kfold_indices(50, 5, 2)):
        status = status_at(t[idx], ev[idx], taus[0.5])
        known = status[status >= 0]
        assert rep.acc50 == pytest.approx(100 * known.mean())
    assert mean.acc50 == pytest.approx(np.mean([r.acc50 for r in folds]))
    assert mean.split == "mean" and len(folds) == 5


def test_leave_one_out():
    rng = np.random.default_rng(5)
    d = make_dataset(rng.uniform(0, 10, 10), np.ones(10), grid=GRID)
    calls = []

    def fit_fn(spec, train, valid):
        calls.append((len(train), len(valid)))
        return constant_fit(spec, train, valid)

    mean, folds = kfold_eval("crf", d, k=10, seed=0, fit_fn=fit_fn)
    assert len(folds) == 10 and all(r.n == 1 for r in folds)
    assert calls == [(8, 1)] * 10
    assert 0.0 <= mean.acc50 <= 100.0


def test_reports_csv():
    rep = EvalReport(84.4, 89.3, 79.2, 0.59, model="crf", split="test")
    assert reports_csv([rep]) == "model,acc25,acc50,acc75,rae,split\ncrf,84.4000,89.3000,79.2000,0.5900,test\n"
