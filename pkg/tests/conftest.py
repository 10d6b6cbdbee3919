import numpy as np
import pytest

from censurv import Dataset, PatientRecord, SurvivalLabel, TimeGrid


def make_dataset(times, events, X=None, grid=None, context=None):
    times = np.asarray(times, dtype=float)
    n = times.size
    if X is None:
        X = np.ones((n, 1))
    X = np.asarray(X, dtype=float)
    if context is None:
        context = np.zeros((n, 1))
    grid = grid or TimeGrid.uniform(10, 1.0)
    names = ["bias"] + [f"x{i}" for i in range(1, X.shape[1])]
    recs = [PatientRecord(f"r{i}", X[i], context[i], SurvivalLabel(times[i], bool(events[i])))
            for i in range(n)]
    return Dataset(recs, grid, names, [f"c{i}" for i in range(np.shape(context)[-1])])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
