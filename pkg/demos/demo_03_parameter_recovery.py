"""
Recovering a known CRF from synthetic data
==========================================

Draw data from a CRF with known weights, fit the plain CRF family and
compare the learned weights with the truth.
"""

import numpy as np

from censurv.metrics import constant_baseline_acc, evaluate, temporal_quantile
from censurv.models import ModelSpec, fit
from censurv.pipelines import SyntheticSpec, gen_synthetic, split_dataset

data, truth = gen_synthetic(SyntheticSpec(n=5000, d_x=10, d_c=10, m=20, censoring_rate=0.3, seed=0))
print(f"{len(data)} records, censoring rate {1 - data.events().mean():.2f}, grid {data.grid.describe()}")

train, valid, test = split_dataset(data, (4000, 500, 500), seed=0)
model = fit(ModelSpec(family="crf", lr=0.05, patience=20), train, valid)
print("epochs run:", model.metadata["epochs_run"])

theta = model.params["theta"]
print("correlation with the true weights:", round(np.corrcoef(theta.ravel(), truth.thetas.ravel())[0, 1], 4))

###############################################################################
# Held-out accuracy at the median follow-up time against the best constant guess.
report = evaluate(model, test, split="test")
tau = temporal_quantile(test, 0.5)
print(f"Acc@50 {report.acc50:.1f}  constant {constant_baseline_acc(test, tau):.1f}  RAE {report.rae:.3f}")
