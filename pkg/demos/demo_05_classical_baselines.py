"""
Cox and Aalen baselines
=======================

The two classical models use the same attributes and produce curves on the
same grid, so they slot into the same evaluation.
"""

import numpy as np

from censurv.metrics import evaluate
from censurv.models import ModelSpec, explain, fit, predict_survival_batch
from censurv.pipelines import SyntheticSpec, gen_synthetic, split_dataset

data, _ = gen_synthetic(SyntheticSpec(n=3000, d_x=6, d_c=6, m=15, censoring_rate=0.3, seed=5))
train, _, test = split_dataset(data, (2500, 0, 500), seed=0)

cox = fit(ModelSpec(family="cox"), train)
print("Cox beta (bias slot is 0):", np.round(cox.params["beta"], 3))
print("Newton iterations:", cox.metadata["iterations"])

aalen = fit(ModelSpec(family="aalen"), train)
print("Aalen event times used:", aalen.metadata["n_event_times"])
print("Aalen increments summed per interval, first 3 intervals:")
print(np.round(explain(aalen, test.records[0]).thetas[:3], 4))

###############################################################################
for model in (cox, aalen):
    S = predict_survival_batch(model, test)
    rep = evaluate(model, test, split="test")
    print(f"{model.family:6s} mean S at cap {S[:, -1].mean():.3f}  "
          f"Acc@25/50/75 {rep.acc25:.1f}/{rep.acc50:.1f}/{rep.acc75:.1f}  RAE {rep.rae:.3f}")
