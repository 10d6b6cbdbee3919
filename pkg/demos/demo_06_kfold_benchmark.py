"""
Cross-validated comparison of model families
============================================

Five-fold evaluation with horizons at the 25/50/75% quantiles of follow-up
time.  Output has the same layout as the ``censurv eval`` CSV.
"""

from censurv.metrics import kfold_eval, reports_csv
from censurv.models import ModelSpec
from censurv.pipelines import SyntheticSpec, gen_synthetic

data, _ = gen_synthetic(SyntheticSpec(n=1500, d_x=8, d_c=8, m=12, K=4, family="cen", seed=6))

rows = []
for family in ("cox", "aalen", "crf", "mlp-crf", "mlp-cen"):
    spec = ModelSpec(family=family, hidden=32, lstm_hidden=32, dict_size=4, epochs=40)
    mean, _ = kfold_eval(spec, data, k=5, seed=0)
    rows.append(mean)
print(reports_csv(rows), end="")
