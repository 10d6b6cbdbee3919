"""
Patient-specific explanations from a contextual explanation network
===================================================================

The MLP-CEN encodes a patient's context, unrolls an LSTM over the output
intervals and, at each interval, mixes a small dictionary of linear
models.  The mixture is the explanation: it is exactly the linear model
that scored this patient.
"""

import tempfile
from pathlib import Path

import numpy as np

from censurv.crf import explanation_csv
from censurv.models import ModelSpec, explain, fit, predict_survival
from censurv.pipelines import SyntheticSpec, gen_synthetic, split_dataset
from censurv.svg import curve_svg, heatmap_svg

data, _ = gen_synthetic(SyntheticSpec(n=1500, d_x=6, d_c=6, m=12, K=4, family="cen", seed=4))
train, valid, test = split_dataset(data, (1200, 150, 150), seed=0)
model = fit(ModelSpec(family="mlp-cen", hidden=32, lstm_hidden=32, dict_size=4, epochs=60), train, valid)
print("best validation loss:", round(model.metadata["best_valid_loss"], 4))

record = test.records[0]
e = explain(model, record)
print("attention over atoms, first and last interval:")
print(np.round(e.attention[[0, -1]], 3))

# the explanation is the dictionary mixed by the reported attention
assert np.allclose(e.thetas, e.attention @ model.params["dict"])

names = list(model.attribute_names)
top = np.argsort(-np.abs(e.thetas).mean(axis=0))[:3]
print("most influential attributes:", [names[i] for i in top])
print(explanation_csv(e, names, rows=top))

###############################################################################
# Heatmap and survival curve, written as static SVG.
out = Path(tempfile.mkdtemp())
(out / "explanation.svg").write_text(heatmap_svg(e.thetas.T, names, title=record.id))
(out / "survival.svg").write_text(curve_svg(model.grid.boundaries, predict_survival(model, record)))
print("wrote", sorted(p.name for p in out.iterdir()), "to", out)
