"""
Reverse-mode building blocks and gradient checking
==================================================

Every op returns its output and a pullback closure.  Chaining pullbacks in
reverse gives gradients; ``grad_check`` compares them with central
differences.
"""

import numpy as np

from censurv.kernel import ParamStore, attention_combine, dense, grad_check, lstm_step, sgd_step

rng = np.random.default_rng(1)
H, K, d_x = 4, 3, 5

store = ParamStore()
store.add("W", rng.normal(size=(6, H)) * 0.5)
store.add("b", np.zeros(H))
store.add("lstm/Wx", rng.normal(size=(H, 4 * H)) * 0.3)
store.add("lstm/Wh", rng.normal(size=(H, 4 * H)) * 0.3)
store.add("lstm/b", np.zeros(4 * H))
store.add("att", rng.normal(size=(H, K)))
store.add("dict", rng.normal(size=(K, d_x)))
c = rng.normal(size=(2, 6))
target = rng.normal(size=(2, d_x))


def loss(s):
    # context -> dense -> one LSTM step -> attention over dictionary atoms
    z, pb_dense = dense(c, s["W"], s["b"], "tanh")
    zero = np.zeros((2, H))
    (h, _), pb_lstm = lstm_step(z, (zero, zero), {k: s["lstm/" + k] for k in ("Wx", "Wh", "b")})
    (theta, _), pb_att = attention_combine(h, s["att"], s["dict"])
    r = theta - target
    d_h, d_att, d_dict = pb_att(r)
    d_z, _, _, g = pb_lstm(d_h)
    _, d_W, d_b = pb_dense(d_z)
    for name, grad in [("W", d_W), ("b", d_b), ("att", d_att), ("dict", d_dict)]:
        s.accumulate(name, grad)
    for k, grad in g.items():
        s.accumulate("lstm/" + k, grad)
    return 0.5 * float(np.sum(r * r))


report = grad_check(loss, store)
print(f"max relative error over {report.n_checked} coordinates: {report.max_rel_error:.2e}")

###############################################################################
# A few SGD steps with momentum drive the loss down.
for step in range(201):
    value = loss(store)
    if step % 50 == 0:
        print(f"step {step:3d}  loss {value:.5f}")
    sgd_step(store, lr=0.05, momentum=0.9)
