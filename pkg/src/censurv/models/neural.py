"""CRF-headed networks: plain CRF, MLP/LSTM-CRF and MLP/LSTM-CEN.

Every family reduces to a matrix of unary terms ``U[n, t]`` fed to the
structured likelihood.  The families differ in where ``U`` comes from:

``crf``       ``U = x . theta^t`` with one global ``theta``.
``mlp-crf``   ``U = [1, mlp(c)] . theta^t``, CRF weights on latent features.
``lstm-crf``  ``U = [1, h^t] . theta^t`` where ``h^t`` is the output LSTM state.
``*-cen``     ``U = x . theta_n^t`` with ``theta_n^t = softmax(h^t W) D``.

The output LSTM runs over the ``m`` intervals and receives the encoded
context at every step: the MLP embedding for static context, the final
state of an input LSTM for series context.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..crf import batch_log_likelihood
from ..kernel import ParamStore, attention_combine, dense, glorot_uniform, lstm_step
from .spec import ModelSpec

_LSTM_KEYS = ("Wx", "Wh", "b")


@dataclass
class Forward:
    U: np.ndarray
    backward: Callable[[np.ndarray], None]
    thetas: np.ndarray | None = None
    alpha: np.ndarray | None = None


class Network:
    def __init__(self, spec: ModelSpec, m: int, d_x: int, d_c: int):
        self.spec = spec
        self.family = spec.family
        self.m, self.d_x, self.d_c = m, d_x, d_c
        self.encoder = {"crf": None, "mlp-crf": "mlp", "mlp-cen": "mlp",
                        "lstm-crf": "lstm", "lstm-cen": "lstm"}[spec.family]
        self.head = "cen" if spec.family.endswith("cen") else "crf"
        self.uses_output_lstm = self.family in ("lstm-crf", "mlp-cen", "lstm-cen")
        self.pairwise = spec.use_pairwise

    # parameters ---------------------------------------------------------

    def _add_lstm(self, store, prefix, d_in, H, rng):
        store.add(f"{prefix}/Wx", glorot_uniform(rng, d_in, 4 * H))
        store.add(f"{prefix}/Wh", glorot_uniform(rng, H, 4 * H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0
        store.add(f"{prefix}/b", b)

    def init_params(self, rng: np.random.Generator) -> ParamStore:
        s = self.spec
        store = ParamStore()
        enc_dim = None
        if self.encoder == "mlp":
            store.add("enc/W", glorot_uniform(rng, self.d_c, s.hidden))
            store.add("enc/b", np.zeros(s.hidden))
            enc_dim = s.hidden
        elif self.encoder == "lstm":
            self._add_lstm(store, "enc", self.d_c, s.lstm_hidden, rng)
            enc_dim = s.lstm_hidden
        if self.uses_output_lstm:
            self._add_lstm(store, "out", enc_dim, s.lstm_hidden, rng)

        if self.family == "crf":
            store.add("theta", np.zeros((self.m, self.d_x)))
        elif self.family == "mlp-crf":
            store.add("theta", glorot_uniform(rng, s.hidden + 1, self.m).T)
        elif self.family == "lstm-crf":
            store.add("theta", glorot_uniform(rng, s.lstm_hidden + 1, self.m).T)
        else:
            store.add("att/W", rng.uniform(-0.01, 0.01, size=(s.lstm_hidden, s.dict_size)))
            store.add("dict", rng.normal(0.0, 0.1, size=(s.dict_size, self.d_x)))
        if self.pairwise:
            store.add("pairwise", np.zeros(3))
        return store

    # pieces ----------------------------------------------------------------

    @staticmethod
    def _lstm_params(store, prefix):
        return {k: store[f"{prefix}/{k}"] for k in _LSTM_KEYS}

    def _unroll(self, params, inputs, steps, repeat):
        """Run an LSTM; ``inputs`` is (n, T, d) or, with ``repeat``, (n, d) fed every step."""
        n = inputs.shape[0]
        H = params["Wh"].shape[0]
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        hs, pbs = [], []
        for t in range(steps):
            x_t = inputs if repeat else inputs[:, t, :]
            (h, c), pb = lstm_step(x_t, (h, c), params)
            hs.append(h)
            pbs.append(pb)
        return np.stack(hs, axis=1), pbs

    @staticmethod
    def _unroll_back(pbs, d_hs, in_shape, repeat):
        """Backprop through an unrolled LSTM; ``d_hs`` is (n, T, H) or None for last-state only."""
        d_h_next = None
        d_c_next = None
        grads = None
        d_in = np.zeros(in_shape)
        for t in range(len(pbs) - 1, -1, -1):
            d_h = d_hs[:, t, :] if d_hs.ndim == 3 else (d_hs if t == len(pbs) - 1 else 0.0)
            if d_h_next is not None:
                d_h = d_h + d_h_next
            d_x, d_h_next, d_c_next, g = pbs[t](d_h, d_c_next)
            if repeat:
                d_in += d_x
            else:
                d_in[:, t, :] = d_x
            if grads is None:
                grads = g
            else:
                for k in grads:
                    grads[k] = grads[k] + g[k]
        return d_in, grads

    # forward -----------------------------------------------------------

    def forward(self, store: ParamStore, X, C) -> Forward:
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[0]
        m = self.m

        enc_back = None
        enc_out = None
        if self.encoder == "mlp":
            enc_out, pb_mlp = dense(C, store["enc/W"], store["enc/b"], self.spec.activation)

            def enc_back(d):
                _, dW, db = pb_mlp(d)
                store.accumulate("enc/W", dW)
                store.accumulate("enc/b", db)
        elif self.encoder == "lstm":
            C = np.asarray(C, dtype=np.float64)
            enc_params = self._lstm_params(store, "enc")
            hs_in, pbs_in = self._unroll(enc_params, C, C.shape[1], repeat=False)
            enc_out = hs_in[:, -1, :]

            def enc_back(d):
                _, g = self._unroll_back(pbs_in, d, C.shape, repeat=False)
                for k in _LSTM_KEYS:
                    store.accumulate(f"enc/{k}", g[k])

        hs = out_back = None
        if self.uses_output_lstm:
            out_params = self._lstm_params(store, "out")
            hs, pbs_out = self._unroll(out_params, enc_out, m, repeat=True)

            def out_back(d_hs):
                d_in, g = self._unroll_back(pbs_out, d_hs, enc_out.shape, repeat=True)
                for k in _LSTM_KEYS:
                    store.accumulate(f"out/{k}", g[k])
                enc_back(d_in)

        if self.family == "crf":
            theta = store["theta"]
            U = X @ theta.T

            def backward(dU):
                store.accumulate("theta", dU.T @ X)
            return Forward(U, backward)

        if self.family == "mlp-crf":
            theta = store["theta"]
            Z1 = np.concatenate([np.ones((n, 1)), enc_out], axis=1)
            U = Z1 @ theta.T

            def backward(dU):
                store.accumulate("theta", dU.T @ Z1)
                enc_back((dU @ theta)[:, 1:])
            return Forward(U, backward)

        if self.family == "lstm-crf":
            theta = store["theta"]
            H1 = np.concatenate([np.ones((n, m, 1)), hs], axis=2)
            U = np.einsum("nth,th->nt", H1, theta)

            def backward(dU):
                store.accumulate("theta", np.einsum("nt,nth->th", dU, H1))
                out_back(dU[:, :, None] * theta[None, :, 1:])
            return Forward(U, backward)

        (thetas, alpha), pb_att = attention_combine(hs, store["att/W"], store["dict"])
        U = np.einsum("ntd,nd->nt", thetas, X)

        def backward(dU):
            d_thetas = dU[:, :, None] * X[:, None, :]
            d_hs, dW, dD = pb_att(d_thetas)
            store.accumulate("att/W", dW)
            store.accumulate("dict", dD)
            out_back(d_hs)
        return Forward(U, backward, thetas=thetas, alpha=alpha)

    # objective ---------------------------------------------------------

    def loss(self, store: ParamStore, X, C, lo, hi, l2=0.0, with_grad=True) -> float:
        """Mean negative log-likelihood plus ``0.5 * l2 * ||params||^2``.

        With ``with_grad`` the gradients are accumulated into ``store``.
        """
        fwd = self.forward(store, X, C)
        w = store["pairwise"] if self.pairwise else None
        logp, dU, dw = batch_log_likelihood(fwd.U, w, lo, hi)
        n = logp.size
        loss = -float(np.mean(logp))
        if with_grad:
            fwd.backward(-dU / n)
            if self.pairwise:
                store.accumulate("pairwise", -dw.sum(axis=0) / n)
        if l2:
            for name, p in store.params.items():
                loss += 0.5 * l2 * float(np.sum(p * p))
                if with_grad:
                    store.accumulate(name, l2 * p)
        return loss

    def pairwise_vector(self, store):
        return store["pairwise"] if self.pairwise else None
