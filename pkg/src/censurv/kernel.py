"""Small reverse-mode toolkit for the neural encoders.

Each op returns its output together with a ``pullback`` closure that maps the
upstream gradient to gradients for every input.  Sequences are unrolled by
the caller, who keeps the pullbacks and replays them in reverse.  All ops
accept a leading batch dimension.

Parameters live in a :class:`ParamStore`; :func:`sgd_step` updates it and
:func:`grad_check` compares stored gradients with central differences.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ShapeMismatch, StaleGradients, SurvivalError

__all__ = [
    "dense",
    "lstm_step",
    "attention_combine",
    "softmax",
    "ParamStore",
    "sgd_step",
    "clip_gradients",
    "grad_check",
    "GradCheckReport",
    "glorot_uniform",
    "params_to_bytes",
    "params_from_bytes",
]

ACTIVATIONS = ("identity", "tanh", "relu")


def _finite(arr, op):
    if not np.all(np.isfinite(arr)):
        raise SurvivalError(f"non-finite values produced by {op}", code="NON_FINITE")
    return arr


def _check(cond, msg):
    if not cond:
        raise ShapeMismatch(msg)


def softmax(z, axis=-1):
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def dense(x, W, b, activation="identity"):
    """``act(x @ W + b)``.

    Returns ``(out, pullback)`` with ``pullback(d_out) -> (d_x, d_W, d_b)``.
    """
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    x = np.asarray(x)
    _check(W.ndim == 2 and x.shape[-1] == W.shape[0], f"dense: input {x.shape} vs W {W.shape}")
    _check(b.shape == (W.shape[1],), f"dense: bias {b.shape} vs W {W.shape}")
    pre = x @ W + b
    if activation == "tanh":
        out = np.tanh(pre)
    elif activation == "relu":
        out = np.maximum(pre, 0.0)
    else:
        out = pre
    _finite(out, "dense")

    def pullback(d_out):
        if activation == "tanh":
            d_pre = d_out * (1.0 - out * out)
        elif activation == "relu":
            d_pre = d_out * (pre > 0)
        else:
            d_pre = d_out
        x2 = x.reshape(-1, x.shape[-1])
        d2 = d_pre.reshape(-1, W.shape[1])
        return d_pre @ W.T, x2.T @ d2, d2.sum(axis=0)

    return out, pullback


def lstm_step(x, state, params):
    """One LSTM cell step.

    ``params`` maps ``Wx`` (d_in, 4H), ``Wh`` (H, 4H) and ``b`` (4H,), gate
    blocks ordered input, forget, candidate, output.  ``state`` is ``(h, c)``.

    Returns ``((h_new, c_new), pullback)`` with
    ``pullback(d_h_new, d_c_new) -> (d_x, d_h, d_c, {"Wx", "Wh", "b"})``.
    """
    h, c = state
    Wx, Wh, b = params["Wx"], params["Wh"], params["b"]
    H = Wh.shape[0]
    _check(Wh.shape == (H, 4 * H) and b.shape == (4 * H,), f"lstm: Wh {Wh.shape}, b {b.shape}")
    _check(Wx.ndim == 2 and Wx.shape[1] == 4 * H and x.shape[-1] == Wx.shape[0],
           f"lstm: x {x.shape} vs Wx {Wx.shape}")
    _check(h.shape[-1] == H and c.shape == h.shape, f"lstm: state {h.shape}/{c.shape}, hidden {H}")

    z = x @ Wx + h @ Wh + b
    i = expit(z[..., :H])
    f = expit(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = expit(z[..., 3 * H:])
    c_new = f * c + i * g
    tc = np.tanh(c_new)
    h_new = o * tc
    _finite(h_new, "lstm_step")
    _finite(c_new, "lstm_step")

    def pullback(d_h_new, d_c_new=None):
        d_c_total = d_h_new * o * (1.0 - tc * tc)
        if d_c_new is not None:
            d_c_total = d_c_total + d_c_new
        d_o = d_h_new * tc
        d_i = d_c_total * g
        d_g = d_c_total * i
        d_f = d_c_total * c
        dz = np.concatenate([
            d_i * i * (1.0 - i),
            d_f * f * (1.0 - f),
            d_g * (1.0 - g * g),
            d_o * o * (1.0 - o),
        ], axis=-1)
        x2 = x.reshape(-1, x.shape[-1])
        h2 = h.reshape(-1, H)
        dz2 = dz.reshape(-1, 4 * H)
        grads = {"Wx": x2.T @ dz2, "Wh": h2.T @ dz2, "b": dz2.sum(axis=0)}
        return dz @ Wx.T, dz @ Wh.T, d_c_total * f, grads

    return (h_new, c_new), pullback


def attention_combine(h, W_att, D):
    """Soft attention over a dictionary of explanation atoms.

    ``alpha = softmax(h @ W_att)`` and ``theta = alpha @ D``.

    Returns ``((theta, alpha), pullback)`` with
    ``pullback(d_theta, d_alpha=None) -> (d_h, d_W_att, d_D)``.
    """
    _check(W_att.ndim == 2 and h.shape[-1] == W_att.shape[0], f"attention: h {h.shape} vs W {W_att.shape}")
    _check(D.ndim == 2 and D.shape[0] == W_att.shape[1] and D.shape[0] >= 1,
           f"attention: dictionary {D.shape} vs W {W_att.shape}")
    alpha = softmax(h @ W_att)
    theta = alpha @ D
    _finite(theta, "attention_combine")

    def pullback(d_theta, d_alpha=None):
        da = d_theta @ D.T
        if d_alpha is not None:
            da = da + d_alpha
        d_logits = alpha * (da - np.sum(da * alpha, axis=-1, keepdims=True))
        a2 = alpha.reshape(-1, alpha.shape[-1])
        h2 = h.reshape(-1, h.shape[-1])
        return (d_logits @ W_att.T, h2.T @ d_logits.reshape(a2.shape),
                a2.T @ d_theta.reshape(-1, D.shape[1]))

    return (theta, alpha), pullback


def glorot_uniform(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


@dataclass
class ParamStore:
    """Named parameters with gradient and momentum slots.

    A gradient slot is ``None`` until something is accumulated into it.
    """

    params: dict = field(default_factory=dict)
    grads: dict = field(default_factory=dict)
    velocity: dict = field(default_factory=dict)

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        self.params[name] = np.ascontiguousarray(np.array(value, dtype=np.float64))
        self.grads[name] = None
        self.velocity[name] = np.zeros_like(self.params[name])
        return self.params[name]

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return list(self.params)

    def accumulate(self, name, grad):
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != self.params[name].shape:
            raise ShapeMismatch(f"gradient for {name!r} has shape {grad.shape}, "
                                f"parameter has {self.params[name].shape}")
        if self.grads[name] is None:
            self.grads[name] = grad.copy()
        else:
            self.grads[name] += grad

    def zero_grad(self):
        for name in self.params:
            self.grads[name] = np.zeros_like(self.params[name])

    def clear_grad(self):
        for name in self.params:
            self.grads[name] = None

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, value in self.params.items():
            out.add(name, value)
            out.velocity[name] = self.velocity[name].copy()
        return out

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()]) if self.params else np.zeros(0)


def clip_gradients(store: ParamStore, max_norm: float) -> float:
    """Scale gradients in place so their global norm is at most ``max_norm``."""
    total = np.sqrt(sum(float(np.sum(g * g)) for g in store.grads.values() if g is not None))
    if total > max_norm:
        scale = max_norm / total
        for name, g in store.grads.items():
            if g is not None:
                store.grads[name] = g * scale
    return total


def sgd_step(store: ParamStore, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
             clip_norm: float | None = None) -> ParamStore:
    """SGD with momentum and L2 weight decay; clears the gradient slots afterwards."""
    stale = [name for name, g in store.grads.items() if g is None]
    if stale:
        raise StaleGradients(f"no gradient for {', '.join(stale)}")
    if clip_norm is not None:
        clip_gradients(store, clip_norm)
    for name, p in store.params.items():
        v = store.velocity[name]
        # overflow is reported as NON_FINITE below, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            v *= momentum
            v += store.grads[name] + weight_decay * p
            p -= lr * v
        _finite(p, "sgd_step")
    store.clear_grad()
    return store


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_param: dict
    tolerance: float
    n_checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(f: Callable[[ParamStore], float], store: ParamStore, step: float = 1e-6,
               tolerance: float = 1e-5, max_per_tensor: int | None = 64, seed: int = 0,
               floor: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``f(store)`` must return the scalar value and leave d value / d param in
    ``store.grads``.  Tensors larger than ``max_per_tensor`` entries are
    checked on a seeded sample of coordinates.  The relative error of a
    coordinate is ``|a - n| / max(|a|, |n|, floor)``.
    """
    store.clear_grad()
    f(store)
    analytic = {name: (g.copy() if g is not None else np.zeros_like(store.params[name]))
                for name, g in store.grads.items()}
    rng = np.random.default_rng(seed)
    per_param = {}
    n_checked = 0
    for name, p in store.params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = np.sort(rng.choice(flat.size, size=max_per_tensor, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = f(store)
            flat[i] = orig - step
            fm = f(store)
            flat[i] = orig
            num = (fp - fm) / (2.0 * step)
            a = analytic[name].reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), floor)
            worst = max(worst, err)
            n_checked += 1
        per_param[name] = worst
    store.clear_grad()
    return GradCheckReport(max(per_param.values(), default=0.0), per_param, tolerance, n_checked)


_MAGIC = b"CSRVPS1\n"


def params_to_bytes(store: ParamStore, manifest_extra: dict | None = None) -> bytes:
    """Serialize to ``magic | u64 header length | JSON header | little-endian blob``."""
    entries = []
    chunks = []
    offset = 0
    for name, p in store.params.items():
        data = np.ascontiguousarray(p, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(p.shape), "dtype": "<f8",
                        "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = {"tensors": entries}
    if manifest_extra:
        header.update(manifest_extra)
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    return _MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(chunks)


def params_from_bytes(raw: bytes) -> tuple[ParamStore, dict]:
    """Inverse of :func:`params_to_bytes`; returns the store and the full manifest."""
    if not raw.startswith(_MAGIC):
        raise SurvivalError("not a parameter container", code="MALFORMED_ARTIFACT")
    pos = len(_MAGIC)
    (hlen,) = struct.unpack("<Q", raw[pos:pos + 8])
    pos += 8
    header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    blob = raw[pos + hlen:]
    store = ParamStore()
    for ent in header["tensors"]:
        arr = np.frombuffer(blob, dtype=ent["dtype"], count=ent["nbytes"] // 8, offset=ent["offset"])
        store.add(ent["name"], arr.reshape(ent["shape"]).astype(np.float64))
    return store, header
