"""Uniform fit / predict / explain interface over all model families."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import Dataset, PatientRecord, TimeGrid
from ..crf import ExplanationSet, PairwisePotentials, batch_survival_curves
from ..errors import (DimMismatch, Diverged, ExplanationUnavailable, IncompatibleContext,
                      SurvivalError)
from ..kernel import ParamStore, params_from_bytes, params_to_bytes, sgd_step
from .aalen import AalenFit, aalen_fit, aalen_interval_increments, aalen_survival
from .cox import CoxFit, cox_fit, cox_survival
from .neural import Network
from .spec import CEN_FAMILIES, NEURAL_FAMILIES, ModelSpec

log = logging.getLogger(__name__)

ARTIFACT_FORMAT = "censurv-artifact"


@dataclass(eq=False)
class ModelArtifact:
    spec: ModelSpec
    params: ParamStore
    grid: TimeGrid
    attribute_names: tuple
    context_names: tuple
    context_kind: str
    metadata: dict = field(default_factory=dict)

    @property
    def family(self) -> str:
        return self.spec.family

    @property
    def m(self) -> int:
        return self.grid.m

    def network(self) -> Network:
        return Network(self.spec, self.grid.m, len(self.attribute_names), len(self.context_names))

    def cox(self) -> CoxFit:
        p = self.params
        return CoxFit(p["beta"].copy(), float(p["offset"][0]), p["baseline_times"].copy(),
                      p["baseline_cumhaz"].copy(), np.ones_like(p["beta"]))

    def aalen(self) -> AalenFit:
        return AalenFit(self.params["event_times"].copy(), self.params["increments"].copy())

    def to_bytes(self) -> bytes:
        extra = {"artifact": {
            "format": ARTIFACT_FORMAT,
            "version": 1,
            "spec": self.spec.to_dict(),
            "grid": self.grid.boundaries.tolist(),
            "attribute_names": list(self.attribute_names),
            "context_names": list(self.context_names),
            "context_kind": self.context_kind,
            "metadata": self.metadata,
        }}
        return params_to_bytes(self.params, extra)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelArtifact":
        store, manifest = params_from_bytes(raw)
        a = manifest.get("artifact")
        if not a or a.get("format") != ARTIFACT_FORMAT:
            raise SurvivalError("parameter file carries no model manifest", code="MALFORMED_ARTIFACT")
        return cls(ModelSpec.from_dict(a["spec"]), store, TimeGrid(a["grid"]),
                   tuple(a["attribute_names"]), tuple(a["context_names"]), a["context_kind"],
                   a["metadata"])


def save_artifact(artifact: ModelArtifact, path) -> None:
    Path(path).write_bytes(artifact.to_bytes())


def load_artifact(path) -> ModelArtifact:
    return ModelArtifact.from_bytes(Path(path).read_bytes())


def check_context(family: str, context_kind: str) -> None:
    need = {"mlp-crf": "static", "mlp-cen": "static", "lstm-crf": "series", "lstm-cen": "series"}.get(family)
    if need is not None and context_kind != need:
        raise IncompatibleContext(f"{family} needs {need} context, dataset has {context_kind}")


def _arrays(d: Dataset):
    lo, hi = d.feasible_bounds()
    return d.attributes(), d.contexts(), lo, hi


def _nonbias(names):
    return [i for i, n in enumerate(names) if n != "bias"]


def fit(spec: ModelSpec, train: Dataset, valid: Dataset | None = None, log_fn=None) -> ModelArtifact:
    """Train a model of ``spec.family`` on ``train``.

    CRF and CEN families minimize the mean censored negative log-likelihood
    with minibatch SGD and keep the parameters with the best validation loss
    (early stopping).  Cox and Aalen are fitted in closed form / by Newton's
    method on ``train`` alone.

    ``log_fn(epoch, train_loss, valid_loss)`` is called after every epoch.
    """
    check_context(spec.family, train.context_kind)
    if valid is not None and valid.context_kind != train.context_kind:
        raise IncompatibleContext("train and validation context kinds differ")
    base = dict(grid=train.grid, attribute_names=train.attribute_names,
                context_names=train.context_names, context_kind=train.context_kind)
    if spec.family == "cox":
        cols = _nonbias(train.attribute_names)
        res = cox_fit(train.attributes()[:, cols], train.times(), train.events(), max_iter=spec.cox_max_iter)
        beta = np.zeros(train.d_x)
        beta[cols] = res.beta
        store = ParamStore()
        store.add("beta", beta)
        store.add("offset", [res.offset])
        store.add("baseline_times", res.baseline_times)
        store.add("baseline_cumhaz", res.baseline_cumhaz)
        meta = {"iterations": res.n_iter, "separation_detected": res.separation_detected,
                "partial_loglik": res.history[-1]}
        return ModelArtifact(spec, store, metadata=meta, **base)
    if spec.family == "aalen":
        res = aalen_fit(train.attributes(), train.times(), train.events())
        store = ParamStore()
        store.add("event_times", res.event_times)
        store.add("increments", res.increments.reshape(-1, train.d_x))
        return ModelArtifact(spec, store, metadata={"n_event_times": int(res.event_times.size),
                                                    "n_ridged": int(res.n_ridged)}, **base)
    return _fit_neural(spec, train, valid, base, log_fn)


def _fit_neural(spec, train, valid, base, log_fn):
    if len(train) == 0:
        raise SurvivalError("empty training set", code="EMPTY_DATASET")
    rng = np.random.default_rng(spec.seed)
    net = Network(spec, train.grid.m, train.d_x, train.d_c)
    store = net.init_params(rng)
    X, C, lo, hi = _arrays(train)
    has_valid = valid is not None and len(valid) > 0
    if has_valid:
        Xv, Cv, lov, hiv = _arrays(valid)

    def full_loss(s, Xa, Ca, la, ha):
        try:
            val = net.loss(s, Xa, Ca, la, ha, l2=0.0, with_grad=False)
        except SurvivalError as exc:
            if exc.code == "NON_FINITE":
                raise Diverged(str(exc)) from exc
            raise
        if not np.isfinite(val):
            raise Diverged("loss became non-finite")
        return val

    initial = full_loss(store, X, C, lo, hi)
    history = []
    best_val = np.inf
    best = store.copy()
    wait = 0
    steps = 0
    n = len(train)
    stop = False
    for epoch in range(1, spec.epochs + 1):
        perm = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = perm[start:start + spec.batch_size]
            try:
                loss = net.loss(store, X[idx], C[idx], lo[idx], hi[idx], l2=spec.l2)
                if not np.isfinite(loss):
                    raise Diverged(f"non-finite training loss at epoch {epoch}")
                sgd_step(store, spec.lr, spec.momentum, spec.weight_decay, spec.clip_norm)
            except SurvivalError as exc:
                if exc.code == "NON_FINITE":
                    raise Diverged(str(exc)) from exc
                raise
            steps += 1
            if spec.max_steps is not None and steps >= spec.max_steps:
                stop = True
                break
        tr = full_loss(store, X, C, lo, hi)
        va = full_loss(store, Xv, Cv, lov, hiv) if has_valid else tr
        history.append([epoch, tr, va])
        if log_fn is not None:
            log_fn(epoch, tr, va)
        log.debug("epoch %d train %.6f valid %.6f", epoch, tr, va)
        if va < best_val:
            best_val, best, wait = va, store.copy(), 0
        else:
            wait += 1
            if wait >= spec.patience:
                break
        if stop:
            break
    final = full_loss(best, X, C, lo, hi)
    meta = {"initial_train_loss": initial, "final_train_loss": final, "best_valid_loss": best_val,
            "epochs_run": len(history), "steps": steps, "history": history}
    for name in best.names():
        best.velocity[name][...] = 0.0
    return ModelArtifact(spec, best, metadata=meta, **base)


def _check_record_dims(artifact: ModelArtifact, X, C):
    if X.shape[-1] != len(artifact.attribute_names):
        raise DimMismatch(f"records have {X.shape[-1]} attributes, model expects {len(artifact.attribute_names)}")
    if artifact.family in NEURAL_FAMILIES and artifact.family != "crf":
        if C.shape[-1] != len(artifact.context_names):
            raise DimMismatch(f"context has {C.shape[-1]} variables, model expects {len(artifact.context_names)}")


def _stack(records):
    X = np.stack([r.attributes for r in records])
    C = np.stack([r.context for r in records])
    return X, C


def predict_survival_batch(artifact: ModelArtifact, data) -> np.ndarray:
    """Survival curves ``(n, m+1)`` for a Dataset or a sequence of records."""
    if isinstance(data, Dataset):
        if len(data) == 0:
            return np.zeros((0, artifact.m + 1))
        X, C = data.attributes(), data.contexts()
    else:
        X, C = _stack(list(data))
    _check_record_dims(artifact, X, C)
    if artifact.family == "cox":
        return cox_survival(artifact.cox(), X, artifact.grid)
    if artifact.family == "aalen":
        return aalen_survival(artifact.aalen(), X, artifact.grid)
    net = artifact.network()
    fwd = net.forward(artifact.params, X, C)
    return batch_survival_curves(fwd.U, net.pairwise_vector(artifact.params))


def predict_survival(artifact: ModelArtifact, record: PatientRecord) -> np.ndarray:
    return predict_survival_batch(artifact, [record])[0]


def cen_forward(spec: ModelSpec, params: ParamStore, context, m: int):
    """Per-interval explanations and attention maps from a context.

    ``context`` is one record's context (1-d static, 2-d series) or a batch
    of them.  Returns ``(thetas, alpha)`` shaped ``(m, d_x)`` and ``(m, K)``,
    with a leading batch axis when a batch was given.
    """
    if spec.family not in CEN_FAMILIES:
        raise ValueError(f"{spec.family} is not a CEN family")
    C = np.asarray(context, dtype=np.float64)
    single = C.ndim == (1 if spec.family == "mlp-cen" else 2)
    if single:
        C = C[None]
    d_x = params["dict"].shape[1]
    d_c = C.shape[-1]
    net = Network(spec, m, d_x, d_c)
    fwd = net.forward(params, np.zeros((C.shape[0], d_x)), C)
    if single:
        return fwd.thetas[0], fwd.alpha[0]
    return fwd.thetas, fwd.alpha


def explain(artifact: ModelArtifact, record: PatientRecord) -> ExplanationSet:
    """Per-interval attribute weights that drive this patient's prediction."""
    fam = artifact.family
    X = record.attributes[None]
    C = record.context[None]
    _check_record_dims(artifact, X, C)
    m = artifact.m
    if fam in ("mlp-crf", "lstm-crf"):
        raise ExplanationUnavailable(f"{fam} weighs latent features, not attributes")
    if fam == "crf":
        net = artifact.network()
        return ExplanationSet(artifact.params["theta"], _pairwise(net, artifact.params), scope="global")
    if fam == "cox":
        return ExplanationSet(np.tile(artifact.params["beta"], (m, 1)), scope="global")
    if fam == "aalen":
        return ExplanationSet(aalen_interval_increments(artifact.aalen(), artifact.grid), scope="global")
    thetas, alpha = cen_forward(artifact.spec, artifact.params, record.context, m)
    net = artifact.network()
    return ExplanationSet(thetas, _pairwise(net, artifact.params), scope="patient", attention=alpha)


def _pairwise(net, params):
    w = net.pairwise_vector(params)
    return PairwisePotentials.from_vector(w) if w is not None else PairwisePotentials()
