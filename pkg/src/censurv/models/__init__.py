"""Model families: Cox, Aalen, CRF, MLP/LSTM-CRF and MLP/LSTM-CEN."""
from .aalen import AalenFit, aalen_fit, aalen_interval_increments, aalen_survival
from .api import (ModelArtifact, cen_forward, check_context, explain, fit, load_artifact,
                  predict_survival, predict_survival_batch, save_artifact)
from .cox import CoxFit, breslow_baseline_survival, cox_fit, cox_partial_likelihood, cox_survival
from .neural import Network
from .spec import CEN_FAMILIES, FAMILIES, NEURAL_FAMILIES, ModelSpec

__all__ = [
    "AalenFit", "aalen_fit", "aalen_interval_increments", "aalen_survival",
    "ModelArtifact", "cen_forward", "check_context", "explain", "fit", "load_artifact",
    "predict_survival", "predict_survival_batch", "save_artifact",
    "CoxFit", "breslow_baseline_survival", "cox_fit", "cox_partial_likelihood", "cox_survival",
    "Network", "CEN_FAMILIES", "FAMILIES", "NEURAL_FAMILIES", "ModelSpec",
]
