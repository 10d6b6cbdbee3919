from __future__ import annotations

from dataclasses import asdict, dataclass, fields

FAMILIES = ("cox", "aalen", "crf", "mlp-crf", "lstm-crf", "mlp-cen", "lstm-cen")
NEURAL_FAMILIES = ("crf", "mlp-crf", "lstm-crf", "mlp-cen", "lstm-cen")
CEN_FAMILIES = ("mlp-cen", "lstm-cen")


@dataclass(frozen=True)
class ModelSpec:
    """Model family plus hyperparameters.

    ``pairwise=None`` picks the family default: on for the CEN families, off
    for the rest.  ``l2`` is a penalty inside the training objective;
    ``weight_decay`` is applied by the optimizer.  ``max_steps`` caps the
    number of optimizer updates regardless of epochs.
    """

    family: str = "crf"
    hidden: int = 64
    lstm_hidden: int = 64
    dict_size: int = 16
    pairwise: bool | None = None
    activation: str = "tanh"
    l2: float = 0.0
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 200
    patience: int = 10
    clip_norm: float | None = 5.0
    max_steps: int | None = None
    cox_max_iter: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.family in CEN_FAMILIES and self.dict_size < 1:
            raise ValueError("dict_size must be >= 1 for CEN families")
        for name in ("hidden", "lstm_hidden", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.patience < 0 or self.lr <= 0:
            raise ValueError("patience must be >= 0 and lr > 0")

    @property
    def use_pairwise(self) -> bool:
        if self.pairwise is None:
            return self.family in CEN_FAMILIES
        return bool(self.pairwise)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown model spec keys: {', '.join(unknown)}")
        return cls(**d)
