"""Domain types shared across the package.

Time is discretized by a :class:`TimeGrid` of ``m`` right-open intervals.
A patient who dies inside interval ``i`` (1-indexed) has outcome index
``k = i - 1``: the number of intervals survived.  ``k = m`` means the patient
outlived the whole grid.  Censored patients carry ``censored_at = j``, meaning
they are known to be alive through interval ``j + 1``; the feasible outcomes
are then ``j + 1 .. m``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NegativeTime, SurvivalError

__all__ = [
    "TimeGrid",
    "SurvivalLabel",
    "Outcome",
    "PatientRecord",
    "Dataset",
    "Violation",
    "to_outcome",
    "validate_dataset",
    "save_dataset",
    "load_dataset",
    "dataset_to_lines",
    "dataset_from_lines",
]


def _frozen_array(values, ndim=None):
    arr = np.array(values, dtype=np.float64, copy=True)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Partition ``[0, boundaries[-1])`` into ``m`` right-open intervals (days)."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = _frozen_array(self.boundaries, ndim=1)
        if b.size < 2:
            raise ValueError("a grid needs at least one interval")
        if b[0] != 0.0:
            raise ValueError("grid must start at 0")
        if not np.all(np.isfinite(b)) or np.any(np.diff(b) <= 0):
            raise ValueError("grid boundaries must be finite and strictly increasing")
        object.__setattr__(self, "boundaries", b)

    @classmethod
    def uniform(cls, m: int, width: float) -> "TimeGrid":
        return cls(np.arange(m + 1, dtype=np.float64) * width)

    @property
    def m(self) -> int:
        return self.boundaries.size - 1

    @property
    def cap(self) -> float:
        return float(self.boundaries[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.boundaries[:-1] + self.boundaries[1:])

    def interval_index(self, t):
        """0-based index of the interval containing ``t``; ``m`` past the cap."""
        return np.searchsorted(self.boundaries, t, side="right") - 1

    def describe(self) -> str:
        w = self.widths
        if np.allclose(w, w[0]):
            return f"{self.m}x{w[0]:g}d"
        return f"{self.m} intervals, cap {self.cap:g}d"

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.boundaries, other.boundaries)

    def __hash__(self):
        return hash(self.boundaries.tobytes())


@dataclass(frozen=True)
class SurvivalLabel:
    observed_time: float
    event_observed: bool

    def __post_init__(self):
        object.__setattr__(self, "observed_time", float(self.observed_time))
        object.__setattr__(self, "event_observed", bool(self.event_observed))


@dataclass(frozen=True)
class Outcome:
    """Discretized label.

    Exactly one of ``k`` (uncensored outcome index) and ``censored_at`` is set.
    """

    k: int | None = None
    censored_at: int | None = None

    def __post_init__(self):
        if (self.k is None) == (self.censored_at is None):
            raise ValueError("exactly one of k and censored_at must be set")

    @property
    def censored(self) -> bool:
        return self.censored_at is not None

    def feasible(self, m: int) -> tuple[int, int]:
        """Inclusive range ``(lo, hi)`` of outcome indices consistent with the label."""
        if self.censored:
            return self.censored_at + 1, m
        return self.k, self.k

    def sequence(self, m: int) -> np.ndarray:
        """Binary sequence ``y^1..y^m`` with ``y^t = 1`` iff ``t > k``."""
        if self.censored:
            raise ValueError("a censored outcome has no single sequence")
        return (np.arange(1, m + 1) > self.k).astype(np.int8)


def to_outcome(label: SurvivalLabel, grid: TimeGrid) -> Outcome:
    t = label.observed_time
    if t < 0:
        raise NegativeTime(f"observed_time={t}")
    if not math.isfinite(t):
        raise SurvivalError(f"observed_time must be finite, got {t}")
    idx = int(grid.interval_index(t))
    if label.event_observed and idx < grid.m:
        return Outcome(k=idx)
    # events past the cap carry no in-grid death; keep them as at-risk to the end
    return Outcome(censored_at=min(idx, grid.m - 1))


@dataclass(frozen=True, eq=False)
class PatientRecord:
    """One patient.

    ``context`` is 1-d for static context and ``(T, d_c)`` for series.
    ``attributes[0]`` is the constant bias term.
    """

    id: str
    attributes: np.ndarray
    context: np.ndarray
    label: SurvivalLabel

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "attributes", _frozen_array(self.attributes, ndim=1))
        object.__setattr__(self, "context", _frozen_array(self.context))


@dataclass(frozen=True)
class Violation:
    record_id: str | None
    rule: str
    detail: str = ""

    def __str__(self):
        where = f"record {self.record_id}" if self.record_id is not None else "dataset"
        return f"{where}: {self.rule}" + (f" ({self.detail})" if self.detail else "")


@dataclass(frozen=True, eq=False)
class Dataset:
    records: tuple
    grid: TimeGrid
    attribute_names: tuple
    context_names: tuple
    context_kind: str = "static"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))
        object.__setattr__(self, "context_names", tuple(self.context_names))
        if self.context_kind not in ("static", "series"):
            raise ValueError(f"context_kind must be 'static' or 'series', got {self.context_kind!r}")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def d_x(self) -> int:
        return len(self.attribute_names)

    @property
    def d_c(self) -> int:
        return len(self.context_names)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def _cached(self, key, build):
        if key not in self._cache:
            value = build()
            if isinstance(value, np.ndarray):
                value.setflags(write=False)
            self._cache[key] = value
        return self._cache[key]

    def attributes(self) -> np.ndarray:
        return self._cached("X", lambda: np.stack([r.attributes for r in self.records])
                            if self.records else np.zeros((0, self.d_x)))

    def contexts(self) -> np.ndarray:
        """Stack contexts into ``(n, d_c)`` or ``(n, T, d_c)``."""
        def build():
            if not self.records:
                return np.zeros((0, self.d_c))
            shapes = {r.context.shape for r in self.records}
            if len(shapes) != 1:
                raise SurvivalError("records have different context shapes", code="SHAPE_MISMATCH")
            return np.stack([r.context for r in self.records])
        return self._cached("C", build)

    def times(self) -> np.ndarray:
        return self._cached("t", lambda: np.array([r.label.observed_time for r in self.records], dtype=np.float64))

    def events(self) -> np.ndarray:
        return self._cached("e", lambda: np.array([r.label.event_observed for r in self.records], dtype=bool))

    def outcomes(self) -> list[Outcome]:
        return self._cached("o", lambda: [to_outcome(r.label, self.grid) for r in self.records])

    def feasible_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays ``lo, hi`` of the feasible outcome range per record."""
        def build():
            pairs = [o.feasible(self.grid.m) for o in self.outcomes()]
            lo = np.array([p[0] for p in pairs], dtype=np.int64).reshape(-1)
            hi = np.array([p[1] for p in pairs], dtype=np.int64).reshape(-1)
            lo.setflags(write=False)
            hi.setflags(write=False)
            return lo, hi
        return self._cached("bounds", build)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset([self.records[i] for i in indices], self.grid, self.attribute_names,
                       self.context_names, self.context_kind)

    def record(self, record_id: str) -> PatientRecord:
        for r in self.records:
            if r.id == str(record_id):
                return r
        raise KeyError(record_id)


def validate_dataset(d: Dataset) -> list[Violation]:
    """Check every type invariant; return the violations (empty when valid)."""
    out = []
    if not d.attribute_names or d.attribute_names[0] != "bias":
        out.append(Violation(None, "attribute_names[0] must be 'bias'"))
    if len(set(d.ids)) != len(d.records):
        out.append(Violation(None, "record ids must be unique"))
    ctx_ndim = 1 if d.context_kind == "static" else 2
    for r in d.records:
        x, c = r.attributes, r.context
        if x.shape != (d.d_x,):
            out.append(Violation(r.id, "attribute dimension", f"expected {d.d_x}, got {x.shape}"))
        elif x[0] != 1.0:
            out.append(Violation(r.id, "bias attribute must equal 1", f"got {float(x[0])!r}"))
        if c.ndim != ctx_ndim or c.shape[-1] != d.d_c:
            out.append(Violation(r.id, "context shape",
                                 f"expected {d.context_kind} with {d.d_c} variables, got {c.shape}"))
        if not np.all(np.isfinite(x)):
            out.append(Violation(r.id, "attribute values must be finite"))
        if not np.all(np.isfinite(c)):
            out.append(Violation(r.id, "context values must be finite"))
        t = r.label.observed_time
        if not (math.isfinite(t) and t >= 0):
            out.append(Violation(r.id, "observed_time must be finite and >= 0", f"got {float(t)!r}"))
    return out


FORMAT_TAG = "censurv-dataset"


def dataset_to_lines(d: Dataset) -> list[str]:
    header = {
        "format": FORMAT_TAG,
        "version": 1,
        "grid": d.grid.boundaries.tolist(),
        "attribute_names": list(d.attribute_names),
        "context_names": list(d.context_names),
        "context_kind": d.context_kind,
        "n_records": len(d),
        "n_events": int(d.events().sum()) if len(d) else 0,
    }
    lines = [json.dumps(header)]
    for r in d.records:
        lines.append(json.dumps({
            "id": r.id,
            "attributes": r.attributes.tolist(),
            "context": r.context.tolist(),
            "label": {"time": r.label.observed_time, "event": r.label.event_observed},
        }))
    return lines


def dataset_from_lines(lines: Sequence[str]) -> Dataset:
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise SurvivalError("empty dataset file", code="MALFORMED_DATASET")
    header = json.loads(lines[0])
    if header.get("format") != FORMAT_TAG:
        raise SurvivalError("not a censurv dataset file", code="MALFORMED_DATASET")
    records = []
    for ln in lines[1:]:
        obj = json.loads(ln)
        label = SurvivalLabel(obj["label"]["time"], obj["label"]["event"])
        records.append(PatientRecord(obj["id"], obj["attributes"], obj["context"], label))
    if len(records) != header["n_records"]:
        raise SurvivalError(f"header announces {header['n_records']} records, found {len(records)}",
                            code="MALFORMED_DATASET")
    return Dataset(records, TimeGrid(header["grid"]), header["attribute_names"],
                   header["context_names"], header["context_kind"])


def save_dataset(d: Dataset, path) -> None:
    Path(path).write_text("\n".join(dataset_to_lines(d)) + "\n", encoding="utf-8")


def load_dataset(path) -> Dataset:
    return dataset_from_lines(Path(path).read_text(encoding="utf-8").splitlines())
