"""Turn raw tables into :class:`~censurv.core.Dataset` objects.

Three sources are supported: SUPPORT2-style flat CSV tables (static
context), PhysioNet-2012-style per-patient measurement files (series
context), and a synthetic generator with known ground truth.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import Dataset, PatientRecord, SurvivalLabel, TimeGrid
from .crf import scores_from_unary
from .errors import IngestError
from .kernel import softmax

__all__ = [
    "IngestConfig",
    "SyntheticSpec",
    "SyntheticTruth",
    "ingest_support2",
    "ingest_physionet",
    "gen_synthetic",
    "split_dataset",
    "read_csv_rows",
    "SUPPORT2_CATEGORICAL",
    "SUPPORT2_LEAKAGE",
    "PHYSIONET_VARIABLES",
]

SUPPORT2_CATEGORICAL = ("sex", "dzgroup", "dzclass", "income", "race", "ca", "dnr", "sfdm2")
SUPPORT2_LEAKAGE = ("death", "d.time", "hospdead")

PHYSIONET_VARIABLES = (
    "Albumin", "ALP", "ALT", "AST", "Bilirubin", "BUN", "Cholesterol", "Creatinine",
    "DiasABP", "FiO2", "GCS", "Glucose", "HCO3", "HCT", "HR", "K", "Lactate", "Mg",
    "MAP", "MechVent", "Na", "NIDiasABP", "NIMAP", "NISysABP", "PaCO2", "PaO2", "pH",
    "Platelets", "RespRate", "SaO2", "SysABP", "Temp", "TroponinI", "TroponinT",
    "Urine", "WBC", "Weight",
)

_MISSING_TOKENS = ("", "NA", "na", "NaN", "nan", "?")


@dataclass(frozen=True)
class IngestConfig:
    """Preprocessing settings shared by both ingest pipelines.

    Empty ``attribute_columns`` / ``context_columns`` mean "every column that
    is not a label, id or leakage column".  ``categorical_levels`` pins the
    one-hot vocabulary; levels not listed map to an all-zero block.
    """

    attribute_columns: tuple = ()
    context_columns: tuple = ()
    categorical_columns: tuple = SUPPORT2_CATEGORICAL
    categorical_levels: dict = field(default_factory=dict)
    leakage_columns: tuple = SUPPORT2_LEAKAGE
    id_column: str | None = None
    time_column: str = "d.time"
    event_column: str = "death"
    fill_value: float = -1.0
    standardize: bool = False
    cap_days: float = 1095.0
    interval_days: float = 7.0
    split_sizes: tuple = (7105, 1000, 1000)
    seed: int = 0
    # PhysioNet-only
    window_hours: float = 48.0
    bin_minutes: float = 30.0
    series_fill: float = 0.0
    missing_markers: tuple = (-1.0,)
    censor_time_column: str = "Length_of_stay"
    # PhysioNet day counts are 1-based day numbers: death on day d lies in [d-1, d)
    day_number_offset: float = 0.0

    def __post_init__(self):
        for name in ("attribute_columns", "context_columns", "categorical_columns",
                     "leakage_columns", "split_sizes", "missing_markers"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not math.isfinite(self.fill_value) or not math.isfinite(self.series_fill):
            raise ValueError("fill values must be finite")
        if self.interval_days <= 0 or self.cap_days < self.interval_days:
            raise ValueError("need 0 < interval_days <= cap_days")

    @property
    def grid(self) -> TimeGrid:
        # whole intervals only: 1095 d at 7 d gives 156 intervals ending at day 1092
        m = int(math.floor(self.cap_days / self.interval_days + 1e-9))
        return TimeGrid.uniform(m, self.interval_days)

    @classmethod
    def support2(cls, **kw) -> "IngestConfig":
        return cls(**kw)

    @classmethod
    def physionet(cls, **kw) -> "IngestConfig":
        base = dict(categorical_columns=(), leakage_columns=(), time_column="Survival",
                    event_column="", fill_value=0.0, cap_days=60.0, interval_days=1.0,
                    split_sizes=(3200, 400, 400), id_column="RecordID", day_number_offset=1.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict, source: str = "support2") -> "IngestConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown ingest config keys: {', '.join(unknown)}")
        return cls.physionet(**d) if source == "physionet" else cls.support2(**d)


def read_csv_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Read an RFC-4180 CSV file; returns the header and ``(line_number, row)`` pairs.

    Rows whose field count differs from the header raise ``MALFORMED_CSV``
    naming the offending line.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty file", code="MALFORMED_CSV") from None
        except csv.Error as exc:
            raise IngestError(f"{path}: line 1: {exc}", code="MALFORMED_CSV") from None
        header = [h.strip() for h in header]
        while True:
            try:
                row = next(reader)
            except StopIteration:
                break
            except csv.Error as exc:
                raise IngestError(f"{path}: line {reader.line_num}: {exc}", code="MALFORMED_CSV") from None
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(f"{path}: line {reader.line_num}: expected {len(header)} fields, "
                                  f"got {len(row)}", code="MALFORMED_CSV")
            rows.append((reader.line_num, row))
    return header, rows


def _to_float(token, where):
    token = token.strip()
    if token in _MISSING_TOKENS:
        return math.nan
    try:
        return float(token)
    except ValueError:
        raise IngestError(f"{where}: cannot parse {token!r} as a number", code="MALFORMED_CSV") from None


def _encode_table(header, rows, columns, cfg: IngestConfig, path):
    """Numeric matrix and names for ``columns`` with one-hot categoricals and fill."""
    col_idx = {c: i for i, c in enumerate(header)}
    names, blocks = [], []
    for col in columns:
        j = col_idx[col]
        raw = [row[j].strip() for _, row in rows]
        if col in cfg.categorical_columns:
            levels = cfg.categorical_levels.get(col)
            if levels is None:
                levels = sorted({v for v in raw if v not in _MISSING_TOKENS})
            block = np.zeros((len(rows), len(levels)))
            lookup = {lv: k for k, lv in enumerate(levels)}
            for i, v in enumerate(raw):
                if v in _MISSING_TOKENS:
                    block[i, :] = cfg.fill_value
                elif v in lookup:
                    block[i, lookup[v]] = 1.0
            names.extend(f"{col}_{lv}" for lv in levels)
            blocks.append(block)
        else:
            vals = np.array([_to_float(v, f"{path}: line {ln}, column {col}")
                             for v, (ln, _) in zip(raw, rows)])
            vals = np.where(np.isnan(vals), cfg.fill_value, vals)
            names.append(col)
            blocks.append(vals[:, None])
    mat = np.concatenate(blocks, axis=1) if blocks else np.zeros((len(rows), 0))
    if not np.all(np.isfinite(mat)):
        raise IngestError(f"{path}: non-finite values after fill", code="MALFORMED_CSV")
    if cfg.standardize and mat.size:
        sd = mat.std(axis=0)
        mat = (mat - mat.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    return mat, names


def ingest_support2(table, cfg: IngestConfig | None = None) -> Dataset:
    """Flat patient table to a static-context Dataset.

    Categoricals are one-hot encoded, every missing cell becomes
    ``cfg.fill_value`` (-1 by default) and a ``bias`` attribute is
    prepended.  The grid defaults to 156 weekly intervals (3-year cap).
    """
    cfg = cfg or IngestConfig.support2()
    header, rows = read_csv_rows(table)
    missing = [c for c in (cfg.time_column, cfg.event_column) if c not in header]
    if missing:
        raise IngestError(f"{table}: label columns missing: {', '.join(missing)}", code="MISSING_LABEL_COLUMNS")
    reserved = {cfg.time_column, cfg.event_column, *cfg.leakage_columns}
    if cfg.id_column:
        reserved.add(cfg.id_column)
    for col in (*cfg.attribute_columns, *cfg.context_columns, *cfg.categorical_columns):
        if col not in header:
            raise IngestError(f"{table}: unknown column {col!r}", code="UNKNOWN_COLUMN")
    if cfg.id_column and cfg.id_column not in header:
        raise IngestError(f"{table}: unknown column {cfg.id_column!r}", code="UNKNOWN_COLUMN")
    leaky = reserved & (set(cfg.attribute_columns) | set(cfg.context_columns))
    if leaky:
        raise IngestError(f"{table}: label/leakage columns requested as features: {sorted(leaky)}",
                          code="UNKNOWN_COLUMN")
    default_cols = [c for c in header if c not in reserved]
    attr_cols = list(cfg.attribute_columns) or default_cols
    ctx_cols = list(cfg.context_columns) or default_cols

    X, x_names = _encode_table(header, rows, attr_cols, cfg, table)
    C, c_names = _encode_table(header, rows, ctx_cols, cfg, table)
    ti, ei = header.index(cfg.time_column), header.index(cfg.event_column)
    idi = header.index(cfg.id_column) if cfg.id_column else None
    records = []
    for r, (ln, row) in enumerate(rows):
        t = _to_float(row[ti], f"{table}: line {ln}, column {cfg.time_column}")
        e = _to_float(row[ei], f"{table}: line {ln}, column {cfg.event_column}")
        if math.isnan(t) or math.isnan(e):
            raise IngestError(f"{table}: line {ln}: missing survival label", code="MISSING_LABEL_COLUMNS")
        if t < 0:
            raise IngestError(f"{table}: line {ln}: negative survival time {t}", code="MALFORMED_CSV")
        rid = row[idi].strip() if idi is not None else str(r)
        records.append(PatientRecord(rid, np.concatenate([[1.0], X[r]]), C[r], SurvivalLabel(t, e != 0)))
    return Dataset(records, cfg.grid, ["bias", *x_names], c_names, "static")


def _parse_clock(token, where):
    try:
        hh, mm = token.strip().split(":")
        return int(hh) * 60 + int(mm)
    except ValueError:
        raise IngestError(f"{where}: bad time stamp {token!r}", code="MALFORMED_CSV") from None


def _physionet_record(path, variables, cfg: IngestConfig):
    header, rows = read_csv_rows(path)
    need = ("Time", "Parameter", "Value")
    if any(h not in header for h in need):
        raise IngestError(f"{path}: expected columns Time,Parameter,Value", code="MALFORMED_CSV")
    ti, pi, vi = (header.index(h) for h in need)
    var_idx = {v: i for i, v in enumerate(variables)}
    n_bins = int(round(cfg.window_hours * 60 / cfg.bin_minutes))
    sums = np.zeros((n_bins, len(variables)))
    counts = np.zeros((n_bins, len(variables)))
    last_time = np.full(len(variables), -np.inf)
    last_val = np.full(len(variables), cfg.fill_value)
    record_id = None
    n_meas = 0
    for ln, row in rows:
        param = row[pi].strip()
        where = f"{path}: line {ln}"
        if param == "RecordID":
            record_id = row[vi].strip()
            if record_id.endswith(".0"):
                record_id = record_id[:-2]
            continue
        if param not in var_idx:
            continue
        value = _to_float(row[vi], where)
        if math.isnan(value) or value in cfg.missing_markers:
            continue
        minute = _parse_clock(row[ti], where)
        if minute > cfg.window_hours * 60:
            continue
        j = var_idx[param]
        b = min(int(minute // cfg.bin_minutes), n_bins - 1)
        sums[b, j] += value
        counts[b, j] += 1
        n_meas += 1
        if minute >= last_time[j]:
            last_time[j], last_val[j] = minute, value
    if n_meas == 0:
        raise IngestError(f"{path}: no measurements", code="EMPTY_RECORD")
    with np.errstate(invalid="ignore", divide="ignore"):
        series = np.where(counts > 0, sums / np.maximum(counts, 1), cfg.series_fill)
    return record_id or Path(path).stem, series, last_val


def ingest_physionet(records_dir, outcomes_table, cfg: IngestConfig | None = None,
                     variables=PHYSIONET_VARIABLES) -> Dataset:
    """Per-patient ICU measurement files to a series-context Dataset.

    Each file holds ``Time (hh:mm), Parameter, Value`` rows.  The first
    ``window_hours`` are averaged into ``bin_minutes`` bins (empty bins get
    ``series_fill``); the attributes are the last raw value of each
    variable.  Outcomes come from a table with ``RecordID``, the survival
    column (days, -1 when no death was recorded) and a censoring-time column
    used for patients with no recorded death.  Both are day numbers, so day
    ``d`` becomes elapsed time ``d - day_number_offset`` (one by default).
    """
    cfg = cfg or IngestConfig.physionet()
    header, rows = read_csv_rows(outcomes_table)
    id_col = cfg.id_column or "RecordID"
    needed = [id_col, cfg.time_column]
    if any(c not in header for c in needed):
        raise IngestError(f"{outcomes_table}: outcome columns missing", code="MISSING_LABEL_COLUMNS")
    has_censor = cfg.censor_time_column in header
    outcomes = {}
    for ln, row in rows:
        rid = row[header.index(id_col)].strip()
        if rid.endswith(".0"):
            rid = rid[:-2]
        surv = _to_float(row[header.index(cfg.time_column)], f"{outcomes_table}: line {ln}")
        if not math.isnan(surv) and surv >= 0:
            outcomes[rid] = SurvivalLabel(max(surv - cfg.day_number_offset, 0.0), True)
        else:
            cens = _to_float(row[header.index(cfg.censor_time_column)], f"{outcomes_table}: line {ln}") \
                if has_censor else math.nan
            cens = 0.0 if math.isnan(cens) or cens < 0 else max(cens - cfg.day_number_offset, 0.0)
            outcomes[rid] = SurvivalLabel(cens, False)

    files = sorted(p for p in Path(records_dir).iterdir() if p.suffix.lower() in (".txt", ".csv"))
    records = []
    for path in files:
        rid, series, last = _physionet_record(path, variables, cfg)
        if rid not in outcomes:
            raise IngestError(f"{path}: no outcome for record {rid}", code="MISSING_OUTCOME")
        records.append(PatientRecord(rid, np.concatenate([[1.0], last]), series, outcomes[rid]))
    return Dataset(records, cfg.grid, ["bias", *variables], list(variables), "series")


def split_dataset(d: Dataset, sizes=(7105, 1000, 1000), seed: int = 0):
    """Seeded shuffle into train/valid/test.

    When the dataset is smaller than ``sum(sizes)`` the sizes are scaled
    down proportionally (train takes the rounding remainder).
    """
    n = len(d)
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.sum() > n:
        sizes = np.floor(sizes / sizes.sum() * n)
        sizes[0] = n - sizes[1:].sum()
    sizes = sizes.astype(int)
    perm = np.random.default_rng(seed).permutation(n)
    a, b = sizes[0], sizes[0] + sizes[1]
    return d.subset(perm[:a]), d.subset(perm[a:b]), d.subset(perm[b:b + sizes[2]])


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 1000
    d_x: int = 10
    d_c: int = 10
    m: int = 20
    K: int = 4
    censoring_rate: float = 0.3
    family: str = "crf"
    context_kind: str = "static"
    series_len: int = 8
    interval_days: float = 1.0
    seed: int = 0
    zero_theta: bool = False

    def __post_init__(self):
        for name in ("n", "d_x", "d_c", "m", "K", "series_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.censoring_rate < 1.0:
            raise ValueError("censoring_rate must lie in [0, 1)")
        if self.family not in ("crf", "cen"):
            raise ValueError("family must be 'crf' or 'cen'")
        if self.context_kind not in ("static", "series"):
            raise ValueError("context_kind must be 'static' or 'series'")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown synthetic spec keys: {', '.join(unknown)}")
        return cls(**d)


@dataclass(eq=False)
class SyntheticTruth:
    """Generating parameters.  ``thetas`` is (m, d_x) for crf, (n, m, d_x) for cen."""

    thetas: np.ndarray
    k: np.ndarray
    censored: np.ndarray
    dictionary: np.ndarray | None = None
    encoder: np.ndarray | None = None
    interval_logits: np.ndarray | None = None


def gen_synthetic(spec: SyntheticSpec):
    """Sample a dataset from a known CRF (or CEN-style mixture) model.

    Attributes are a bias plus standard normals; the context carries the
    same non-bias signal (padded with extra noise dimensions) so neural
    encoders can learn from it.  Outcomes are drawn from the exact outcome
    distribution.  Censoring draws an independent uniform censor interval
    per patient; exactly ``round(rate * n)`` patients whose censor interval
    precedes their death are censored.  Returns ``(Dataset, SyntheticTruth)``.
    """
    rng = np.random.default_rng(spec.seed)
    n, d_x, d_c, m = spec.n, spec.d_x, spec.d_c, spec.m
    z = rng.normal(size=(n, max(d_c, d_x - 1)))
    X = np.concatenate([np.ones((n, 1)), z[:, :d_x - 1]], axis=1)
    ctx = z[:, :d_c]

    truth = {}
    if spec.family == "crf":
        theta = np.zeros((m, d_x)) if spec.zero_theta else rng.normal(size=(m, d_x)) / np.sqrt(d_x)
        U = X @ theta.T
        truth["thetas"] = theta
    else:
        D = rng.normal(size=(spec.K, d_x)) / np.sqrt(d_x)
        W = rng.normal(size=(d_c, spec.K))
        B = rng.normal(size=(m, spec.K))
        alpha = softmax(ctx[:, None, :] @ W + B[None])       # (n, m, K)
        thetas = alpha @ D
        if spec.zero_theta:
            thetas = np.zeros_like(thetas)
        U = np.einsum("ntd,nd->nt", thetas, X)
        truth.update(thetas=thetas, dictionary=D, encoder=W, interval_logits=B)

    S = scores_from_unary(U)
    P = np.exp(S - S.max(axis=1, keepdims=True))
    P /= P.sum(axis=1, keepdims=True)
    u = rng.random(n)
    k = np.minimum((P.cumsum(axis=1) < u[:, None]).sum(axis=1), m)

    # independent censor interval c; censoring is possible only when c < k
    c = rng.integers(0, m, size=n)
    eligible = np.flatnonzero(c < k)
    n_cens = min(int(round(spec.censoring_rate * n)), eligible.size)
    cens = np.zeros(n, dtype=bool)
    if n_cens:
        cens[rng.choice(eligible, size=n_cens, replace=False)] = True

    grid = TimeGrid.uniform(m, spec.interval_days)
    w = spec.interval_days
    offsets = rng.random(n)
    times = np.where(cens, (c + offsets) * w,
                     np.where(k < m, (k + offsets) * w, grid.cap + rng.exponential(w, size=n)))
    if spec.context_kind == "series":
        ctx = ctx[:, None, :] + 0.1 * rng.normal(size=(n, spec.series_len, d_c))
    records = [PatientRecord(f"p{i:06d}", X[i], ctx[i], SurvivalLabel(times[i], not cens[i]))
               for i in range(n)]
    attr_names = ["bias"] + [f"x{i}" for i in range(1, d_x)]
    ctx_names = [f"c{i}" for i in range(d_c)]
    data = Dataset(records, grid, attr_names, ctx_names, spec.context_kind)
    return data, SyntheticTruth(truth.pop("thetas"), k, cens, **truth)
