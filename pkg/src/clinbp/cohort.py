"""Patient-level cohort tables: schema, CSV ingestion, and a synthetic
two-institution generator.

A cohort is one row per patient. Feature cells are floats with NaN for
missing; the two targets (SBP, DBP in mmHg) and the grouping identifier are
held separately from the feature matrix.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd
import yaml

from .errors import ConfigError, DataError, EmptyCohortError, ParseError

log = logging.getLogger(__name__)

SBP_COLUMN = "sbp_target"
DBP_COLUMN = "dbp_target"
GROUP_COLUMN = "group_id"
TARGET_NAMES = ("sbp", "dbp")

KINDS = ("numeric", "binary", "categorical")
DOMAIN_TAGS = (
    "vitals",
    "laboratory",
    "medication",
    "temporal",
    "derived",
    "demographic",
    "target",
    "id",
)
FEATURE_DOMAINS = ("vitals", "laboratory", "medication", "temporal", "derived")

AGE_RANGE = (18.0, 89.0)
SBP_RANGE = (30.0, 300.0)
DBP_RANGE = (15.0, 200.0)
MIN_STAY_HOURS = 24.0
MIN_BP_MEASUREMENTS = 2


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "numeric"
    domain_tag: str = "vitals"
    unit: str = ""
    valid_range: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("column name must be non-empty")
        if self.kind not in KINDS:
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ConfigError(
                f"column {self.name!r}: unknown domain_tag {self.domain_tag!r}"
            )
        if self.valid_range is not None:
            lo, hi = self.valid_range
            if not lo < hi:
                raise ConfigError(f"column {self.name!r}: valid_range min must be < max")
            object.__setattr__(self, "valid_range", (float(lo), float(hi)))

    @property
    def is_feature(self) -> bool:
        return self.domain_tag not in ("target", "id")

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "domain_tag": self.domain_tag}
        if self.unit:
            out["unit"] = self.unit
        if self.valid_range is not None:
            out["valid_range"] = list(self.valid_range)
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ColumnSpec":
        unknown = set(d) - {"name", "kind", "domain_tag", "unit", "valid_range"}
        if unknown:
            raise ConfigError(f"unknown column-spec keys: {sorted(unknown)}")
        vr = d.get("valid_range")
        return cls(
            name=str(d["name"]),
            kind=d.get("kind", "numeric"),
            domain_tag=d.get("domain_tag", "vitals"),
            unit=str(d.get("unit", "")),
            valid_range=tuple(vr) if vr is not None else None,
        )


def _check_unique(specs: Sequence[ColumnSpec]):
    seen = set()
    for s in specs:
        if s.name in seen:
            raise ConfigError(f"duplicate column name in schema: {s.name!r}")
        seen.add(s.name)


@dataclass(frozen=True)
class CohortSchema:
    """Column declarations plus the optional filter columns used at load time."""

    columns: tuple[ColumnSpec, ...]
    stay_length_column: str | None = None
    stay_length_unit: str = "hours"
    measurement_count_column: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        _check_unique(self.columns)
        if self.stay_length_unit not in ("hours", "minutes"):
            raise ConfigError("stay_length_unit must be 'hours' or 'minutes'")

    @property
    def features(self) -> list[ColumnSpec]:
        return [c for c in self.columns if c.is_feature]

    def to_dict(self) -> dict:
        out: dict = {"columns": [c.to_dict() for c in self.columns]}
        filters = {}
        if self.stay_length_column:
            filters["stay_length_column"] = self.stay_length_column
            filters["stay_length_unit"] = self.stay_length_unit
        if self.measurement_count_column:
            filters["measurement_count_column"] = self.measurement_count_column
        if filters:
            out["filters"] = filters
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "CohortSchema":
        filters = dict(d.get("filters") or {})
        unknown = set(filters) - {
            "stay_length_column",
            "stay_length_unit",
            "measurement_count_column",
        }
        if unknown:
            raise ConfigError(f"unknown schema filter keys: {sorted(unknown)}")
        return cls(
            columns=tuple(ColumnSpec.from_dict(c) for c in d.get("columns", [])),
            **filters,
        )


def load_schema(path) -> CohortSchema:
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, Mapping) or "columns" not in raw:
        raise ConfigError(f"{path}: schema YAML needs a top-level 'columns' list")
    return CohortSchema.from_dict(raw)


def write_schema(schema: CohortSchema, path):
    with open(path, "w") as fh:
        yaml.safe_dump(schema.to_dict(), fh, sort_keys=False)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CohortTable:
    """Immutable patient-level dataset.

    ``X`` is ``(n, d)`` float64 with NaN for missing cells, ``targets`` is
    ``(n, 2)`` holding [SBP, DBP] in mmHg.
    """

    schema: tuple[ColumnSpec, ...]
    X: np.ndarray
    targets: np.ndarray
    group_id: np.ndarray
    source_tag: str = "internal"
    filter_counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        schema = tuple(self.schema)
        _check_unique(schema)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(schema):
            raise DataError(
                f"feature matrix shape {X.shape} does not match {len(schema)} schema columns"
            )
        Y = np.asarray(self.targets, dtype=np.float64).reshape(-1, 2)
        g = np.asarray(self.group_id, dtype=object)
        n = X.shape[0]
        if Y.shape[0] != n or g.shape[0] != n:
            raise DataError("row counts of features, targets and group_id differ")
        if not np.all(np.isfinite(Y)):
            raise DataError("targets must be present and finite on every row")
        sbp, dbp = Y[:, 0], Y[:, 1]
        if np.any((sbp < SBP_RANGE[0]) | (sbp > SBP_RANGE[1])):
            raise DataError(f"SBP outside plausibility bounds {SBP_RANGE}")
        if np.any((dbp < DBP_RANGE[0]) | (dbp > DBP_RANGE[1])):
            raise DataError(f"DBP outside plausibility bounds {DBP_RANGE}")
        if any((not isinstance(v, str)) or v == "" for v in g):
            raise DataError("group_id must be a non-empty string on every row")
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "targets", _readonly(Y))
        object.__setattr__(self, "group_id", _readonly(g))
        object.__setattr__(self, "filter_counts", dict(self.filter_counts))

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.index_of(name)]

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def spec(self, name: str) -> ColumnSpec:
        return self.schema[self.index_of(name)]

    def with_features(self, schema: Sequence[ColumnSpec], X: np.ndarray) -> "CohortTable":
        return replace(self, schema=tuple(schema), X=X)

    def select(self, names: Sequence[str]) -> "CohortTable":
        idx = [self.index_of(n) for n in names]
        return self.with_features([self.schema[i] for i in idx], self.X[:, idx])

    def drop(self, names: Iterable[str]) -> "CohortTable":
        names = set(names)
        return self.select([n for n in self.feature_names if n not in names])

    def take_rows(self, rows) -> "CohortTable":
        rows = np.asarray(rows)
        return replace(
            self, X=self.X[rows], targets=self.targets[rows], group_id=self.group_id[rows]
        )

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.feature_names)
        df[SBP_COLUMN] = self.targets[:, 0]
        df[DBP_COLUMN] = self.targets[:, 1]
        df[GROUP_COLUMN] = list(self.group_id)
        return df

    def full_schema(self) -> CohortSchema:
        cols = list(self.schema) + [
            ColumnSpec(SBP_COLUMN, "numeric", "target", "mmHg", SBP_RANGE),
            ColumnSpec(DBP_COLUMN, "numeric", "target", "mmHg", DBP_RANGE),
            ColumnSpec(GROUP_COLUMN, "categorical", "id"),
        ]
        names = self.feature_names
        stay = "icu_los_hours" if "icu_los_hours" in names else None
        count = "n_bp_measurements" if "n_bp_measurements" in names else None
        return CohortSchema(
            tuple(cols), stay_length_column=stay, measurement_count_column=count
        )


def write_cohort(table: CohortTable, path):
    table.to_frame().to_csv(path, index=False, lineterminator="\n")


def check_sample_size(table: CohortTable) -> bool:
    """Warn when fewer than ten rows per feature are available."""
    ok = table.n_rows >= 10 * table.n_features
    if not ok:
        log.warning(
            "sample size n=%d is below 10 x d = %d", table.n_rows, 10 * table.n_features
        )
    return ok


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_cell(text: str, line: int, col: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"column {col!r}: cannot parse {text!r} as a number", row=line) from None


def _as_schema(schema) -> CohortSchema:
    if isinstance(schema, CohortSchema):
        return schema
    cols = tuple(schema)
    names = {c.name for c in cols}
    return CohortSchema(
        cols,
        stay_length_column="icu_los_hours" if "icu_los_hours" in names else None,
        measurement_count_column="n_bp_measurements" if "n_bp_measurements" in names else None,
    )


def load_cohort(path, schema, source_tag: str = "internal") -> CohortTable:
    """Read a cohort CSV and apply the inclusion filters.

    Rows are dropped when age is outside [18, 89], SBP outside [30, 300],
    DBP outside [15, 200], the stay is shorter than 24 h (when a stay-length
    column is declared) or fewer than 2 BP measurements were recorded (when a
    measurement-count column is declared). Unknown values fail a predicate.
    Drop counts per predicate land in ``filter_counts``.
    """
    schema = _as_schema(schema)
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("file is empty", row=1) from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", row=1)
        for req in (SBP_COLUMN, DBP_COLUMN, GROUP_COLUMN):
            if req not in header:
                raise ParseError(f"required column {req!r} missing from header", row=1)
        raw_rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, found {len(row)}", row=line_no
                )
            raw_rows.append((line_no, row))

    pos = {h: i for i, h in enumerate(header)}
    feature_specs = schema.features
    for spec in feature_specs:
        if spec.name not in pos:
            raise ParseError(f"schema column {spec.name!r} missing from header", row=1)
    declared = {c.name for c in schema.columns} | {SBP_COLUMN, DBP_COLUMN, GROUP_COLUMN}
    extra = [h for h in header if h not in declared]
    if extra:
        log.warning("%s: ignoring undeclared columns %s", path.name, extra)

    numeric_specs = [s for s in feature_specs if s.kind != "categorical"]
    cat_specs = [s for s in feature_specs if s.kind == "categorical"]
    n = len(raw_rows)
    values = np.full((n, len(numeric_specs)), np.nan)
    cats = {s.name: [] for s in cat_specs}
    targets = np.full((n, 2), np.nan)
    groups = []
    for r, (line_no, row) in enumerate(raw_rows):
        for j, spec in enumerate(numeric_specs):
            values[r, j] = _parse_cell(row[pos[spec.name]], line_no, spec.name)
        for spec in cat_specs:
            cats[spec.name].append(row[pos[spec.name]].strip())
        targets[r, 0] = _parse_cell(row[pos[SBP_COLUMN]], line_no, SBP_COLUMN)
        targets[r, 1] = _parse_cell(row[pos[DBP_COLUMN]], line_no, DBP_COLUMN)
        groups.append(row[pos[GROUP_COLUMN]].strip())

    # categoricals arrive as labels and leave as one-hot binary columns
    out_specs = list(numeric_specs)
    blocks = [values]
    for spec in cat_specs:
        labels = cats[spec.name]
        levels = sorted({v for v in labels if v != ""})
        block = np.full((n, len(levels)), np.nan)
        for r, v in enumerate(labels):
            if v != "":
                block[r] = [1.0 if v == lv else 0.0 for lv in levels]
        blocks.append(block)
        out_specs += [
            ColumnSpec(f"{spec.name}_{lv}", "binary", spec.domain_tag) for lv in levels
        ]
    X = np.hstack(blocks) if blocks else np.empty((n, 0))
    groups = np.array(groups, dtype=object)

    keep = np.ones(n, dtype=bool)
    counts: dict[str, int] = {}

    def apply(name, ok):
        nonlocal keep
        ok = np.asarray(ok, dtype=bool)
        dropped = keep & ~ok
        counts[name] = int(dropped.sum())
        keep &= ok

    names = [s.name for s in numeric_specs]
    with np.errstate(invalid="ignore"):
        apply("target_missing", np.isfinite(targets).all(axis=1))
        apply("group_id_missing", np.array([g != "" for g in groups], dtype=bool))
        if "age" in names:
            age = values[:, names.index("age")]
            apply("age_range", (age >= AGE_RANGE[0]) & (age <= AGE_RANGE[1]))
        apply("sbp_range", (targets[:, 0] >= SBP_RANGE[0]) & (targets[:, 0] <= SBP_RANGE[1]))
        apply("dbp_range", (targets[:, 1] >= DBP_RANGE[0]) & (targets[:, 1] <= DBP_RANGE[1]))
        if schema.stay_length_column:
            stay = X[:, [s.name for s in out_specs].index(schema.stay_length_column)]
            hours = stay / 60.0 if schema.stay_length_unit == "minutes" else stay
            apply("stay_length", hours >= MIN_STAY_HOURS)
        if schema.measurement_count_column:
            cnt = X[:, [s.name for s in out_specs].index(schema.measurement_count_column)]
            apply("bp_measurements", cnt >= MIN_BP_MEASUREMENTS)
        else:
            log.warning(
                "%s: no measurement-count column declared; skipping the >= 2 BP measurement filter",
                path.name,
            )

    for k, v in counts.items():
        if v:
            log.info("%s: dropped %d rows failing %s", path.name, v, k)
    if not keep.any():
        raise EmptyCohortError(f"{path}: no rows survive the inclusion filters")
    return CohortTable(
        schema=tuple(out_specs),
        X=X[keep],
        targets=targets[keep],
        group_id=groups[keep],
        source_tag=source_tag,
        filter_counts=counts,
    )


# ---------------------------------------------------------------------------
# Blood-pressure strata


class Stratum(str, enum.Enum):
    HYPOTENSION = "Hypotension"
    NORMAL = "Normal"
    PREHYPERTENSION = "Prehypertension"
    HYPERTENSION = "Hypertension"


def stratum_of(sbp: float) -> Stratum:
    if not math.isfinite(sbp):
        raise ValueError(f"SBP must be finite, got {sbp!r}")
    if sbp < 90:
        return Stratum.HYPOTENSION
    if sbp < 120:
        return Stratum.NORMAL
    if sbp < 140:
        return Stratum.PREHYPERTENSION
    return Stratum.HYPERTENSION


def strata_of(sbp: np.ndarray) -> np.ndarray:
    return np.array([stratum_of(float(v)) for v in np.asarray(sbp)], dtype=object)


# ---------------------------------------------------------------------------
# Synthetic generator


@dataclass(frozen=True)
class SyntheticConfig:
    n_patients: int = 1000
    seed: int = 0
    shift_magnitude: float = 0.0
    missing_rate: float = 0.1
    hypotension_fraction: float = 0.01
    # multiplier on the target noise; 0 gives noise-free targets
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.n_patients < 50:
            raise ConfigError(
                f"n_patients={self.n_patients} is too small for 5-fold group CV (need >= 50)"
            )
        if self.shift_magnitude < 0:
            raise ConfigError("shift_magnitude must be >= 0")
        if not 0 <= self.missing_rate < 1:
            raise ConfigError("missing_rate must be in [0, 1)")
        if not 0 <= self.hypotension_fraction < 1:
            raise ConfigError("hypotension_fraction must be in [0, 1)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")


SBP_NOISE_SD = 6.0
DBP_NOISE_SD = 7.0

# (name, kind, domain, unit)
_SYNTH_COLUMNS = [
    ("age", "numeric", "demographic", "years"),
    ("sex_male", "binary", "demographic", ""),
    ("race_white", "binary", "demographic", ""),
    ("hr_mean", "numeric", "vitals", "bpm"),
    ("hr_std", "numeric", "vitals", "bpm"),
    ("rr_mean", "numeric", "vitals", "breaths/min"),
    ("rr_std", "numeric", "vitals", "breaths/min"),
    ("spo2_mean", "numeric", "vitals", "%"),
    ("spo2_std", "numeric", "vitals", "%"),
    ("temp_mean", "numeric", "vitals", "degC"),
    ("sodium", "numeric", "laboratory", "mmol/L"),
    ("potassium", "numeric", "laboratory", "mmol/L"),
    ("creatinine", "numeric", "laboratory", "mg/dL"),
    ("bun", "numeric", "laboratory", "mg/dL"),
    ("troponin", "numeric", "laboratory", "ng/mL"),
    ("bnp", "numeric", "laboratory", "pg/mL"),
    ("ph", "numeric", "laboratory", ""),
    ("pco2", "numeric", "laboratory", "mmHg"),
    ("lactate", "numeric", "laboratory", "mmol/L"),
    ("vasopressor_use", "binary", "medication", ""),
    ("vasopressors", "numeric", "medication", "doses"),
    ("beta_blockers", "numeric", "medication", "doses"),
    ("diuretics", "numeric", "medication", "doses"),
    ("ace_inhibitors", "numeric", "medication", "doses"),
    ("arbs", "numeric", "medication", "doses"),
    ("ccbs", "numeric", "medication", "doses"),
    ("hr_cv", "numeric", "temporal", ""),
    ("hr_trend", "numeric", "temporal", "bpm/h"),
    ("lability_events", "numeric", "temporal", "events"),
    ("hrv", "numeric", "temporal", "ms"),
    ("icu_los_hours", "numeric", "temporal", "hours"),
    ("n_bp_measurements", "numeric", "temporal", "count"),
    ("bmi", "numeric", "derived", "kg/m2"),
    ("sbp_baseline", "numeric", "derived", "mmHg"),
    ("dbp_baseline", "numeric", "derived", "mmHg"),
    ("pulse_pressure_baseline", "numeric", "derived", "mmHg"),
    ("map_calculated", "numeric", "derived", "mmHg"),
]

# target-contaminated columns planted in each institution
INTERNAL_LEAKY = ("sbp_mean_6h", "dbp_mean_6h", "verify_flag")
EXTERNAL_LEAKY = ("sbp_mean_6h", "map_mean_6h")

# MCAR missingness applies to these columns only
MISSABLE = (
    "hr_std", "rr_std", "spo2_std", "temp_mean", "sodium", "potassium",
    "creatinine", "bun", "ph", "pco2", "lactate", "hr_trend", "hrv", "bmi",
)
# sparse labs: missing at min(0.9, 8 * missing_rate)
SPARSE = ("troponin", "bnp")

# external renames when shift > 0: cosmetic ones survive name normalisation,
# vendor ones do not (the first ceil(2 * shift) of them are applied)
COSMETIC_RENAMES = {"hr_mean": "HR Mean", "spo2_mean": "SpO2-Mean", "creatinine": "Creatinine", "bmi": "BMI"}
VENDOR_RENAMES = (
    ("bnp", "nt_probnp"),
    ("hr_trend", "heartrate_slope"),
    ("troponin", "trop_i"),
    ("lability_events", "bp_lability_count"),
)


def ground_truth(c: Mapping[str, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free SBP and DBP as a function of observed (complete) features."""
    age = c["age"] - 64.0
    sbp = (
        125.0
        + 0.62 * (c["sbp_baseline"] - 128.0)
        + 0.10 * age
        - 2.0 * (c["lactate"] - 1.5)
        - 3.0 * c["vasopressor_use"] * c["lactate"]
        + 0.15 * age * (c["creatinine"] - 1.1)
        + 0.003 * (c["hrv"] - 40.0) * (c["sbp_baseline"] - 128.0)
        + 0.15 * (c["hr_mean"] - 85.0)
        - 1.5 * c["beta_blockers"]
        - 1.0 * c["diuretics"]
        + 2.0 * (c["sex_male"] - 0.55)
    )
    dbp = (
        72.0
        + 0.60 * (c["dbp_baseline"] - 74.0)
        + 0.08 * (c["sbp_baseline"] - 128.0)
        - 0.10 * age
        + 0.12 * (c["hr_mean"] - 85.0)
        - 1.5 * c["vasopressor_use"] * (c["lactate"] - 1.5)
        + 1.0 * (c["temp_mean"] - 37.0)
        - 0.8 * c["ccbs"]
    )
    return sbp, dbp


def _simulate(rng: np.random.Generator, cfg: SyntheticConfig, shift: float):
    n = cfg.n_patients
    m = shift
    N = rng.standard_normal

    def lognorm(mu, sd):
        return np.exp(mu + sd * N(n))

    u = 0.25 * m + N(n)  # severity
    h = N(n)  # hemodynamic set-point
    s = (rng.random(n) < cfg.hypotension_fraction).astype(float)

    c: dict[str, np.ndarray] = {}
    c["age"] = np.clip(64.0 + 4.0 * m + 14.0 * (1 + 0.1 * m) * N(n), *AGE_RANGE)
    c["sex_male"] = (rng.random(n) < 0.55).astype(float)
    c["race_white"] = (rng.random(n) < max(0.70 - 0.1 * m, 0.2)).astype(float)
    age = c["age"] - 64.0

    c["hr_mean"] = 85.0 + 3.0 * m + 6.0 * u + 18.0 * s + 9.0 * N(n)
    c["hr_std"] = lognorm(np.log(6.0) + 0.2 * u, 0.25)
    c["rr_mean"] = 18.0 + 2.0 * u + 3.0 * s + 3.0 * N(n)
    c["rr_std"] = lognorm(np.log(3.0), 0.3)
    c["spo2_mean"] = np.clip(97.0 - 0.5 * m - 1.2 * u - 3.0 * s + 1.5 * N(n), 70.0, 100.0)
    c["spo2_std"] = lognorm(np.log(1.5), 0.3)
    c["temp_mean"] = 37.0 + 0.3 * u + 0.5 * N(n)

    lab_sd = 1.0 + 0.2 * m
    c["sodium"] = 139.0 + 1.5 * m + 3.5 * lab_sd * N(n)
    c["potassium"] = 4.1 + 0.15 * u + 0.45 * lab_sd * N(n)
    c["creatinine"] = lognorm(np.log(1.1) + 0.15 * m + 0.2 * u + 0.004 * age, 0.35 * lab_sd)
    c["bun"] = np.exp(np.log(20.0) + 0.6 * (np.log(c["creatinine"]) - np.log(1.1)) + 0.3 * N(n))
    c["troponin"] = lognorm(np.log(0.05) + 0.5 * u, 1.0 * lab_sd)
    c["bnp"] = lognorm(np.log(300.0) + 0.3 * m + 0.4 * u + 0.01 * age, 0.8 * lab_sd)
    c["ph"] = 7.38 - 0.03 * u - 0.05 * s + 0.04 * N(n)
    c["pco2"] = 40.0 + 6.0 * N(n)
    c["lactate"] = lognorm(np.log(1.5) + 0.15 * m + 0.25 * u + 0.9 * s, 0.35 * lab_sd)

    med = 1.0 + 0.6 * m
    logit = -2.5 + 0.8 * m + 1.0 * u + 5.0 * s
    c["vasopressor_use"] = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(float)
    c["vasopressors"] = c["vasopressor_use"] * (1.0 + rng.poisson(2.0 * med * np.exp(0.3 * u)))
    c["beta_blockers"] = rng.poisson(med * np.exp(-0.2 + 0.15 * h)).astype(float)
    c["diuretics"] = rng.poisson(med * np.exp(-0.4 + 0.2 * u)).astype(float)
    c["ace_inhibitors"] = rng.poisson(0.5 * med * np.exp(0.2 * h)).astype(float)
    c["arbs"] = rng.poisson(0.3 * med, size=n).astype(float)
    c["ccbs"] = rng.poisson(0.4 * med * np.exp(0.3 * h)).astype(float)

    c["hr_cv"] = c["hr_std"] / c["hr_mean"]
    c["hr_trend"] = 0.3 * u + N(n)
    c["lability_events"] = rng.poisson(np.exp(0.5 + 0.3 * u + 0.8 * s)).astype(float)
    c["hrv"] = lognorm(np.log(40.0) - 0.2 * u, 0.3)
    c["icu_los_hours"] = 24.0 + rng.gamma(2.0, 36.0, size=n)
    c["n_bp_measurements"] = 2.0 + rng.poisson(40.0, size=n)

    c["bmi"] = np.clip(28.0 + 6.0 * N(n), 15.0, 60.0)
    sbp_b = (1 - s) * (128.0 + 16.0 * h + 0.15 * age) + s * (65.0 + 5.0 * N(n))
    dbp_b = (1 - s) * (74.0 + 0.35 * (sbp_b - 128.0) + 7.0 * N(n)) + s * (42.0 + 4.0 * N(n))
    c["sbp_baseline"] = sbp_b
    c["dbp_baseline"] = dbp_b
    c["pulse_pressure_baseline"] = sbp_b - dbp_b
    c["map_calculated"] = (sbp_b + 2.0 * dbp_b) / 3.0

    sbp_true, dbp_true = ground_truth(c)
    protocol = cfg.noise_scale * (1.0 + 0.25 * m)
    sbp = sbp_true + SBP_NOISE_SD * protocol * N(n)
    dbp = dbp_true + DBP_NOISE_SD * protocol * N(n)
    sbp = np.clip(sbp, SBP_RANGE[0], SBP_RANGE[1])
    dbp = np.clip(dbp, DBP_RANGE[0], DBP_RANGE[1])
    return c, sbp, dbp


def _synth_table(rng, cfg, shift, leaky, prefix, source_tag) -> CohortTable:
    n = cfg.n_patients
    c, sbp, dbp = _simulate(rng, cfg, shift)
    N = rng.standard_normal
    leak_cols = {
        "sbp_mean_6h": sbp + 2.0 * N(n),
        "dbp_mean_6h": dbp + 2.0 * N(n),
        "map_mean_6h": (sbp + 2.0 * dbp) / 3.0 + 2.0 * N(n),
        "verify_flag": (sbp < 100.0).astype(float),
    }
    specs = [ColumnSpec(name, kind, dom, unit) for name, kind, dom, unit in _SYNTH_COLUMNS]
    cols = [c[s.name] for s in specs]
    for name in leaky:
        specs.append(ColumnSpec(name, "binary" if name == "verify_flag" else "numeric", "vitals", "mmHg"))
        cols.append(leak_cols[name])
    X = np.column_stack(cols)

    if cfg.missing_rate > 0:
        names = [s.name for s in specs]
        sparse_rate = min(0.9, 8.0 * cfg.missing_rate)
        for j, name in enumerate(names):
            rate = cfg.missing_rate if name in MISSABLE else sparse_rate if name in SPARSE else 0.0
            if rate:
                X[rng.random(n) < rate, j] = np.nan

    if shift > 0:
        renames = dict(COSMETIC_RENAMES)
        renames.update(dict(VENDOR_RENAMES[: min(len(VENDOR_RENAMES), math.ceil(2 * shift))]))
        specs = [replace(s, name=renames.get(s.name, s.name)) for s in specs]

    groups = np.array([f"{prefix}{i:06d}" for i in range(n)], dtype=object)
    return CohortTable(tuple(specs), X, np.column_stack([sbp, dbp]), groups, source_tag)


def generate_synthetic_pair(cfg: SyntheticConfig) -> tuple[CohortTable, CohortTable]:
    """Generate an (internal, external) cohort pair.

    Both institutions draw from one latent-state model: a severity score and
    a hemodynamic set-point drive correlated vitals, labs, medications and
    baseline pressures; a Bernoulli(hypotension_fraction) shock state pulls
    baseline pressure down and lactate/vasopressor use up. Targets are
    :func:`ground_truth` of the observed features plus Gaussian noise with SD
    6 mmHg (SBP) and 7 mmHg (DBP), times ``noise_scale``.

    The external cohort applies ``shift_magnitude`` (m) as: severity mean
    +0.25m, age mean +4m years with SD x(1+0.1m), medication rates x(1+0.6m)
    and vasopressor logit +0.8m, lab means up (creatinine and lactate log
    +0.15m, sodium +1.5m, BNP log +0.3m) with lab SD x(1+0.2m), heart rate
    +3m bpm, SpO2 -0.5m, and target noise SD x(1+0.25m). For m > 0 it also
    renames four columns cosmetically and ceil(2m) (max 4) to vendor names
    that do not match after normalisation.

    Internal plants three leaky columns, external two. Output is a
    deterministic function of ``cfg``.
    """
    int_seq, ext_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    internal = _synth_table(
        np.random.default_rng(int_seq), cfg, 0.0, INTERNAL_LEAKY, "I", "internal"
    )
    external = _synth_table(
        np.random.default_rng(ext_seq), cfg, cfg.shift_magnitude, EXTERNAL_LEAKY, "E", "external"
    )
    return internal, external
