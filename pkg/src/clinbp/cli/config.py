"""Run configuration: YAML in, validated dataclasses out, canonical hash."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..cohort import SyntheticConfig
from ..errors import ConfigError
from ..features import DEFAULT_PAIRS, DEFAULT_TRANSFORMS, DEFAULT_WHITELIST, FeaturePipelineConfig
from ..impute import ImputePolicy
from ..leakage import DEFAULT_PATTERNS, LeakagePatternSet
from ..models.ensemble import EnsembleConfig
from ..models.params import TreeParams

TUNING_METHODS = ("none", "grid", "bayes")


@dataclass(frozen=True)
class DataPaths:
    cohort: str | None = None
    schema: str | None = None
    external: str | None = None
    external_schema: str | None = None


@dataclass(frozen=True)
class TuningConfig:
    method: str = "none"
    budget: int = 30

    def __post_init__(self):
        if self.method not in TUNING_METHODS:
            raise ConfigError(f"tuning.method must be one of {TUNING_METHODS}")
        if self.budget < 1:
            raise ConfigError("tuning.budget must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    data: DataPaths = field(default_factory=DataPaths)
    synthetic: SyntheticConfig | None = None
    leakage: LeakagePatternSet = field(default_factory=LeakagePatternSet)
    impute: ImputePolicy = field(default_factory=ImputePolicy)
    features: FeaturePipelineConfig = field(default_factory=FeaturePipelineConfig)
    model: EnsembleConfig = field(default_factory=EnsembleConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    cv_folds: int = 5
    min_stratum: int = 30
    ablation: bool = False

    def __post_init__(self):
        if (self.data.cohort is None) == (self.synthetic is None):
            raise ConfigError("configure exactly one data source: data.cohort or a synthetic block")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        # user-supplied tree settings must respect the declared search space
        self.model.gbm.check_search_bounds()
        self.model.forest.replace(learning_rate=0.1).check_search_bounds()

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "data": asdict(self.data),
            "synthetic": None if self.synthetic is None else asdict(self.synthetic),
            "leakage": {"patterns": list(self.leakage.patterns), "extra_patterns": list(self.leakage.extra_patterns)},
            "impute": asdict(self.impute),
            "features": {
                "interaction_pairs": [list(p) for p in self.features.interaction_pairs],
                "transform_columns": list(self.features.transform_columns),
                "p_value_cutoff": self.features.p_value_cutoff,
                "vif_cutoff": self.features.vif_cutoff,
                "mi_cutoff": self.features.mi_cutoff,
                "target_feature_count": self.features.target_feature_count,
                "domain_whitelist": list(self.features.domain_whitelist),
            },
            "model": self.model.to_dict(),
            "tuning": asdict(self.tuning),
            "cv_folds": self.cv_folds,
            "min_stratum": self.min_stratum,
            "ablation": self.ablation,
        }
        # the ensemble seed and transform columns are derived, not configured
        d["model"].pop("seed")
        d["model"].pop("transform_columns")
        return d

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _pick(cls, d, where):
    if d is None:
        return {}
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return dict(d)


def _build(cls, d, where):
    try:
        return cls(**_pick(cls, d, where))
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def from_dict(raw: dict, seed: int | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    raw = dict(raw)
    unknown = sorted(set(raw) - {f.name for f in fields(RunConfig)})
    if unknown:
        raise ConfigError(f"unknown top-level keys {unknown}")
    run_seed = int(raw.get("seed", 0) if seed is None else seed)
    data = _build(DataPaths, raw.get("data"), "data")
    synthetic = None
    if raw.get("synthetic") is not None:
        syn = _pick(SyntheticConfig, raw["synthetic"], "synthetic")
        syn.setdefault("seed", run_seed)
        synthetic = _build(SyntheticConfig, syn, "synthetic")
    leak = _pick(LeakagePatternSet, raw.get("leakage"), "leakage")
    leakage = _build(LeakagePatternSet, {
        "patterns": tuple(leak.get("patterns", DEFAULT_PATTERNS)),
        "extra_patterns": tuple(leak.get("extra_patterns", ())),
    }, "leakage")
    impute = _build(ImputePolicy, raw.get("impute"), "impute")
    feat = _pick(FeaturePipelineConfig, raw.get("features"), "features")
    feat.setdefault("interaction_pairs", DEFAULT_PAIRS)
    feat.setdefault("transform_columns", DEFAULT_TRANSFORMS)
    feat.setdefault("domain_whitelist", DEFAULT_WHITELIST)
    features = _build(FeaturePipelineConfig, feat, "features")
    mdl = _pick(EnsembleConfig, raw.get("model"), "model")
    for key in ("seed", "transform_columns"):
        if key in mdl:
            raise ConfigError(f"model.{key} is derived and cannot be set")
    base = EnsembleConfig()
    for key in ("gbm", "forest"):
        params = _pick(TreeParams, mdl.get(key), f"model.{key}")
        if "seed" in params:
            raise ConfigError(f"model.{key}.seed is derived from the run seed")
        mdl[key] = getattr(base, key).replace(**params)
    if "quantiles" in mdl:
        mdl["quantiles"] = tuple(mdl["quantiles"])
    model = _build(EnsembleConfig, {**mdl, "seed": run_seed, "transform_columns": features.transform_columns}, "model")
    tuning = _build(TuningConfig, raw.get("tuning"), "tuning")
    return RunConfig(
        seed=run_seed,
        data=data,
        synthetic=synthetic,
        leakage=leakage,
        impute=impute,
        features=features,
        model=model,
        tuning=tuning,
        cv_folds=int(raw.get("cv_folds", 5)),
        min_stratum=int(raw.get("min_stratum", 30)),
        ablation=bool(raw.get("ablation", False)),
    )


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    cfg = from_dict(raw or {}, seed)
    # relative data paths resolve against the config file's directory
    base = path.parent
    d = cfg.data
    resolved = {k: (None if v is None else str((base / v) if not Path(v).is_absolute() else Path(v)))
                for k, v in asdict(d).items()}
    if resolved != asdict(d):
        object.__setattr__(cfg, "data", DataPaths(**resolved))
    return cfg


def default_config(seed: int = 0, n_patients: int = 1000) -> RunConfig:
    return from_dict({"seed": seed, "synthetic": {"n_patients": n_patients}})
