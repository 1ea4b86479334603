from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError

# declared hyperparameter search space
SEARCH_BOUNDS = {
    "max_depth": (3, 10),
    "n_estimators": (50, 500),
    "learning_rate": (0.001, 0.2),
}


@dataclass(frozen=True)
class TreeParams:
    """Tree-ensemble hyperparameters.

    Structural sanity is checked on construction; :meth:`check_search_bounds`
    additionally enforces the declared search space and is applied to
    user configuration and tuning candidates.
    """

    max_depth: int = 3
    min_samples_leaf: int = 5
    n_estimators: int = 100
    learning_rate: float = 0.1
    subsample: float = 1.0
    feature_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 < self.subsample <= 1:
            raise ConfigError("subsample must be in (0, 1]")
        if not 0 < self.feature_fraction <= 1:
            raise ConfigError("feature_fraction must be in (0, 1]")

    def check_search_bounds(self) -> "TreeParams":
        for name, (lo, hi) in SEARCH_BOUNDS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ConfigError(f"{name}={v} outside the search space [{lo}, {hi}]")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "TreeParams":
        d = asdict(self)
        d.update(kw)
        return TreeParams(**d)
