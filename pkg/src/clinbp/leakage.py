"""Lexical removal of target-contaminated feature columns."""

from __future__ import annotations

from dataclasses import dataclass, field

from .cohort import CohortTable
from .errors import ConfigError, InvariantError

DEFAULT_PATTERNS = ("verify", "sbp_mean", "dbp_mean", "map_mean")


@dataclass(frozen=True)
class LeakagePatternSet:
    patterns: tuple[str, ...] = DEFAULT_PATTERNS
    extra_patterns: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "extra_patterns", tuple(self.extra_patterns))
        if not self.patterns:
            raise ConfigError("leakage pattern set must be non-empty")
        for p in self.all():
            if not p or p != p.lower():
                raise ConfigError(f"leakage patterns must be non-empty lowercase strings, got {p!r}")

    def all(self) -> tuple[str, ...]:
        return self.patterns + self.extra_patterns


@dataclass(frozen=True)
class LeakageReport:
    removed_columns: list[str] = field(default_factory=list)
    total_features: int = 0
    removal_rate: float = 0.0
    post_validation_matches: int = 0

    def to_dict(self) -> dict:
        return {
            "removed_columns": list(self.removed_columns),
            "total_features": self.total_features,
            "removal_rate": self.removal_rate,
            "post_validation_matches": self.post_validation_matches,
        }


def matching_columns(names, patterns) -> list[str]:
    return [c for c in names if any(p in c.lower() for p in patterns)]


def remove_leakage(table: CohortTable, patterns: LeakagePatternSet | None = None):
    """Drop every feature whose lowercased name contains a leakage pattern.

    Targets and group ids are not feature columns and are never scanned.
    Returns the cleaned table and a :class:`LeakageReport`.
    """
    patterns = patterns or LeakagePatternSet()
    pats = patterns.all()
    marked = matching_columns(table.feature_names, pats)
    clean = table.drop(marked) if marked else table
    remaining = matching_columns(clean.feature_names, pats)
    if remaining:
        raise InvariantError(f"leakage validation found surviving matches: {remaining}")
    total = table.n_features
    report = LeakageReport(
        removed_columns=marked,
        total_features=total,
        removal_rate=len(marked) / total if total else 0.0,
        post_validation_matches=len(remaining),
    )
    return clean, report
