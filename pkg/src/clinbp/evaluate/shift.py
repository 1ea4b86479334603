"""Distribution-shift diagnostics between two cohorts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cohort import CohortTable

DEFAULT_BINS = 32


def kl_discrete(p, q) -> float:
    """sum p log(p / q) in nats for two probability vectors (0 log 0 = 0)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p, q = p / p.sum(), q / q.sum()
    nz = p > 0
    if np.any(q[nz] == 0):
        return float("inf")
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def kl_divergence(p_sample, q_sample, bins: int = DEFAULT_BINS) -> float:
    """KL(P || Q) from samples via shared equal-width bins over the pooled
    range. Each histogram is add-one smoothed, (count + 1) / (n + bins), so
    the result is always finite. NaNs are ignored."""
    p = np.asarray(p_sample, dtype=float)
    q = np.asarray(q_sample, dtype=float)
    p, q = p[~np.isnan(p)], q[~np.isnan(q)]
    if p.size == 0 or q.size == 0:
        raise ValueError("both samples must be non-empty")
    lo = min(p.min(), q.min())
    hi = max(p.max(), q.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    cp, _ = np.histogram(p, edges)
    cq, _ = np.histogram(q, edges)
    pp = (cp + 1.0) / (p.size + bins)
    qq = (cq + 1.0) / (q.size + bins)
    return max(0.0, kl_discrete(pp, qq))


@dataclass
class ShiftProfile:
    kl: dict  # feature -> nats
    domain_means: dict  # domain tag -> mean KL
    alignment_coverage: float | None = None
    generalizability: dict = field(default_factory=dict)  # target -> percentage

    @property
    def mean_kl(self) -> float:
        return float(np.mean(list(self.kl.values()))) if self.kl else 0.0

    def to_dict(self) -> dict:
        return {
            "kl": dict(self.kl),
            "mean_kl": self.mean_kl,
            "domain_means": dict(self.domain_means),
            # JSON output sorts keys, so the ordering is kept explicitly
            "domain_ranking": list(self.domain_means),
            "alignment_coverage": self.alignment_coverage,
            "generalizability": dict(self.generalizability),
        }


def shift_profile(internal: CohortTable, external: CohortTable, bins: int = DEFAULT_BINS,
                  alignment_coverage: float | None = None) -> ShiftProfile:
    """Per-feature KL(internal || external) over the features both share by
    name, averaged per domain tag (sorted by decreasing mean)."""
    ext = set(external.feature_names)
    kl, by_domain = {}, {}
    for spec in internal.schema:
        if spec.name not in ext:
            continue
        a, b = internal.column(spec.name), external.column(spec.name)
        if np.all(np.isnan(a)) or np.all(np.isnan(b)):
            continue
        v = kl_divergence(a, b, bins)
        kl[spec.name] = v
        by_domain.setdefault(spec.domain_tag, []).append(v)
    means = {k: float(np.mean(v)) for k, v in by_domain.items()}
    means = dict(sorted(means.items(), key=lambda kv: (-kv[1], kv[0])))
    return ShiftProfile(kl, means, alignment_coverage)
