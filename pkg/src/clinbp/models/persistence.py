"""Model file format.

A model file is gzip-compressed UTF-8 JSON::

    {"format": "clinbp-model", "format_version": 1,
     "model": FittedEnsemble.to_dict(), ...extra}

``model`` holds the feature names and schema hash, preprocessing state
(variance mask, medians, IQRs, Yeo-Johnson lambdas), every tree as parallel
node arrays, ridge combiner weights, blend weights, quantile coefficients and
the risk-tier width percentiles. Floats are written with ``repr`` precision,
so a loaded model predicts bit-identically.
"""

from __future__ import annotations

import gzip
import json

from ..errors import ConfigError
from .ensemble import FittedEnsemble

FORMAT_NAME = "clinbp-model"
FORMAT_VERSION = 1


def save_model(model: FittedEnsemble, path, extra: dict | None = None) -> None:
    doc = {"format": FORMAT_NAME, "format_version": FORMAT_VERSION, "model": model.to_dict()}
    if extra:
        doc.update(extra)
    payload = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    # no name and mtime=0 keep the bytes independent of path and time
    with open(path, "wb") as fh, gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
        gz.write(payload)


def load_model(path) -> tuple[FittedEnsemble, dict]:
    try:
        with gzip.open(path, "rb") as fh:
            doc = json.loads(fh.read().decode())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: not a readable model file ({exc})") from exc
    if doc.get("format") != FORMAT_NAME:
        raise ConfigError(f"{path}: not a model file")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported model format version {doc.get('format_version')}")
    model = FittedEnsemble.from_dict(doc.pop("model"))
    return model, doc
