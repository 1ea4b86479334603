"""Command-line interface.

Exit codes: 0 success, 1 data error, 2 configuration error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import pandas as pd

from .. import __version__
from ..cohort import write_cohort, write_schema
from ..evaluate.ablation import ablation_run
from ..errors import ClinBPError, ConfigError, DataError, InvariantError
from ..models.ensemble import predict_with_intervals
from ..models.persistence import FORMAT_VERSION, load_model, save_model
from ..parallel import available_threads
from .config import RunConfig, default_config, load_config
from .pipeline import (
    assert_nested,
    load_external,
    load_internal,
    prepare,
    prepare_for_scoring,
    stage,
    train,
    validate_external,
)

log = logging.getLogger("clinbp")

MODEL_FILE = "model.clinbp.gz"
REPORT_FILE = "report.json"


def report_hash(report: dict) -> str:
    body = {k: v for k, v in report.items() if k not in ("timestamps", "report_hash")}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def finalize_report(cfg: RunConfig, sections: dict, started: dt.datetime) -> dict:
    report = {
        "artifact_version": __version__,
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        **sections,
    }
    report["report_hash"] = report_hash(report)
    report["timestamps"] = {
        "started": started.isoformat(timespec="seconds"),
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    return report


def write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj) + "\n")


def _now():
    return dt.datetime.now(dt.timezone.utc)


def _outdir(args) -> Path:
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _config(args) -> RunConfig:
    if args.config:
        return load_config(args.config, args.seed)
    cfg = default_config(0 if args.seed is None else args.seed)
    log.info("no --config given; using the default synthetic configuration")
    return cfg


def cmd_generate(args) -> int:
    cfg = _config(args)
    if cfg.synthetic is None:
        raise ConfigError("generate needs a synthetic block in the configuration")
    out = _outdir(args)
    internal = load_internal(cfg)
    external = load_external(cfg)
    write_cohort(internal, out / "internal.csv")
    write_cohort(external, out / "external.csv")
    write_schema(internal.full_schema(), out / "internal_schema.yaml")
    write_schema(external.full_schema(), out / "external_schema.yaml")
    print(f"wrote {internal.n_rows} internal and {external.n_rows} external rows to {out}")
    return 0


def cmd_train(args) -> int:
    started = _now()
    cfg = _config(args)
    out = _outdir(args)
    res = train(cfg, args.threads)
    report = finalize_report(cfg, res.report, started)
    assert_nested(report)
    save_model(res.model, out / MODEL_FILE, {
        "config": cfg.to_dict(), "config_hash": cfg.hash(), "internal_sq_errors": res.internal_sq_errors,
    })
    write_json(out / REPORT_FILE, report)
    (out / "report.txt").write_text(res.text)
    pd.DataFrame(res.cv_series).to_csv(out / "cv_series.csv", index=False, lineterminator="\n")
    print(res.text, end="")
    print(f"report hash {report['report_hash']}")
    return 0


def _model_path(args) -> Path:
    return Path(args.model) if args.model else Path(args.output) / MODEL_FILE


def cmd_predict(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    model, _ = load_model(_model_path(args))
    raw = load_external(cfg, args.cohort, args.schema) if args.cohort else load_internal(cfg)
    *_, table, _ = prepare_for_scoring(raw, model, cfg)
    with stage("predict"):
        preds = predict_with_intervals(model, table)
    frame = preds.to_frame()
    frame.insert(0, "group_id", list(table.group_id))
    path = out / "predictions.csv"
    frame.to_csv(path, index=False, lineterminator="\n")
    print(f"wrote {len(frame)} predictions to {path}")
    return 0


def cmd_validate_external(args) -> int:
    started = _now()
    cfg = _config(args)
    out = _outdir(args)
    model, extra = load_model(_model_path(args))
    external = load_external(cfg, args.cohort, args.schema)
    internal = load_internal(cfg)
    section, preds, table = validate_external(model, external, internal, cfg, extra.get("internal_sq_errors"))
    report = finalize_report(cfg, {"external": section}, started)
    write_json(out / "external_report.json", report)
    if section["alignment_warning"]:
        print(f"WARNING: feature alignment coverage {section['alignment']['coverage']:.0%} is below 50%")
    for name, g in section["generalizability"].items():
        print(f"{name.upper()}: external RMSE {section['metrics'][name]['rmse']:.2f} mmHg, degradation {g:+.1f}%")
    return 0


def cmd_ablate(args) -> int:
    started = _now()
    cfg = _config(args)
    out = _outdir(args)
    prep = prepare(load_internal(cfg), cfg)
    sel = prep.selected
    ens = replace(cfg.model, transform_columns=tuple(c for c in cfg.model.transform_columns if c in sel.feature_names))
    with stage("ablation"):
        result = ablation_run(sel, ens, cfg.cv_folds, cfg.seed, threads=args.threads)
    report = finalize_report(cfg, {"ablation": result}, started)
    write_json(out / "ablation.json", report)
    for code, entry in result["categories"].items():
        if "impact" in entry:
            imp = entry["impact"]
            print(f"{code} ({entry['domain']}): SBP {imp['sbp']['percent']:+.1f}%  DBP {imp['dbp']['percent']:+.1f}%")
        else:
            print(f"{code} ({entry['domain']}): skipped, {entry['skipped']}")
    for name, entry in result["components"].items():
        imp = entry["impact"]
        print(f"{name}: SBP {imp['sbp']['percent']:+.1f}%  DBP {imp['dbp']['percent']:+.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration YAML (default: built-in synthetic run)")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--threads", type=int, default=available_threads(), help="worker cap")
    common.add_argument("--output", default="runs/latest", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="clinbp", description="Blood-pressure regression pipeline.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic internal/external cohort pair") \
        .set_defaults(func=cmd_generate)
    sub.add_parser("train", parents=[common], help="cross-validate, fit and write model + report") \
        .set_defaults(func=cmd_train)
    for name, func, help_ in (
        ("predict", cmd_predict, "score a cohort with a saved model"),
        ("validate-external", cmd_validate_external, "evaluate a saved model on an external cohort"),
    ):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("--model", help=f"model file (default: <output>/{MODEL_FILE})")
        sp.add_argument("--cohort", help="cohort CSV (default: from the configuration)")
        sp.add_argument("--schema", help="schema YAML for --cohort")
        sp.set_defaults(func=func)
    sub.add_parser("ablate", parents=[common], help="feature-category and component ablation") \
        .set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except ClinBPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError, AssertionError) as exc:
        err = InvariantError(f"internal error: {exc!r}")
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code


if __name__ == "__main__":
    sys.exit(main())
