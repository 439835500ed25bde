"""Command-line entry point: ``loadlens <command> -c run.yaml``.

Commands run the pipeline one stage at a time and leave fixed artifacts in
the config's output directory::

    analyze   profile.json, kernels.json
    train     checkpoint.zip, train_log.json
    evaluate  metrics.json
    explain   significance.json
    perturb   perturbation.json
    run       all of the above in order (perturb only if the config lists perturbations)

Exit status is 0 on success, 2 for invalid input or config, 3 when a stage
fails at run time (missing or untrained checkpoint, diverged training).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import yaml

from .config import RunConfig, bundled_config, load_config
from .dataset import split, standardize
from .errors import IoError, RuntimeFailure, ValidationError
from .interpret import PerturbationSpec, emit_significance_heatmap, extract_significance, run_perturbations
from .model import TrainedModel, load_checkpoint, read_checkpoint_meta, save_checkpoint
from .pipeline import fit, persistence_score, prepare_for, score
from .similarity import emit_similarity_heatmap, recommend_kernels, similarity_profile

log = logging.getLogger("loadlens")

PROFILE = "profile.json"
KERNELS = "kernels.json"
CHECKPOINT = "checkpoint.zip"
TRAIN_LOG = "train_log.json"
METRICS = "metrics.json"
SIGNIFICANCE = "significance.json"
PERTURBATION = "perturbation.json"

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _stamp(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash, "seed": cfg.seed}


def _write_json(path: Path, payload: dict) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _read_json(path: Path, what: str) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"{path} not found; run '{what}' first") from exc
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _check_stamp(cfg: RunConfig, payload: dict, path: Path) -> None:
    found = payload.get("config_hash")
    if found is not None and found != cfg.config_hash:
        raise ValidationError(f"{path} was produced by config {found}, current config is {cfg.config_hash}")


def resolve_kernels(cfg: RunConfig) -> tuple[int, ...]:
    if cfg.kernels is not None:
        return cfg.kernels
    path = cfg.out_dir / KERNELS
    payload = _read_json(path, "analyze")
    _check_stamp(cfg, payload, path)
    return tuple(payload["kernels"])


def cmd_analyze(cfg: RunConfig) -> dict:
    """Similarity profile of the standardized training load and a kernel recommendation."""
    ds = cfg.load_dataset()
    train_ds = standardize(split(ds, cfg.split)[0])
    profile = similarity_profile(train_ds.load, cfg.P, cfg.W)
    n = cfg.auto_kernels or len(cfg.kernels)
    rec = recommend_kernels(profile, n)
    chosen = rec.kernel_sizes if cfg.kernels is None else cfg.kernels
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    emit_similarity_heatmap(profile, cfg.out_dir / PROFILE, cfg.image, _stamp(cfg))
    payload = {"kind": "kernels", "source": "auto" if cfg.kernels is None else "config",
               "kernels": sorted(chosen), "recommendation": rec.to_dict(), **_stamp(cfg)}
    _write_json(cfg.out_dir / KERNELS, payload)
    log.info("periods %s -> kernels %s", list(rec.periods), list(rec.kernel_sizes))
    return payload


def cmd_train(cfg: RunConfig) -> dict:
    ds = cfg.load_dataset()
    exp = cfg.experiment(resolve_kernels(cfg), ds.feature_names)
    trained, _ = fit(ds, exp)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    digest = save_checkpoint(trained, cfg.out_dir / CHECKPOINT,
                             {**_stamp(cfg), "dataset": ds.fingerprint()})
    payload = {"kind": "train_log", "checkpoint_sha256": digest, "epochs": len(trained.log),
               "log": trained.log, **_stamp(cfg)}
    _write_json(cfg.out_dir / TRAIN_LOG, payload)
    log.info("trained %d epochs, checkpoint %s", len(trained.log), digest[:12])
    return payload


def _load_model(cfg: RunConfig, checkpoint: Path | None) -> tuple[TrainedModel, Path]:
    path = checkpoint or cfg.out_dir / CHECKPOINT
    if not path.exists():
        raise IoError(f"checkpoint {path} does not exist; run 'train' first")
    _check_stamp(cfg, read_checkpoint_meta(path), path)
    return load_checkpoint(path), path


def cmd_evaluate(cfg: RunConfig, checkpoint: Path | None = None) -> dict:
    trained, path = _load_model(cfg, checkpoint)
    ds = cfg.load_dataset()
    exp = cfg.experiment(trained.config.kernels, ds.feature_names)
    if trained.config.feature_names != exp.model.feature_names:
        raise ValidationError(f"checkpoint features {trained.config.feature_names} do not match "
                              f"dataset features {exp.model.feature_names}")
    data = prepare_for(ds, exp)
    reports = score(trained, data.test_windows)
    payload = {"kind": "metrics", "checkpoint": path.name,
               "test_windows": data.test_windows.fingerprint(),
               **{units: r.to_dict() for units, r in reports.items()},
               "persistence": persistence_score(data.test_windows).to_dict(), **_stamp(cfg)}
    _write_json(cfg.out_dir / METRICS, payload)
    log.info("test MSE %.4f (standardized), persistence %.4f",
             reports["standardized"].mse, payload["persistence"]["mse"])
    return payload


def cmd_explain(cfg: RunConfig, checkpoint: Path | None = None) -> dict:
    trained, _ = _load_model(cfg, checkpoint)
    report = extract_significance(trained, cfg.load_dataset().fingerprint())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    emit_significance_heatmap(report, cfg.out_dir / SIGNIFICANCE, cfg.image, _stamp(cfg))
    log.info("feature ranking %s", report.ranking())
    return {**report.to_dict(), **_stamp(cfg)}


def _read_specs(cfg: RunConfig, specs_path: Path | None) -> list[PerturbationSpec]:
    if specs_path is None:
        entries = list(cfg.perturbations)
    else:
        try:
            loaded = yaml.safe_load(specs_path.read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read perturbation specs {specs_path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ValidationError(f"{specs_path} is not valid YAML: {exc}") from exc
        entries = loaded.get("perturbations", []) if isinstance(loaded, dict) else loaded
    if not isinstance(entries, list) or not all(isinstance(e, dict) for e in entries):
        raise ValidationError("perturbation specs must be a list of mappings")
    return [PerturbationSpec.from_dict(e) for e in entries]


def cmd_perturb(cfg: RunConfig, specs_path: Path | None = None) -> dict:
    specs = _read_specs(cfg, specs_path)
    ds = cfg.load_dataset()
    exp = cfg.experiment(resolve_kernels(cfg), ds.feature_names)
    report = run_perturbations(ds, exp, specs)
    payload = {**report.to_dict(), **_stamp(cfg)}
    _write_json(cfg.out_dir / PERTURBATION, payload)
    for label, delta in report.deltas().items():
        log.info("%s: %s", label, "failed" if delta is None else f"dMSE {delta['mse']:+.4f}")
    return payload


def cmd_run(cfg: RunConfig) -> dict:
    out = {"analyze": cmd_analyze(cfg), "train": cmd_train(cfg), "evaluate": cmd_evaluate(cfg),
           "explain": cmd_explain(cfg)}
    if cfg.perturbations:
        out["perturb"] = cmd_perturb(cfg)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loadlens", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", type=Path, required=True, help="run config (YAML)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. --set train.epochs=5 (repeatable)")
        p.add_argument("--out", type=Path, help="override the output directory")
        return p

    add("analyze", "similarity profile and kernel recommendation")
    add("train", "train and write a checkpoint")
    for name, text in (("evaluate", "test-set metrics for a checkpoint"),
                       ("explain", "significance scores of a checkpoint")):
        add(name, text).add_argument("--checkpoint", type=Path, help=f"default: <out_dir>/{CHECKPOINT}")
    add("perturb", "retrain with features or branches removed").add_argument(
        "--specs", type=Path, help="YAML list of perturbations (default: the config's 'perturbations')")
    add("run", "analyze, train, evaluate, explain (and perturb if configured)")
    sub.add_parser("example-config", help="print the bundled synthetic config")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "example-config":
        sys.stdout.write(yaml.safe_dump(bundled_config(), sort_keys=False))
        return EXIT_OK
    try:
        overrides = list(args.overrides) + ([f"out_dir={args.out}"] if args.out else [])
        cfg = load_config(args.config, overrides)
        if args.command == "analyze":
            result = cmd_analyze(cfg)
        elif args.command == "train":
            result = cmd_train(cfg)
        elif args.command == "evaluate":
            result = cmd_evaluate(cfg, args.checkpoint)
        elif args.command == "explain":
            result = cmd_explain(cfg, args.checkpoint)
        elif args.command == "perturb":
            result = cmd_perturb(cfg, args.specs)
        else:
            result = cmd_run(cfg)
    except ValidationError as exc:
        print(f"loadlens: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RuntimeFailure as exc:
        print(f"loadlens: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"command": args.command, "out_dir": str(cfg.out_dir), **_stamp(cfg)}))
    log.debug("%s", json.dumps(result, default=str)[:2000])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
