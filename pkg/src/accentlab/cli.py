"""Command-line entry point and config-driven experiment runner.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration or
arguments. Failures print a one-line JSON error record on stderr; runtime
failures also leave it as ``error.json`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .analysis import TSNEParams, export_attention, export_embedding, pca, tsne
from .audio_io import ACCENTS, Manifest, read_manifest, read_wav, resample, scan_dataset, write_manifest, write_wav
from .features import (
    FeatureScaler,
    MfccMatrix,
    apply_scaler,
    extract_manifest,
    feature_path,
    flatten,
    mfcc_sequence,
    read_feature_file,
    write_feature_file,
)
from .models import ConfigError as ModelConfigError
from .models import ModelConfig, attention_scores, build_model, load_model
from .rng import substream
from .segmentation import split_on_silence
from .training_eval import (
    AccentClassifier,
    Converter,
    FeatureSet,
    Metrics,
    SplitSpec,
    TrainHyper,
    align_pairs,
    evaluate_classifier,
    evaluate_neutralizer,
    fit_feature_scaler,
    make_split,
    multitarget_examples,
    train_classifier,
    train_multitarget,
    train_neutralizer,
)

log = logging.getLogger("accentlab")

SCHEMA_VERSION = 1
TASKS = ("classify", "neutralize", "neutralize-mt", "analyze", "split", "extract")
NEEDS_MODEL = ("classify", "neutralize", "neutralize-mt")


class ConfigInvalid(Exception):
    def __init__(self, diagnostics):
        super().__init__("; ".join(f"{f}: {m}" for f, m in diagnostics))
        self.diagnostics = list(diagnostics)


# -- configuration ------------------------------------------------------------

@dataclass
class ExperimentConfig:
    task: str
    seed: int
    output: Path
    name: str = ""
    dataset_root: Path | None = None
    manifest: Path | None = None
    features: Path | None = None
    split: SplitSpec | None = None
    model: dict = field(default_factory=dict)
    train: TrainHyper = field(default_factory=TrainHyper)
    neutralize: dict = field(default_factory=dict)
    analyze: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _set_path(d: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    for k in keys[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigInvalid([(dotted, "cannot override inside a non-mapping value")])
    d[keys[-1]] = value


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config mapping; every problem is reported, not just the first."""
    diag = []
    if not isinstance(raw, dict):
        raise ConfigInvalid([("<root>", "config must be a mapping")])
    known = {"version", "task", "name", "seed", "dataset", "split", "model", "train",
             "neutralize", "analyze", "output"}
    for k in sorted(set(raw) - known):
        diag.append((k, "unknown field"))
    if raw.get("version") != SCHEMA_VERSION:
        diag.append(("version", f"must be {SCHEMA_VERSION}, got {raw.get('version')!r}"))
    task = raw.get("task")
    if task not in TASKS:
        diag.append(("task", f"must be one of {list(TASKS)}, got {task!r}"))
    seed = raw.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        diag.append(("seed", "required non-negative integer"))
    if not raw.get("output"):
        diag.append(("output", "required output directory"))

    ds = raw.get("dataset") or {}
    if not isinstance(ds, dict):
        diag.append(("dataset", "must be a mapping"))
        ds = {}
    for k in sorted(set(ds) - {"root", "manifest", "features"}):
        diag.append((f"dataset.{k}", "unknown field"))
    root = Path(ds["root"]) if ds.get("root") else None
    manifest = Path(ds["manifest"]) if ds.get("manifest") else None
    features = Path(ds["features"]) if ds.get("features") else None
    if root is None and manifest is None:
        diag.append(("dataset.root", "required (or dataset.manifest)"))
    if root is not None and not root.is_dir():
        diag.append(("dataset.root", f"directory does not exist: {root}"))
    if manifest is not None and not manifest.is_file():
        diag.append(("dataset.manifest", f"file does not exist: {manifest}"))

    split = None
    if task in NEEDS_MODEL:
        try:
            split = SplitSpec(**{"seed": seed if isinstance(seed, int) else 0, **(raw.get("split") or {})})
        except (TypeError, ValueError) as exc:
            diag.append(("split", str(exc)))

    model = raw.get("model") or {}
    if task in NEEDS_MODEL:
        if not isinstance(model, dict) or "family" not in model:
            diag.append(("model.family", "required"))
        else:
            probe = dict(model)
            probe.setdefault("n_classes", 2)
            try:
                ModelConfig.from_dict(probe)
            except (ModelConfigError, TypeError) as exc:
                diag.append(("model", str(exc)))

    train = TrainHyper()
    t = raw.get("train") or {}
    try:
        base = {"optimizer": "rmsprop"} if task in ("neutralize", "neutralize-mt") else {}
        train = TrainHyper(**{**base, **t, "seed": seed if isinstance(seed, int) else 0})
    except (TypeError, ValueError) as exc:
        diag.append(("train", str(exc)))

    neu = raw.get("neutralize") or {}
    if task == "neutralize":
        for k in ("source", "target"):
            if neu.get(k) not in ACCENTS:
                diag.append((f"neutralize.{k}", f"must be an accent name, got {neu.get(k)!r}"))
        if neu.get("source") is not None and neu.get("source") == neu.get("target") and not neu.get("identity"):
            diag.append(("neutralize.target", "equals source; set identity: true for an identity model"))
    if task == "neutralize-mt":
        routes = neu.get("routes")
        if not routes or not all(isinstance(r, (list, tuple)) and len(r) == 2 and all(a in ACCENTS for a in r)
                                 for r in routes):
            diag.append(("neutralize.routes", "list of [source, target] accent-name pairs required"))
    clf = neu.get("classifier")
    if clf is not None and not Path(clf).is_file():
        diag.append(("neutralize.classifier", f"checkpoint does not exist: {clf}"))

    an = raw.get("analyze") or {}
    if task == "analyze":
        if an.get("method", "pca") not in ("pca", "tsne"):
            diag.append(("analyze.method", "must be pca or tsne"))
        if int(an.get("dims", 2)) not in (2, 3):
            diag.append(("analyze.dims", "must be 2 or 3"))

    if diag:
        raise ConfigInvalid(diag)
    return ExperimentConfig(task=task, seed=seed, output=Path(raw["output"]), name=str(raw.get("name") or task),
                            dataset_root=root, manifest=manifest, features=features, split=split,
                            model=dict(model), train=train, neutralize=dict(neu), analyze=dict(an), raw=raw)


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a YAML config and apply ``key.path=value`` overrides (values parsed as YAML)."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigInvalid([("<file>", f"config file not found: {path}")]) from None
    except yaml.YAMLError as exc:
        raise ConfigInvalid([("<file>", f"not valid YAML: {exc}")]) from None
    if not isinstance(raw, dict):
        raise ConfigInvalid([("<root>", "config must be a mapping")])
    for item in overrides:
        if "=" not in item:
            raise ConfigInvalid([(item, "override must look like key.path=value")])
        key, value = item.split("=", 1)
        _set_path(raw, key.strip(), yaml.safe_load(value))
    return parse_config(raw)


# -- shared helpers -----------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _dataset_manifest(cfg: ExperimentConfig) -> Manifest:
    return read_manifest(cfg.manifest) if cfg.manifest is not None else scan_dataset(cfg.dataset_root)


def _feature_dir(cfg: ExperimentConfig) -> Path:
    return cfg.features if cfg.features is not None else cfg.output / "features"


def _features(manifest: Manifest, feature_dir: Path) -> FeatureSet:
    """Feature set of ``manifest``, extracting any missing feature files first."""
    missing = [e for e in manifest if not feature_path(feature_dir, e).is_file()]
    if missing:
        log.info("extracting %d feature files into %s", len(missing), feature_dir)
        extract_manifest(manifest.subset(missing), feature_dir)
    mats = [read_feature_file(feature_path(feature_dir, e)) for e in manifest]
    return FeatureSet(np.stack([m.values for m in mats]),
                      np.array([m.valid_frames for m in mats], dtype=np.int64),
                      manifest.labels(), manifest)


def _subset_accent(fs: FeatureSet, accent: str) -> FeatureSet:
    idx = np.flatnonzero(np.array([e.accent == accent for e in fs.manifest]))
    m = fs.manifest.subset([fs.manifest.entries[i] for i in idx])
    return FeatureSet(fs.values[idx], fs.valid[idx], fs.labels[idx], m)


def _load_classifier(path) -> AccentClassifier:
    model = load_model(path)
    extra = _checkpoint_extra(path)
    if "scaler" not in extra or "accents" not in extra:
        raise ValueError(f"{path} is not a classifier checkpoint written by this tool")
    return AccentClassifier(model, FeatureScaler.from_json(extra["scaler"]), tuple(extra["accents"]))


def _checkpoint_extra(path) -> dict:
    from .autodiff import load_checkpoint

    return load_checkpoint(path)[2]


def _snapshot(cfg: ExperimentConfig) -> None:
    cfg.output.mkdir(parents=True, exist_ok=True)
    snap = dict(cfg.raw)
    snap["seed"] = cfg.seed
    snap["accentlab_version"] = __version__
    (cfg.output / "config.yaml").write_text(yaml.safe_dump(snap, sort_keys=True), encoding="utf-8")


def _metrics_record(cfg: ExperimentConfig, body: dict, context: dict) -> dict:
    return {"task": cfg.task, "name": cfg.name, "seed": cfg.seed, "context": context, **body}


# -- tasks --------------------------------------------------------------------

def _split_sets(cfg: ExperimentConfig):
    manifest = _dataset_manifest(cfg)
    train_m, test_m = make_split(manifest, cfg.split)
    write_manifest(train_m, cfg.output / "split_train.jsonl")
    write_manifest(test_m, cfg.output / "split_test.jsonl")
    fdir = _feature_dir(cfg)
    return manifest, _features(train_m, fdir), _features(test_m, fdir)


def task_classify(cfg: ExperimentConfig) -> None:
    manifest, train, test = _split_sets(cfg)
    mcfg = {"n_classes": len(manifest.accents), **cfg.model}
    if mcfg["n_classes"] != len(manifest.accents):
        raise ValueError(f"class-count mismatch: model has {mcfg['n_classes']} classes, "
                         f"dataset has {len(manifest.accents)} accents")
    model = build_model(mcfg, substream(cfg.seed, "init"))
    scaler = fit_feature_scaler(train)
    report = train_classifier(model, train.scaled(scaler), train.labels, cfg.train)
    metrics = evaluate_classifier(model, test.scaled(scaler), test.labels)
    report.metrics, report.scaler = metrics, scaler
    model.save(cfg.output / "model.ckpt", extra={"scaler": scaler.to_json(), "accents": manifest.accents})
    _write_classifier_outputs(cfg, report, metrics, manifest.accents)


def _write_classifier_outputs(cfg, report, metrics: Metrics, accents) -> None:
    context = {"family": cfg.model.get("family"), "n_classes": len(accents), "split": cfg.split.to_dict()}
    _write_json(cfg.output / "metrics.json", _metrics_record(cfg, metrics.to_json(accents), context))
    (cfg.output / "confusion.csv").write_text(metrics.confusion_csv(accents), encoding="utf-8")
    if report is not None:
        _write_json(cfg.output / "train_report.json", report.to_json())


def task_eval(cfg: ExperimentConfig, model_path: Path) -> None:
    clf = _load_classifier(model_path)
    manifest, _, test = _split_sets(cfg)
    if list(clf.accents) != manifest.accents:
        raise ValueError(f"class-count mismatch: checkpoint accents {list(clf.accents)} "
                         f"differ from dataset accents {manifest.accents}")
    metrics = evaluate_classifier(clf.model, test.scaled(clf.scaler), test.labels, len(manifest.accents))
    _write_classifier_outputs(cfg, None, metrics, manifest.accents)


def _pair_arrays(src: FeatureSet, tgt: FeatureSet, scaler) -> tuple[np.ndarray, np.ndarray]:
    pairs = align_pairs(src.manifest, tgt.manifest)
    xs, ys = src.scaled(scaler), tgt.scaled(scaler)
    return np.stack([xs[i] for i, _ in pairs]), np.stack([ys[j] for _, j in pairs])


def task_neutralize(cfg: ExperimentConfig) -> None:
    manifest, train, test = _split_sets(cfg)
    source, target = cfg.neutralize["source"], cfg.neutralize["target"]
    for a in (source, target):
        if a not in manifest.accents:
            raise ValueError(f"accent {a!r} not present in the dataset")
    scaler = fit_feature_scaler(train)
    X, Y = _pair_arrays(_subset_accent(train, source), _subset_accent(train, target), scaler)
    model = build_model({**cfg.model, "multi_target": False, "skip_connections": False},
                        substream(cfg.seed, "init"))
    report = train_neutralizer(model, X, Y, cfg.train)
    report.scaler = scaler
    model.save(cfg.output / "model.ckpt", extra={"scaler": scaler.to_json(), "accents": manifest.accents,
                                                 "source": source, "target": target})
    Xt, Yt = _pair_arrays(_subset_accent(test, source), _subset_accent(test, target), scaler)
    body = {"test_mse": float(np.mean((model.reconstruct(Xt) - Yt) ** 2))}
    if cfg.neutralize.get("classifier"):
        clf = _load_classifier(cfg.neutralize["classifier"])
        conv = Converter(model, scaler)
        body["accuracy"] = evaluate_neutralizer(conv, clf, _subset_accent(test, source).matrices(),
                                                clf.accents.index(target))
    _write_json(cfg.output / "metrics.json",
                _metrics_record(cfg, body, {"family": model.config.family, "source": source, "target": target}))
    _write_json(cfg.output / "train_report.json", report.to_json())


def task_neutralize_mt(cfg: ExperimentConfig) -> None:
    manifest, train, test = _split_sets(cfg)
    ids = manifest.accent_index
    routes = [tuple(r) for r in cfg.neutralize["routes"]]
    for a in {a for r in routes for a in r}:
        if a not in ids:
            raise ValueError(f"accent {a!r} not present in the dataset")
    route_ids = [(ids[s], ids[t]) for s, t in routes]
    scaler = fit_feature_scaler(train)
    X, Y = multitarget_examples(train, scaler, route_ids)
    mcfg = {"multi_target": True, "skip_connections": True, **cfg.model}
    model = build_model(mcfg, substream(cfg.seed, "init"))
    report = train_multitarget(model, X, Y, cfg.train)
    report.scaler = scaler
    model.save(cfg.output / "model.ckpt", extra={"scaler": scaler.to_json(), "accents": manifest.accents})
    Xt, Yt = multitarget_examples(test, scaler, route_ids)
    body = {"test_mse": float(np.mean((model.reconstruct(Xt) - Yt) ** 2)), "routes": {}}
    if cfg.neutralize.get("classifier"):
        clf = _load_classifier(cfg.neutralize["classifier"])
        conv = Converter(model, scaler, n_accents=len(manifest.accents))
        for (s, t), (si, ti) in zip(routes, route_ids):
            acc = evaluate_neutralizer(conv.to(ti), clf, _subset_accent(test, s).matrices(), clf.accents.index(t))
            body["routes"][f"{s}->{t}"] = acc
        body["accuracy"] = float(np.mean(list(body["routes"].values())))
    _write_json(cfg.output / "metrics.json",
                _metrics_record(cfg, body, {"family": model.config.family, "routes": [list(r) for r in routes]}))
    _write_json(cfg.output / "train_report.json", report.to_json())


def run_analysis(manifest: Manifest, feature_dir: Path, out_csv: Path, method: str = "pca", dims: int = 2,
                 perplexity: float = 30.0, lr="auto", epochs: int = 1000, pca_pre: int | None = None,
                 seed: int = 0) -> dict:
    fs = _features(manifest, feature_dir)
    X = np.stack([flatten(m) for m in fs.matrices()])
    labels = np.array([e.accent for e in manifest])
    if method == "pca":
        emb = pca(X, dims).embedding(labels)
        summary = {"explained_variance_ratio": emb.params["explained_variance_ratio"]}
    else:
        if pca_pre:
            X = pca(X, min(pca_pre, *X.shape)).scores
        emb = tsne(X, labels, TSNEParams(perplexity=perplexity, learning_rate=lr, epochs=epochs,
                                         dims=dims, seed=seed))
        summary = {"final_kl": emb.history[-1], **emb.params}
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    export_embedding(emb, out_csv)
    return {"method": method, "dims": dims, "n": len(X), **summary}


def task_analyze(cfg: ExperimentConfig) -> None:
    a = cfg.analyze
    body = run_analysis(_dataset_manifest(cfg), _feature_dir(cfg), cfg.output / "embedding.csv",
                        method=a.get("method", "pca"), dims=int(a.get("dims", 2)),
                        perplexity=float(a.get("perplexity", 30.0)), lr=a.get("lr", "auto"),
                        epochs=int(a.get("epochs", 1000)), pca_pre=a.get("pca_pre"), seed=cfg.seed)
    _write_json(cfg.output / "metrics.json", _metrics_record(cfg, body, {}))


def task_split(cfg: ExperimentConfig) -> None:
    manifest = _dataset_manifest(cfg)
    write_manifest(manifest, cfg.output / "manifest.jsonl")
    _write_json(cfg.output / "metrics.json",
                _metrics_record(cfg, {"n": len(manifest), "speakers": manifest.speakers()}, {}))


def task_extract(cfg: ExperimentConfig) -> None:
    manifest = _dataset_manifest(cfg)
    paths = extract_manifest(manifest, _feature_dir(cfg))
    write_manifest(manifest, cfg.output / "manifest.jsonl")
    _write_json(cfg.output / "metrics.json", _metrics_record(cfg, {"n": len(paths)}, {}))


TASK_RUNNERS = {
    "classify": task_classify,
    "neutralize": task_neutralize,
    "neutralize-mt": task_neutralize_mt,
    "analyze": task_analyze,
    "split": task_split,
    "extract": task_extract,
}


# -- report -------------------------------------------------------------------

REPORT_TABLES = {
    "classify": ["run", "model", "classes", "accuracy"],
    "speaker": ["run", "train_speakers", "test_speakers", "accuracy"],
    "neutralize": ["run", "source", "target", "accuracy"],
    "mt": ["run", "route", "accuracy"],
}


def report_rows(records, table: str) -> list[list]:
    rows = []
    for r in records:
        ctx = r.get("context", {})
        if table == "classify" and r.get("task") == "classify":
            rows.append([r["name"], ctx.get("family"), ctx.get("n_classes"), r["accuracy"]])
        elif table == "speaker" and r.get("task") == "classify" and ctx.get("split", {}).get("kind") == "speaker":
            spk = ctx["split"]["speakers"]
            side = lambda k: "+".join(s for a in sorted(spk) for s in spk[a].get(k, []))  # noqa: E731
            rows.append([r["name"], side("train"), side("test"), r["accuracy"]])
        elif table == "neutralize" and r.get("task") == "neutralize" and "accuracy" in r:
            rows.append([r["name"], ctx["source"], ctx["target"], r["accuracy"]])
        elif table == "mt" and r.get("task") == "neutralize-mt":
            for route, acc in sorted(r.get("routes", {}).items()):
                rows.append([r["name"], route, acc])
    return rows


def write_report(metric_files, table: str, out) -> int:
    records = [json.loads(Path(p).read_text(encoding="utf-8")) for p in metric_files]
    rows = report_rows(records, table)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_TABLES[table])
    w.writerows(rows)
    Path(out).write_text(buf.getvalue(), encoding="utf-8")
    return len(rows)


# -- argument parsing ---------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message, [("<args>", message)])
        self.print_usage(sys.stderr)
        raise SystemExit(2)


def _emit_error(kind: str, message: str, diagnostics=None, out_dir: Path | None = None) -> None:
    rec = {"error": kind, "message": message}
    if diagnostics:
        rec["diagnostics"] = [{"field": f, "message": m} for f, m in diagnostics]
    line = json.dumps(rec, sort_keys=True)
    print(line, file=sys.stderr)
    if out_dir is not None and out_dir.is_dir():
        (out_dir / "error.json").write_text(line + "\n", encoding="utf-8")


def _add_config_args(p):
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int, help="override seed")
    p.add_argument("--out", help="override output directory")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--lr", type=float, help="override train.lr")
    p.add_argument("--batch-size", type=int, help="override train.batch_size")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field, e.g. model.family=mlp")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="accentlab", description="Accent classification and neutralization toolkit")
    ap.add_argument("--version", action="version", version=f"accentlab {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("split", help="split a long recording on silence")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--min-silence", type=float, default=2.0)

    p = sub.add_parser("manifest", help="index a dataset tree into a JSONL manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="write MFCC feature files for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--trim", action="store_true", help="trim leading/trailing silence first")

    p = sub.add_parser("resample", help="resample a WAV file by linear interpolation")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=int, default=16000)

    for name, help_ in [("run", "run the task named in the config"),
                        ("train-classifier", "train and evaluate an accent classifier"),
                        ("eval", "evaluate a classifier checkpoint on the config's test split"),
                        ("train-neutralizer", "train a pairwise accent converter"),
                        ("train-mt", "train a multi-target converter")]:
        p = sub.add_parser(name, help=help_)
        _add_config_args(p)
        if name == "eval":
            p.add_argument("--model", help="classifier checkpoint (default: <out>/model.ckpt)")

    p = sub.add_parser("neutralize", help="convert one clip or feature file with a trained converter")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True, help=".wav or feature file")
    p.add_argument("--out", required=True, help="output feature file")
    p.add_argument("--target", help="target accent name (multi-target models)")

    p = sub.add_parser("analyze", help="PCA or t-SNE embedding of a manifest's features")
    p.add_argument("--method", choices=["pca", "tsne"], default="pca")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", help="feature directory (missing files are extracted)")
    p.add_argument("--out", required=True)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--lr", default="auto")
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--dims", type=int, choices=[2, 3], default=2)
    p.add_argument("--pca-pre", type=int, help="reduce to this many PCA dims before t-SNE")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("attention-dump", help="write per-step attention scores for one clip")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="aggregate metrics.json files into a table CSV")
    p.add_argument("--table", choices=sorted(REPORT_TABLES), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("inputs", nargs="+", help="metrics.json files")

    p = sub.add_parser("synth", help="write a synthetic parallel corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--accents", required=True, help="comma-separated accent names")
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--sets", type=int, default=10)
    p.add_argument("--sentences", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    return ap


COMMAND_TASK = {"train-classifier": "classify", "eval": "classify",
                "train-neutralizer": "neutralize", "train-mt": "neutralize-mt"}


def _config_from_args(args) -> ExperimentConfig:
    overrides = list(args.set)
    for flag, key in (("seed", "seed"), ("out", "output"), ("epochs", "train.epochs"),
                      ("lr", "train.lr"), ("batch_size", "train.batch_size")):
        v = getattr(args, flag)
        if v is not None:
            overrides.append(f"{key}={json.dumps(v) if not isinstance(v, str) else v}")
    if args.command in COMMAND_TASK:
        overrides.append(f"task={COMMAND_TASK[args.command]}")
    return load_config(args.config, overrides)


def _read_matrix(path) -> MfccMatrix:
    p = Path(path)
    if p.suffix.lower() == ".wav":
        clip = read_wav(p)
        if clip.sample_rate_hz != 16000:
            clip = resample(clip, 16000)
        return mfcc_sequence(clip)
    return read_feature_file(p)


def _dispatch(args) -> None:
    cmd = args.command
    if cmd == "split":
        clip = read_wav(args.inp)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = Path(args.inp).stem
        parts = split_on_silence(clip, args.threshold, args.min_silence)
        for i, part in enumerate(parts, 1):
            write_wav(part, out / f"{stem}_{i:03d}.wav")
        print(json.dumps({"segments": len(parts)}))
    elif cmd == "manifest":
        m = scan_dataset(args.root)
        write_manifest(m, args.out)
        print(json.dumps({"entries": len(m), "accents": m.accents}))
    elif cmd == "extract":
        paths = extract_manifest(read_manifest(args.manifest), args.out, rate_hz=args.rate, trim=args.trim)
        print(json.dumps({"written": len(paths)}))
    elif cmd == "resample":
        write_wav(resample(read_wav(args.inp), args.rate), args.out)
    elif cmd == "neutralize":
        model = load_model(args.model)
        extra = _checkpoint_extra(args.model)
        scaler = FeatureScaler.from_json(extra["scaler"])
        accents = list(extra.get("accents", []))
        target_id = None
        if model.config.multi_target:
            if args.target not in accents:
                raise ValueError(f"--target must be one of {accents}")
            target_id = accents.index(args.target)
        conv = Converter(model, scaler, target_id, len(accents) or None)
        write_feature_file(conv.convert(_read_matrix(args.inp)), args.out)
    elif cmd == "analyze":
        lr = args.lr if args.lr == "auto" else float(args.lr)
        m = read_manifest(args.manifest)
        fdir = Path(args.features) if args.features else Path(args.out).parent / "features"
        summary = run_analysis(m, fdir, Path(args.out), args.method, args.dims, args.perplexity, lr,
                               args.epochs, args.pca_pre, args.seed)
        print(json.dumps(summary, sort_keys=True))
    elif cmd == "attention-dump":
        model = load_model(args.model)
        extra = _checkpoint_extra(args.model)
        x = apply_scaler(FeatureScaler.from_json(extra["scaler"]), _read_matrix(args.inp))
        scores, times = attention_scores(model, x)
        export_attention(scores, times, args.out)
    elif cmd == "report":
        n = write_report(args.inputs, args.table, args.out)
        print(json.dumps({"rows": n}))
    elif cmd == "synth":
        from .synth import write_corpus

        accents = [a.strip() for a in args.accents.split(",")]
        unknown = [a for a in accents if a not in ACCENTS]
        if unknown:
            raise ConfigInvalid([("--accents", f"unknown accents {unknown}")])
        m = write_corpus(args.out, accents, args.speakers, range(1, args.sets + 1),
                         range(1, args.sentences + 1), seed=args.seed)
        print(json.dumps({"entries": len(m)}))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = None
    try:
        if args.command in ("run",) + tuple(COMMAND_TASK):
            cfg = _config_from_args(args)
            out_dir = cfg.output
            _snapshot(cfg)
            if args.command == "eval":
                task_eval(cfg, Path(args.model) if args.model else cfg.output / "model.ckpt")
            else:
                TASK_RUNNERS[cfg.task](cfg)
        else:
            _dispatch(args)
    except ConfigInvalid as exc:
        _emit_error("config", "invalid configuration", exc.diagnostics)
        return 2
    except Exception as exc:  # runtime failure: record it and exit 1
        log.debug("runtime failure", exc_info=True)
        _emit_error("runtime", f"{type(exc).__name__}: {exc}", out_dir=out_dir)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
