"""The ``gazelens`` command line: synthetic data generation, nested
cross-validation runs, and report comparison tables.

Configuration is INI-style (flat sections of key=value pairs); every
command is deterministic given its config file. A single master seed fans
out to named component streams, and GAZELENS_SEED overrides the
configured seed. Output files are written atomically.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import os
import sys
import tempfile

import numpy as np

from . import evaluation as ev
from . import stimulus as stim
from .corpus import (
    DEFAULT_CONTROL_MEAN,
    DEFAULT_CONTROL_STD,
    DEFAULT_EFFECT_SIZE,
    MEASURE_NAMES,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    load_manifest,
    write_dataset,
)
from .seeding import derive_seed

SEED_ENV_VAR = "GAZELENS_SEED"


class CliError(Exception):
    """User-facing configuration or input error; maps to exit code 1."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def _read_config(path: str) -> configparser.ConfigParser:
    if not os.path.exists(path):
        raise CliError(f"config: file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    return cp


def _master_seed(cp: configparser.ConfigParser) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"config: {SEED_ENV_VAR} must be an integer, got {env!r}") from None
    return cp.getint("run", "seed", fallback=0)


def _out_dir(cp: configparser.ConfigParser) -> str:
    out = cp.get("run", "out_dir", fallback="out")
    os.makedirs(out, exist_ok=True)
    return out


def _path(cp: configparser.ConfigParser, key: str, default: str | None = None) -> str | None:
    return cp.get("paths", key, fallback=default)


def synthetic_spec_from_config(cp: configparser.ConfigParser, seed: int) -> SyntheticSpec:
    sec = cp["synthetic"] if cp.has_section("synthetic") else {}

    def geti(key, default):
        return int(sec.get(key, default))

    mean = DEFAULT_CONTROL_MEAN.copy()
    std = DEFAULT_CONTROL_STD.copy()
    effect = DEFAULT_EFFECT_SIZE.copy()
    for i, name in enumerate(MEASURE_NAMES):
        if f"mean_{name}" in sec:
            mean[i] = float(sec[f"mean_{name}"])
        if f"std_{name}" in sec:
            std[i] = float(sec[f"std_{name}"])
        if f"effect_{name}" in sec:
            effect[i] = float(sec[f"effect_{name}"])
    spec = SyntheticSpec(
        n_subjects=geti("n_subjects", 62),
        n_dyslexic=geti("n_dyslexic", 33),
        n_sentences=geti("n_sentences", 60),
        word_count_min=geti("word_count_min", 7),
        word_count_max=geti("word_count_max", 13),
        retention_min=geti("retention_min", 24),
        retention_max=geti("retention_max", 59),
        skip_prob=float(sec.get("skip_prob", 0.1)),
        control_mean=mean,
        control_std=std,
        effect_size=effect,
        seed=derive_seed(seed, "synthetic"),
    )
    try:
        spec.validate()
    except ValueError as exc:
        raise CliError(f"config: invalid synthetic spec: {exc}") from None
    return spec


def settings_from_config(cp: configparser.ConfigParser, args) -> ev.CvSettings:
    seed = _master_seed(cp)
    model = args.model or cp.get("run", "model", fallback="lstm")
    budget_key = {"lstm": "lstm_budget", "cnn": "cnn_budget"}.get(model)
    budget = cp.getint("run", budget_key, fallback=0) if budget_key else 0
    settings = ev.CvSettings(
        budget=budget or None,
        k=cp.getint("run", "k_folds", fallback=10),
        seed=seed,
        jobs=args.jobs if args.jobs else cp.getint("run", "jobs", fallback=1),
        scope=cp.get("run", "svm_scope", fallback="sentence"),
        max_epochs=cp.getint("train", "max_epochs", fallback=200),
        patience=cp.getint("train", "patience", fallback=10),
        lr_mode=cp.get("run", "lr_sampling", fallback="uniform"),
        delta_policy=cp.get("run", "delta_policy", fallback="tuned"),
        meandiff_epochs=cp.getint("train", "meandiff_epochs", fallback=200),
        meandiff_lr=cp.getfloat("train", "meandiff_lr", fallback=1e-3),
    )
    if settings.delta_policy not in ("tuned", "fixed"):
        raise CliError(f"config: delta_policy must be 'tuned' or 'fixed', got {settings.delta_policy!r}")
    return settings


# ---------------------------------------------------------------------------
# atomic file helpers
# ---------------------------------------------------------------------------


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cp = _read_config(args.config)
    seed = _master_seed(cp)
    out = _out_dir(cp)
    spec = synthetic_spec_from_config(cp, seed)
    ds = generate_synthetic(spec)
    dataset_path = _path(cp, "dataset", os.path.join(out, "dataset.csv"))
    manifest_path = _path(cp, "manifest", os.path.join(out, "manifest.csv"))
    write_dataset(ds, dataset_path, manifest_path)
    print(f"synth: wrote {dataset_path} ({len(ds.subjects)} subjects, "
          f"{len(ds.sentences)} sentences, {len(ds.trials)} trials)")
    print(f"synth: wrote {manifest_path}")

    if cp.getboolean("synthetic", "sidecars", fallback=False):
        positions = ds.word_positions()
        emb_rng = np.random.default_rng(derive_seed(seed, "synthetic", "embeddings"))
        table = stim.EmbeddingTable({p: emb_rng.normal(size=stim.EMBED_DIM) for p in positions})
        emb_path = _path(cp, "embeddings", os.path.join(out, "embeddings.csv"))
        stim.write_embedding_table(table, emb_path, fmt="%.6g")
        print(f"synth: wrote {emb_path}")

        feat_rng = np.random.default_rng(derive_seed(seed, "synthetic", "features"))
        tags = ("NOUN", "VERB", "ADJ", "ADV", "PRON", "NUM", "PART")
        deps = ("nsubj", "obj", "advmod", "amod", "root", "cc")
        rows = {}
        for p in positions:
            rows[p] = stim.LinguisticFeatureRow(
                surprisal=float(np.abs(feat_rng.normal(3.0, 1.5))),
                pos_tag=tags[int(feat_rng.integers(len(tags)))],
                dep_rel=deps[int(feat_rng.integers(len(deps)))],
                head_dist=int(feat_rng.integers(-4, 5)),
                char_freq=float(feat_rng.lognormal(3.0, 1.0)),
                lex_freq=float(feat_rng.lognormal(2.0, 1.5)),
            )
        feat_path = _path(cp, "features", os.path.join(out, "linguistic.csv"))
        stim.write_feature_table(stim.FeatureTable(rows), feat_path)
        print(f"synth: wrote {feat_path}")
    return 0


# ---------------------------------------------------------------------------
# cv
# ---------------------------------------------------------------------------


def _load_inputs(cp, repr_kind):
    dataset_path = _path(cp, "dataset")
    manifest_path = _path(cp, "manifest")
    if not dataset_path or not manifest_path:
        raise CliError("config: [paths] dataset and manifest are required for cv")
    ds = load_dataset(dataset_path, manifest_path)
    sentences = load_manifest(manifest_path)
    embeddings = features = None
    if repr_kind in (stim.REPR_PCA, stim.REPR_MEANDIFF):
        emb_path = _path(cp, "embeddings")
        if not emb_path:
            raise CliError(f"config: [paths] embeddings is required for repr={repr_kind}")
        embeddings = stim.load_embedding_table(emb_path, sentences)
    if repr_kind == stim.REPR_MANUAL:
        feat_path = _path(cp, "features")
        if not feat_path:
            raise CliError("config: [paths] features is required for repr=manual")
        features = stim.load_feature_table(feat_path, sentences)
    return ds, embeddings, features


def _run_tag(model: str, repr_kind: str, scope: str) -> str:
    return f"{model}_{scope}" if model == ev.BASELINE_KIND else f"{model}_{repr_kind}"


def cmd_cv(args) -> int:
    cp = _read_config(args.config)
    out = _out_dir(cp)
    model = args.model or cp.get("run", "model", fallback="lstm")
    repr_kind = args.repr or cp.get("run", "repr", fallback="none")
    if model not in ev.MODEL_KINDS:
        raise CliError(f"cv: unknown model {model!r} (choose from {', '.join(ev.MODEL_KINDS)})")
    if repr_kind not in stim.REPR_KINDS:
        raise CliError(f"cv: unknown repr {repr_kind!r} (choose from {', '.join(stim.REPR_KINDS)})")
    settings = settings_from_config(cp, args)
    ds, embeddings, features = _load_inputs(cp, repr_kind if model != ev.BASELINE_KIND else "none")

    report = ev.nested_cv(ds, model, repr_kind, settings, embeddings, features)
    tag = _run_tag(model, repr_kind, settings.scope)
    report_path = os.path.join(out, f"{tag}.report.json")
    ev.save_report(report, report_path)
    print(f"cv: wrote {report_path}")

    score_rows, roc_rows = {"sentence": [], "subject": []}, {"sentence": [], "subject": []}
    for fold in report["folds"]:
        t = fold["fold"]
        if fold["sentence"] is not None:
            blk = fold["sentence"]
            for sid, sent, score, label in zip(blk["subject_ids"], blk["sentence_ids"], blk["scores"], blk["labels"]):
                score_rows["sentence"].append([t, sid, sent, "%.9g" % score, label])
        blk = fold["subject"]
        for sid, score, label in zip(blk["subject_ids"], blk["scores"], blk["labels"]):
            score_rows["subject"].append([t, sid, "", "%.9g" % score, label])
        for level, doc in fold["levels"].items():
            if doc["roc"]:
                for fpr, tpr, thr in doc["roc"]:
                    roc_rows[level].append([t, "%.9g" % fpr, "%.9g" % tpr, "%.9g" % thr])

    for level in ("sentence", "subject"):
        if score_rows[level]:
            path = os.path.join(out, f"{tag}.scores_{level}.csv")
            _atomic_write_text(path, _csv_text(["fold", "subject_id", "sentence_id", "score", "label"], score_rows[level]))
            print(f"cv: wrote {path}")
        if roc_rows[level]:
            path = os.path.join(out, f"{tag}.roc_{level}.csv")
            _atomic_write_text(path, _csv_text(["fold", "fpr", "tpr", "threshold"], roc_rows[level]))
            print(f"cv: wrote {path}")

    for level in ("subject", "sentence"):
        block = report["metrics"].get(level)
        if block and block["auc"]["mean"] is not None:
            print(f"cv: {level} AUC {block['auc']['mean']:.3f} ± {block['auc']['se']:.3f}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

_METRIC_COLUMNS = ("auc", "accuracy", "recall", "precision", "f1")


def _table_rows(reports: list[dict]) -> list[list[str]]:
    rows = []
    for rep in reports:
        model = rep["model"]
        label_repr = rep["scope"] if model == ev.BASELINE_KIND else rep["repr"]
        policy = rep["settings"].get("delta_policy", "tuned")
        mode = "tuned" if (policy == "tuned" and model != ev.BASELINE_KIND) else "fixed"
        for level in ("subject", "sentence"):
            block = rep["metrics"].get(level)
            if not block or block["auc"]["mean"] is None:
                continue
            cells = [model, label_repr or "", level]
            for metric in _METRIC_COLUMNS:
                source = block["auc"] if metric == "auc" else (block.get(mode) or block["fixed"])[metric]
                if source["mean"] is None:
                    cells.append("n/a")
                else:
                    cells.append(f"{source['mean']:.3f} ± {source['se']:.3f}")
            rows.append(cells)
    return rows


def cmd_report(args) -> int:
    if not args.reports:
        raise CliError("report: need at least one report file")
    reports = []
    for path in args.reports:
        try:
            rep = ev.load_report(path)
            rep["metrics"]
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"report: malformed report file {path}: {exc}") from None
        reports.append(rep)

    header = ["model", "repr/scope", "level"] + list(_METRIC_COLUMNS)
    rows = _table_rows(reports)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    line = "  ".join(h.ljust(w) for h, w in zip(header, widths))
    print(line)
    print("-" * len(line))
    for r in rows:
        print("  ".join(c.ljust(w) for c, w in zip(r, widths)))

    if args.table_csv:
        _atomic_write_text(args.table_csv, _csv_text(header, rows))
        print(f"report: wrote {args.table_csv}")

    if args.roc_csv:
        roc_rows = []
        for path, rep in zip(args.reports, reports):
            tag = _run_tag(rep["model"], rep.get("repr") or "", rep.get("scope") or "")
            for fold in rep["folds"]:
                for level, doc in fold["levels"].items():
                    if doc["roc"]:
                        for fpr, tpr, thr in doc["roc"]:
                            roc_rows.append([tag, level, fold["fold"], "%.9g" % fpr, "%.9g" % tpr, "%.9g" % thr])
        _atomic_write_text(args.roc_csv, _csv_text(["run", "level", "fold", "fpr", "tpr", "threshold"], roc_rows))
        print(f"report: wrote {args.roc_csv}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazelens",
        description="Dyslexia screening from word-level eye-movement reading measures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset (and optional sidecars)")
    p_synth.add_argument("--config", required=True)
    p_synth.set_defaults(func=cmd_synth)

    p_cv = sub.add_parser("cv", help="run nested cross-validation")
    p_cv.add_argument("--config", required=True)
    p_cv.add_argument("--model", choices=list(ev.MODEL_KINDS))
    p_cv.add_argument("--repr", choices=list(stim.REPR_KINDS))
    p_cv.add_argument("--jobs", type=int, default=0, help="parallel worker processes")
    p_cv.set_defaults(func=cmd_cv)

    p_rep = sub.add_parser("report", help="tabulate one or more cv reports")
    p_rep.add_argument("reports", nargs="+")
    p_rep.add_argument("--roc-csv", help="write per-fold ROC polylines to this CSV")
    p_rep.add_argument("--table-csv", help="write the comparison table to this CSV")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # module errors reported with context
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
