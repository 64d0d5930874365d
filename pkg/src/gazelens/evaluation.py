"""Fold construction, random-search tuning, and nested cross-validation.

Protocol per test fold t: every hyperparameter candidate is trained on
the 8 folds excluding {t, v} and scored on validation fold v, for each of
the 9 choices of v; candidates are ranked by mean validation AUC. All
fitted state (measure normalization, stimulus artifacts, feature
standardization) is recomputed inside each training context and never
touches held-out data. The winner is retrained on the 8 folds excluding
the test fold and a designated early-stop fold ((t + 1) mod k), then
scored on fold t. Subject scores are the mean of the subject's sentence
scores.

Hyperparameter trials are independent jobs; the report is identical
regardless of worker count or scheduling.
"""
from __future__ import annotations

import json
import logging
import multiprocessing
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone


import numpy as np

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    from contextlib import nullcontext

    def threadpool_limits(limits=None):
        return nullcontext()

from . import metrics as met
from . import networks as nets
from . import stimulus as stim
from . import svm as svm_mod
from .corpus import Dataset, fit_normalizer
from .seeding import derive_seed
from .training import TrainConfig, TrainingDivergedError, predict_proba, train_classifier

log = logging.getLogger("gazelens.evaluation")

BASELINE_KIND = "baseline"
MODEL_KINDS = (BASELINE_KIND, nets.LSTM_KIND, nets.CNN_KIND)

DEFAULT_LSTM_BUDGET = 50
DEFAULT_CNN_BUDGET = 100
DEFAULT_C_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)

# Appendix-style hyperparameter grids for the random search
BATCH_SIZES = (8, 16, 32, 64, 128)
LR_RANGE = (1e-5, 1e-1)
LR_POOL_SIZE = 15
DELTA_RANGE = (0.35, 0.65)
DELTA_POOL_SIZE = 20
LSTM_HIDDEN_GRID = (10, 20, 30, 40, 50, 60, 70)
CNN_C1_CHANNELS = (5, 10, 15, 20, 25, 30)
CNN_C2_CHANNELS = (10, 20, 30, 40, 50)
CNN_KERNELS = (3, 5)
CNN_POOLS = ("average", "max")
CNN_L1_SIZES = (10, 20, 30, 40, 50, 60)
CNN_DROPOUTS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

# Optimization cap for the thousands of inner selection-only SVM fits; the
# final per-fold models train with the default budget toward tolerance.
SVM_INNER_MAX_EPOCHS = 150


# ---------------------------------------------------------------------------
# fold assignment
# ---------------------------------------------------------------------------


@dataclass
class FoldAssignment:
    folds: dict[str, int]  # subject_id -> fold index
    k: int

    def subjects_in(self, fold: int) -> list[str]:
        return sorted(s for s, f in self.folds.items() if f == fold)


def assign_folds(dataset: Dataset, k: int = 10, seed: int = 0) -> FoldAssignment:
    """Stratified subject partition: subjects are shuffled per class and
    dealt to per-fold quotas chosen to balance both the class counts and
    the fold sizes within one subject."""
    subjects = dataset.subject_ids
    if len(subjects) < k:
        raise ValueError(f"cannot build {k} folds from {len(subjects)} subjects")
    by_class: dict[int, list[str]] = {0: [], 1: []}
    for sid in subjects:
        by_class[dataset.label_of(sid)].append(sid)
    if not by_class[0] or not by_class[1]:
        raise ValueError("both classes must be present")
    rng = np.random.default_rng(seed)
    totals = np.zeros(k, dtype=np.int64)
    assignment: dict[str, int] = {}
    # larger class first so the smaller class can even out fold sizes
    for label in sorted(by_class, key=lambda c: -len(by_class[c])):
        members = list(by_class[label])
        rng.shuffle(members)
        base, extra = divmod(len(members), k)
        quota = np.full(k, base, dtype=np.int64)
        # remainder goes to the currently smallest folds (ties: lowest index)
        for fold in np.lexsort((np.arange(k), totals))[:extra]:
            quota[fold] += 1
        it = iter(members)
        for fold in range(k):
            for _ in range(quota[fold]):
                assignment[next(it)] = fold
        totals += quota
    return FoldAssignment(assignment, k)


# ---------------------------------------------------------------------------
# hyperparameter sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HyperSample:
    kind: str
    arch: tuple[tuple[str, object], ...]  # architecture fields, sorted
    batch_size: int
    learning_rate: float
    delta: float

    def arch_dict(self) -> dict:
        return dict(self.arch)

    def to_config(self, input_width: int):
        if self.kind == nets.LSTM_KIND:
            return nets.LstmConfig(input_width=input_width, **self.arch_dict())
        return nets.CnnConfig(input_width=input_width, **self.arch_dict())

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            **self.arch_dict(),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "delta": self.delta,
        }


def sample_hyperparameters(
    kind: str, budget: int, seed: int = 0, lr_mode: str = "uniform"
) -> list[HyperSample]:
    """Random search draws: first the pools of 15 learning rates and 20
    decision thresholds are sampled, then ``budget`` combinations are drawn
    uniformly from the grids and those pools.

    lr_mode "uniform" samples rates uniformly on [1e-5, 1e-1] as stated in
    the search-space table; "log" switches to log-uniform, which spreads
    the pool across magnitudes instead of concentrating near 0.1.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if kind not in (nets.LSTM_KIND, nets.CNN_KIND):
        raise ValueError(f"no hyperparameter space for kind {kind!r}")
    rng = np.random.default_rng(seed)
    if lr_mode == "uniform":
        lr_pool = rng.uniform(LR_RANGE[0], LR_RANGE[1], LR_POOL_SIZE)
    elif lr_mode == "log":
        lr_pool = 10.0 ** rng.uniform(np.log10(LR_RANGE[0]), np.log10(LR_RANGE[1]), LR_POOL_SIZE)
    else:
        raise ValueError(f"unknown lr_mode {lr_mode!r}")
    delta_pool = rng.uniform(DELTA_RANGE[0], DELTA_RANGE[1], DELTA_POOL_SIZE)

    def choose(options):
        return options[int(rng.integers(len(options)))]

    samples = []
    for _ in range(budget):
        if kind == nets.LSTM_KIND:
            arch = (("hidden_size", int(choose(LSTM_HIDDEN_GRID))),)
        else:
            arch = (
                ("c1_channels", int(choose(CNN_C1_CHANNELS))),
                ("c1_kernel", int(choose(CNN_KERNELS))),
                ("c1_pool", choose(CNN_POOLS)),
                ("c2_channels", int(choose(CNN_C2_CHANNELS))),
                ("c2_kernel", int(choose(CNN_KERNELS))),
                ("c2_pool", choose(CNN_POOLS)),
                ("dropout", float(choose(CNN_DROPOUTS))),
                ("l1_size", int(choose(CNN_L1_SIZES))),
            )
        samples.append(
            HyperSample(
                kind=kind,
                arch=arch,
                batch_size=int(choose(BATCH_SIZES)),
                learning_rate=float(choose(lr_pool)),
                delta=float(choose(delta_pool)),
            )
        )
    return samples


# ---------------------------------------------------------------------------
# run settings and shared worker context
# ---------------------------------------------------------------------------


@dataclass
class CvSettings:
    budget: int | None = None
    k: int = 10
    seed: int = 0
    jobs: int = 1
    scope: str = svm_mod.SCOPE_SENTENCE  # baseline aggregation scope
    max_epochs: int = 200
    patience: int = 10
    lr_mode: str = "uniform"
    delta_policy: str = "tuned"  # "tuned" | "fixed"
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    meandiff_epochs: int = 200
    meandiff_lr: float = 1e-3


_CTX: dict = {}


def _init_worker(dataset, embeddings, features, assignment, model_kind, repr_kind, settings):
    global _CTX
    _CTX = {
        "dataset": dataset,
        "embeddings": embeddings,
        "features": features,
        "assignment": assignment,
        "model_kind": model_kind,
        "repr_kind": repr_kind,
        "settings": settings,
        "limiter": threadpool_limits(limits=1),
    }


def _run_jobs(fn, args_list, init_args, jobs: int):
    if jobs <= 1:
        _init_worker(*init_args)
        return [fn(a) for a in args_list]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(jobs, initializer=_init_worker, initargs=init_args) as pool:
        return pool.map(fn, args_list, chunksize=1)


def _trials_for(dataset: Dataset, assignment: FoldAssignment, folds: set[int]):
    return [t for t in dataset.trials if assignment.folds[t.subject_id] in folds]


def _labels_by_subject(dataset: Dataset) -> dict[str, int]:
    return {s.subject_id: s.label for s in dataset.subjects}


def _safe_auc(scores, labels) -> float | None:
    try:
        return met.roc_auc(scores, labels).auc
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# neural path: per-(t, v) candidate evaluation and final fold models
# ---------------------------------------------------------------------------


def _prepare_nn_context(dataset, assignment, train_folds: set[int], eval_fold: int, repr_kind, settings, seed):
    """Fit normalization and stimulus artifacts on the training folds, then
    enrich both the training trials and the held-out fold's trials."""
    labels = _labels_by_subject(dataset)
    train_trials = _trials_for(dataset, assignment, train_folds)
    eval_trials = _trials_for(dataset, assignment, {eval_fold})
    norm = fit_normalizer([t.measures for t in train_trials])
    repr_ = stim.fit_stimulus(
        repr_kind,
        train_trials,
        {sid: labels[sid] for sid in {t.subject_id for t in train_trials}},
        embeddings=_CTX["embeddings"],
        features=_CTX["features"],
        meandiff_config=stim.MeanDiffTrainConfig(
            epochs=settings.meandiff_epochs, learning_rate=settings.meandiff_lr, seed=seed
        ),
    )
    x_train = stim.build_enriched_sequences(train_trials, repr_, norm)
    y_train = np.array([labels[t.subject_id] for t in train_trials], dtype=np.float64)
    x_eval = stim.build_enriched_sequences(eval_trials, repr_, norm)
    y_eval = np.array([labels[t.subject_id] for t in eval_trials], dtype=np.float64)
    return x_train, y_train, x_eval, y_eval, eval_trials, norm, repr_


def _nn_candidate_job(args):
    """Train every candidate on folds \\ {t, v}, early-stopping and scoring
    on v; returns per-candidate validation AUC (0 for diverged runs)."""
    t, v, candidates = args
    dataset, assignment, settings = _CTX["dataset"], _CTX["assignment"], _CTX["settings"]
    train_folds = set(range(assignment.k)) - {t, v}
    ctx_seed = derive_seed(settings.seed, "cv", _CTX["model_kind"], "t", t, "v", v)
    x_train, y_train, x_val, y_val, _, _, _ = _prepare_nn_context(
        dataset, assignment, train_folds, v, _CTX["repr_kind"], settings, ctx_seed
    )
    width = x_train[0].shape[1]
    aucs = []
    for idx, cand in enumerate(candidates):
        tc = TrainConfig(
            batch_size=cand.batch_size,
            learning_rate=cand.learning_rate,
            max_epochs=settings.max_epochs,
            patience=settings.patience,
            seed=derive_seed(settings.seed, "cv", cand.kind, "t", t, "v", v, "cand", idx),
        )
        try:
            model = train_classifier(cand.kind, cand.to_config(width), x_train, y_train, x_val, y_val, tc)
            auc = _safe_auc(predict_proba(model, x_val), y_val.astype(int))
            aucs.append(-1.0 if auc is None else auc)
        except TrainingDivergedError as exc:
            log.warning("fold %d/val %d candidate %d diverged: %s", t, v, idx, exc)
            aucs.append(0.0)
    return t, v, aucs


def _nn_final_job(args):
    """Train the winning candidate for test fold t on the 8 folds that
    exclude {t, earlystop}, early-stop on the designated fold, and emit
    sentence scores on fold t."""
    t, cand = args
    dataset, assignment, settings = _CTX["dataset"], _CTX["assignment"], _CTX["settings"]
    es_fold = (t + 1) % assignment.k
    train_folds = set(range(assignment.k)) - {t, es_fold}
    ctx_seed = derive_seed(settings.seed, "cv", _CTX["model_kind"], "final", t)
    x_train, y_train, x_es, y_es, _, norm, repr_ = _prepare_nn_context(
        dataset, assignment, train_folds, es_fold, _CTX["repr_kind"], settings, ctx_seed
    )
    width = x_train[0].shape[1]
    tc = TrainConfig(
        batch_size=cand.batch_size,
        learning_rate=cand.learning_rate,
        max_epochs=settings.max_epochs,
        patience=settings.patience,
        seed=derive_seed(settings.seed, "cv", cand.kind, "final", t),
    )
    model = train_classifier(cand.kind, cand.to_config(width), x_train, y_train, x_es, y_es, tc)
    test_trials = _trials_for(dataset, assignment, {t})
    x_test = stim.build_enriched_sequences(test_trials, repr_, norm)
    scores = predict_proba(model, x_test)
    return t, {
        "subject_ids": [tr.subject_id for tr in test_trials],
        "sentence_ids": [tr.sentence_id for tr in test_trials],
        "labels": [dataset.label_of(tr.subject_id) for tr in test_trials],
        "scores": [float(s) for s in scores],
    }


def fit_fold_artifacts(
    dataset: Dataset,
    model_kind: str,
    test_fold: int,
    candidate: HyperSample | tuple[float, int],
    repr_kind: str = stim.REPR_NONE,
    settings: CvSettings | None = None,
    embeddings: stim.EmbeddingTable | None = None,
    features: stim.FeatureTable | None = None,
) -> dict:
    """Fit everything a final fold model fits (normalizer, stimulus
    artifacts, trained weights) without touching fold ``test_fold``'s data,
    and return the fitted state for inspection. Exists so tests can verify
    by perturbation that held-out data never leaks into fitting."""
    settings = settings or CvSettings()
    assignment = assign_folds(dataset, settings.k, derive_seed(settings.seed, "folds"))
    _init_worker(dataset, embeddings, features, assignment, model_kind, repr_kind, settings)
    with threadpool_limits(limits=1):
        if model_kind == BASELINE_KIND:
            c_value, size = candidate
            t, payload = _svm_final_job((test_fold, c_value, size))
            return {"svm": payload["svm"], "chosen": payload["chosen"]}
        es_fold = (test_fold + 1) % assignment.k
        train_folds = set(range(assignment.k)) - {test_fold, es_fold}
        ctx_seed = derive_seed(settings.seed, "cv", model_kind, "final", test_fold)
        x_train, y_train, x_es, y_es, _, norm, repr_ = _prepare_nn_context(
            dataset, assignment, train_folds, es_fold, repr_kind, settings, ctx_seed
        )
        tc = TrainConfig(
            batch_size=candidate.batch_size,
            learning_rate=candidate.learning_rate,
            max_epochs=settings.max_epochs,
            patience=settings.patience,
            seed=derive_seed(settings.seed, "cv", candidate.kind, "final", test_fold),
        )
        model = train_classifier(
            candidate.kind, candidate.to_config(x_train[0].shape[1]), x_train, y_train, x_es, y_es, tc
        )
        return {"norm": norm, "repr": repr_, "tensors": model.tensors}


# ---------------------------------------------------------------------------
# baseline path: SVM-RFE with C and subset size tuned on inner folds
# ---------------------------------------------------------------------------


def _aggregate_fold_instances(dataset, assignment, folds: set[int], scope: str):
    import warnings

    sub = Dataset(
        [s for s in dataset.subjects if assignment.folds[s.subject_id] in folds],
        dataset.sentences,
        _trials_for(dataset, assignment, folds),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # all-skipped instances logged at load time
        return svm_mod.aggregate_features(sub, scope)


def _svm_candidate_job(args):
    """For each C, rank features on folds \\ {t, v} and score every nested
    subset size on fold v: returns an AUC matrix (n_C, n_features)."""
    t, v = args
    dataset, assignment, settings = _CTX["dataset"], _CTX["assignment"], _CTX["settings"]
    scope = settings.scope
    train_folds = set(range(assignment.k)) - {t, v}
    train_inst = _aggregate_fold_instances(dataset, assignment, train_folds, scope)
    val_inst = _aggregate_fold_instances(dataset, assignment, {v}, scope)
    x_train, y_train = svm_mod.stack_instances(train_inst)
    x_val, y_val = svm_mod.stack_instances(val_inst)
    norm = fit_normalizer([x_train])
    x_train = (x_train - norm.mean) / norm.std
    x_val = (x_val - norm.mean) / norm.std
    seed = derive_seed(settings.seed, "cv", "baseline", "t", t, "v", v)
    n_features = x_train.shape[1]
    auc = np.zeros((len(settings.c_grid), n_features))
    for ci, c in enumerate(settings.c_grid):

        def inner_eval(subset):
            m = svm_mod.train_linear_svm(
                x_train[:, subset], y_train, c, seed=seed, max_epochs=SVM_INNER_MAX_EPOCHS
            )
            a = _safe_auc(svm_mod.svm_decision(m, x_val[:, subset]), y_val)
            return -1.0 if a is None else a

        result = svm_mod.rfe_rank(
            x_train, y_train, c, inner_eval, seed=seed, max_epochs=SVM_INNER_MAX_EPOCHS
        )
        for size, score in result.scores_by_size.items():
            auc[ci, size - 1] = score
    return t, v, auc


def _svm_final_job(args):
    """Retrain the winning (C, subset size) on all folds except t and score
    fold t. Scores pass through a sigmoid so the 0.5 threshold corresponds
    to the margin-zero decision rule."""
    t, c_value, size = args
    dataset, assignment, settings = _CTX["dataset"], _CTX["assignment"], _CTX["settings"]
    scope = settings.scope
    train_folds = set(range(assignment.k)) - {t}
    train_inst = _aggregate_fold_instances(dataset, assignment, train_folds, scope)
    test_inst = _aggregate_fold_instances(dataset, assignment, {t}, scope)
    x_train, y_train = svm_mod.stack_instances(train_inst)
    x_test, _ = svm_mod.stack_instances(test_inst)
    norm = fit_normalizer([x_train])
    x_train = (x_train - norm.mean) / norm.std
    x_test = (x_test - norm.mean) / norm.std
    seed = derive_seed(settings.seed, "cv", "baseline", "final", t)

    def trainset_eval(subset):  # ranking only; selection size is fixed below
        return 0.0

    elimination = svm_mod.rfe_rank(x_train, y_train, c_value, trainset_eval, seed=seed).elimination_order
    selected = sorted(elimination[::-1][:size])
    model = svm_mod.train_linear_svm(x_train[:, selected], y_train, c_value, seed=seed)
    margins = svm_mod.svm_decision(model, x_test[:, selected])
    scores = 1.0 / (1.0 + np.exp(-margins))
    return t, {
        "subject_ids": [inst.subject_id for inst in test_inst],
        "sentence_ids": [inst.sentence_id for inst in test_inst],
        "labels": [inst.label for inst in test_inst],
        "scores": [float(s) for s in scores],
        "chosen": {"C": c_value, "n_features": size, "features": [svm_mod.FEATURE_NAMES[i] for i in selected]},
        "svm": {"weights": model.weights.tolist(), "bias": model.bias, "selected": selected},
    }


# ---------------------------------------------------------------------------
# nested cross-validation driver
# ---------------------------------------------------------------------------


def nested_cv(
    dataset: Dataset,
    model_kind: str,
    repr_kind: str = stim.REPR_NONE,
    settings: CvSettings | None = None,
    embeddings: stim.EmbeddingTable | None = None,
    features: stim.FeatureTable | None = None,
) -> dict:
    """Run the full nested k-fold protocol and return the report document.

    The baseline ignores ``repr_kind`` (its aggregate features predate any
    stimulus enrichment); neural kinds honor it and need the corresponding
    sidecar table."""
    settings = settings or CvSettings()
    if model_kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    assignment = assign_folds(dataset, settings.k, derive_seed(settings.seed, "folds"))
    init_args = (dataset, embeddings, features, assignment, model_kind, repr_kind, settings)
    with threadpool_limits(limits=1):
        if model_kind == BASELINE_KIND:
            fold_results, chosen = _run_baseline_cv(assignment, settings, init_args)
        else:
            fold_results, chosen = _run_nn_cv(model_kind, assignment, settings, init_args)
    return _assemble_report(dataset, model_kind, repr_kind, settings, assignment, fold_results, chosen)


def _run_nn_cv(model_kind, assignment, settings, init_args):
    budget = settings.budget or (DEFAULT_LSTM_BUDGET if model_kind == nets.LSTM_KIND else DEFAULT_CNN_BUDGET)
    k = assignment.k
    candidates_by_fold = {
        t: sample_hyperparameters(
            model_kind, budget, derive_seed(settings.seed, "hyper", model_kind, t), settings.lr_mode
        )
        for t in range(k)
    }
    eval_jobs = [(t, v, candidates_by_fold[t]) for t in range(k) for v in range(k) if v != t]
    results = _run_jobs(_nn_candidate_job, eval_jobs, init_args, settings.jobs)
    mean_auc = {t: np.zeros(budget) for t in range(k)}
    counts = {t: np.zeros(budget) for t in range(k)}
    for t, v, aucs in results:
        for i, a in enumerate(aucs):
            if a >= 0.0:
                mean_auc[t][i] += a
                counts[t][i] += 1
    winners = {}
    for t in range(k):
        avg = np.where(counts[t] > 0, mean_auc[t] / np.maximum(counts[t], 1), -1.0)
        winners[t] = int(np.argmax(avg))  # ties: first (lowest candidate index)
    final_jobs = [(t, candidates_by_fold[t][winners[t]]) for t in range(k)]
    finals = dict(_run_jobs(_nn_final_job, final_jobs, init_args, settings.jobs))
    chosen = {t: candidates_by_fold[t][winners[t]].as_dict() for t in range(k)}
    return finals, chosen


def _run_baseline_cv(assignment, settings, init_args):
    k = assignment.k
    eval_jobs = [(t, v) for t in range(k) for v in range(k) if v != t]
    results = _run_jobs(_svm_candidate_job, eval_jobs, init_args, settings.jobs)
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}
    for t, v, auc in results:
        sums[t] = auc if t not in sums else sums[t] + auc
        counts[t] = counts.get(t, 0) + 1
    final_jobs = []
    chosen_params = {}
    for t in range(k):
        avg = sums[t] / counts[t]
        # argmax over (C, size); ties prefer fewer features, then smaller C
        best_ci, best_size, best_score = 0, 1, -np.inf
        for ci in range(avg.shape[0]):
            for size_idx in range(avg.shape[1]):
                score = avg[ci, size_idx]
                better = score > best_score + 1e-15
                tie = abs(score - best_score) <= 1e-15
                if better or (tie and (size_idx + 1, ci) < (best_size, best_ci)):
                    best_ci, best_size, best_score = ci, size_idx + 1, score
        c_value = settings.c_grid[best_ci]
        final_jobs.append((t, c_value, best_size))
        chosen_params[t] = {"C": c_value, "n_features": best_size}
    finals = dict(
        (t, payload) for t, payload in _run_jobs(_svm_final_job, final_jobs, init_args, settings.jobs)
    )
    for t in range(k):
        chosen_params[t] = finals[t].pop("chosen")
    return finals, chosen_params


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def _level_metrics(scores, labels, delta_fixed=0.5, delta_tuned=None):
    auc = _safe_auc(scores, labels)
    curve = met.roc_auc(scores, labels) if auc is not None else None
    out = {
        "auc": auc,
        "roc": [list(p) for p in curve.points()] if curve else None,
        "fixed": met.threshold_metrics(scores, labels, delta_fixed),
    }
    out["tuned"] = met.threshold_metrics(scores, labels, delta_tuned) if delta_tuned is not None else None
    return out


def _assemble_report(dataset, model_kind, repr_kind, settings, assignment, fold_results, chosen):
    folds_doc = []
    per_fold: dict[str, dict[str, list]] = {
        "sentence": {"auc": []},
        "subject": {"auc": []},
    }
    threshold_keys = ("accuracy", "recall", "precision", "f1")
    for level in per_fold:
        for mode in ("fixed", "tuned"):
            for key in threshold_keys:
                per_fold[level][f"{mode}_{key}"] = []

    subject_scope_baseline = model_kind == BASELINE_KIND and settings.scope == svm_mod.SCOPE_SUBJECT
    for t in sorted(fold_results):
        payload = fold_results[t]
        delta_tuned = chosen[t].get("delta") if model_kind != BASELINE_KIND else None
        scores = np.array(payload["scores"])
        labels = np.array(payload["labels"], dtype=np.int64)
        fold_doc = {"fold": t, "chosen": chosen[t]}

        if subject_scope_baseline:
            sentence_doc = None
            subj_ids = payload["subject_ids"]
            subj_scores, subj_labels = scores, labels
        else:
            sentence_doc = {
                "subject_ids": payload["subject_ids"],
                "sentence_ids": payload["sentence_ids"],
                "labels": labels.tolist(),
                "scores": scores.tolist(),
            }
            by_subject: dict[str, list[float]] = {}
            label_of: dict[str, int] = {}
            for sid, lab, score in zip(payload["subject_ids"], labels, scores):
                by_subject.setdefault(sid, []).append(float(score))
                label_of[sid] = int(lab)
            subj_ids = sorted(by_subject)
            subj_scores = np.array([met.predict_subject_level(by_subject[s]) for s in subj_ids])
            subj_labels = np.array([label_of[s] for s in subj_ids], dtype=np.int64)

        fold_doc["sentence"] = sentence_doc
        fold_doc["subject"] = {
            "subject_ids": subj_ids,
            "labels": subj_labels.tolist(),
            "scores": subj_scores.tolist(),
        }

        levels = {"subject": (subj_scores, subj_labels)}
        if sentence_doc is not None:
            levels["sentence"] = (scores, labels)
        fold_doc["levels"] = {}
        for level, (s, y) in levels.items():
            doc = _level_metrics(s, y, 0.5, delta_tuned)
            fold_doc["levels"][level] = doc
            per_fold[level]["auc"].append(doc["auc"])
            for mode in ("fixed", "tuned"):
                block = doc[mode]
                for key in threshold_keys:
                    per_fold[level][f"{mode}_{key}"].append(block[key] if block else None)
        folds_doc.append(fold_doc)

    summary = {}
    for level in ("sentence", "subject"):
        vals = per_fold[level]
        if not any(v is not None for v in vals["auc"]):
            summary[level] = None
            continue
        level_doc = {"auc": met.summarize_folds(vals["auc"])}
        for mode in ("fixed", "tuned"):
            if model_kind == BASELINE_KIND and mode == "tuned":
                level_doc[mode] = None
                continue
            level_doc[mode] = {k: met.summarize_folds(vals[f"{mode}_{k}"]) for k in threshold_keys}
        summary[level] = level_doc

    return {
        "model": model_kind,
        "repr": repr_kind if model_kind != BASELINE_KIND else None,
        "scope": settings.scope if model_kind == BASELINE_KIND else None,
        "k": assignment.k,
        "seed": settings.seed,
        "settings": {
            "budget": settings.budget,
            "max_epochs": settings.max_epochs,
            "patience": settings.patience,
            "lr_mode": settings.lr_mode,
            "delta_policy": settings.delta_policy,
            "c_grid": list(settings.c_grid),
        },
        "fold_assignment": dict(sorted(assignment.folds.items())),
        "folds": folds_doc,
        "metrics": summary,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


# ---------------------------------------------------------------------------
# report I/O
# ---------------------------------------------------------------------------


def report_without_timestamp(report: dict) -> dict:
    out = dict(report)
    out.pop("timestamp", None)
    return out


def _jsonify(report: dict) -> dict:
    return json.loads(json.dumps(report, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def save_report(report: dict, path: str) -> None:
    """Atomic write (temp file + rename) of the JSON report."""
    doc = _jsonify(report)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_report(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
