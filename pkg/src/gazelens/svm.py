"""Reference method: aggregate featurization, a linear soft-margin SVM
trained by dual coordinate descent, and recursive feature elimination.

Instances carry 24 features: the mean and population standard deviation
of each of the 12 reading measures over fixated words, either per subject
(pooling all of the subject's trials) or per (subject, sentence) trial.
Skipped words are excluded so frequently-skipped material does not drag
aggregate means toward zero.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .corpus import Dataset, MEASURE_NAMES, NormStats, fixated_mask

try:  # the JIT keeps full nested CV at sentence scope within budget
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

SCOPE_SUBJECT = "subject"
SCOPE_SENTENCE = "sentence"

FEATURE_NAMES = tuple(f"mean_{n}" for n in MEASURE_NAMES) + tuple(f"std_{n}" for n in MEASURE_NAMES)


@dataclass
class AggregatedInstance:
    features: np.ndarray  # (24,)
    label: int
    subject_id: str
    sentence_id: str | None = None  # None for subject-scope instances


def aggregate_features(dataset: Dataset, scope: str) -> list[AggregatedInstance]:
    """Aggregate reading measures into fixed-width instances.

    Subject scope yields one instance per subject over all fixated words of
    all their trials; sentence scope yields one instance per trial. Trials
    (or subjects) with no fixated words at all are dropped with a warning.
    """
    if scope not in (SCOPE_SUBJECT, SCOPE_SENTENCE):
        raise ValueError(f"unknown aggregation scope {scope!r}")
    if not dataset.trials:
        raise ValueError("empty dataset")
    instances = []
    if scope == SCOPE_SENTENCE:
        for t in sorted(dataset.trials, key=lambda t: (t.subject_id, t.sentence_id)):
            rows = t.measures[fixated_mask(t.measures)]
            if rows.shape[0] == 0:
                warnings.warn(
                    f"trial ({t.subject_id}, {t.sentence_id}) has no fixated words; instance dropped",
                    stacklevel=2,
                )
                continue
            instances.append(
                AggregatedInstance(_mean_std(rows), dataset.label_of(t.subject_id), t.subject_id, t.sentence_id)
            )
    else:
        for sid in dataset.subject_ids:
            rows = np.concatenate([t.measures[fixated_mask(t.measures)] for t in dataset.trials_of(sid)])
            if rows.shape[0] == 0:
                warnings.warn(f"subject {sid} has no fixated words; instance dropped", stacklevel=2)
                continue
            instances.append(AggregatedInstance(_mean_std(rows), dataset.label_of(sid), sid))
    return instances


def _mean_std(rows: np.ndarray) -> np.ndarray:
    return np.concatenate([rows.mean(axis=0), rows.std(axis=0)])


def stack_instances(instances: Sequence[AggregatedInstance]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([inst.features for inst in instances])
    y = np.array([inst.label for inst in instances], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------------------
# linear soft-margin SVM (hinge loss + L2) by dual coordinate descent
# ---------------------------------------------------------------------------


@dataclass
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    C: float
    objective_history: list[float] = field(default_factory=list, repr=False)


def train_linear_svm(
    x: np.ndarray,
    y: np.ndarray,
    C: float,
    seed: int = 0,
    tol: float = 1e-6,
    max_epochs: int = 2000,
) -> LinearSvmModel:
    """Solve the L1-loss soft-margin linear SVM in the dual with coordinate
    descent. The bias rides along as an appended constant feature. The
    caller standardizes features with training-fold statistics beforehand.

    Deterministic given the instance order and seed; per-epoch values of
    the dual objective 0.5*||w||^2 - sum(alpha) are recorded (they never
    increase) and iteration stops once the projected-gradient spread over
    an epoch falls below ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    classes = set(np.unique(y).tolist())
    if not classes <= {0, 1}:
        raise ValueError("labels must be 0/1")
    if len(classes) < 2:
        raise ValueError("training data must contain both classes")
    if C <= 0:
        raise ValueError("C must be positive")
    ys = np.where(y == 1, 1.0, -1.0)
    n = x.shape[0]
    xa = np.ascontiguousarray(np.concatenate([x, np.ones((n, 1))], axis=1))  # bias as constant feature
    qd = np.einsum("ij,ij->i", xa, xa)
    alpha = np.zeros(n)
    w = np.zeros(xa.shape[1])
    rng = np.random.default_rng(seed)
    history: list[float] = []
    base = np.tile(np.arange(n), (_EPOCH_CHUNK, 1))
    done = 0
    while done < max_epochs:
        chunk = min(_EPOCH_CHUNK, max_epochs - done)
        perms = rng.permuted(base[:chunk], axis=1)
        objectives = np.empty(chunk)
        ran = _cd_chunk(xa, ys, qd, alpha, w, float(C), perms, float(tol), objectives)
        history.extend(objectives[:ran].tolist())
        done += ran
        if ran < chunk:  # converged inside the chunk
            break
    return LinearSvmModel(weights=w[:-1].copy(), bias=float(w[-1]), C=C, objective_history=history)


_EPOCH_CHUNK = 64


def _cd_chunk_py(xa, ys, qd, alpha, w, C, perms, tol, objectives):
    """Run one coordinate-descent epoch per row of ``perms``, mutating
    alpha and w and recording the dual objective after each epoch. Returns
    the number of epochs run; stops early once the projected-gradient
    spread falls below tol."""
    d = w.shape[0]
    n = alpha.shape[0]
    for e in range(perms.shape[0]):
        pg_max, pg_min = -np.inf, np.inf
        for i in perms[e]:
            g = -1.0
            for j in range(d):
                g += w[j] * xa[i, j] * ys[i]
            if alpha[i] == 0.0:
                pg = min(g, 0.0)
            elif alpha[i] == C:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max, pg_min = max(pg_max, pg), min(pg_min, pg)
            if abs(pg) > 1e-14:
                new_alpha = min(max(alpha[i] - g / qd[i], 0.0), C)
                delta = (new_alpha - alpha[i]) * ys[i]
                for j in range(d):
                    w[j] += delta * xa[i, j]
                alpha[i] = new_alpha
        obj = 0.0
        for j in range(d):
            obj += w[j] * w[j]
        total = 0.0
        for i in range(n):
            total += alpha[i]
        objectives[e] = 0.5 * obj - total
        if pg_max - pg_min < tol:
            return e + 1
    return perms.shape[0]


_cd_chunk = njit(cache=True)(_cd_chunk_py) if njit is not None else _cd_chunk_py


def svm_decision(model: LinearSvmModel, x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.weights.shape[0]:
        raise ValueError(f"width mismatch: model {model.weights.shape[0]}, data {x.shape[1]}")
    return x @ model.weights + model.bias


def svm_predict(model: LinearSvmModel, instance: np.ndarray) -> tuple[float, int]:
    """Raw margin score (the ROC ranking statistic) and the label, which is
    1 on the boundary (score exactly 0) by convention."""
    score = float(svm_decision(model, instance)[0])
    return score, int(score >= 0.0)


# ---------------------------------------------------------------------------
# recursive feature elimination
# ---------------------------------------------------------------------------


@dataclass
class RfeResult:
    elimination_order: list[int]  # first entry = first (least important) feature removed
    scores_by_size: dict[int, float]  # validation score per nested subset size
    selected: list[int]  # chosen feature indices, ascending
    model: LinearSvmModel  # retrained on the selected subset


def rfe_rank(
    x: np.ndarray,
    y: np.ndarray,
    C: float,
    inner_eval: Callable[[list[int]], float],
    seed: int = 0,
    max_epochs: int = 2000,
) -> RfeResult:
    """Iteratively drop the feature with the smallest absolute weight
    (ties to the lowest index), then pick the nested subset size whose
    validation callback score is highest (ties to fewer features) and
    retrain the final model on it.

    ``inner_eval`` receives candidate feature indices (into the full
    feature space) and returns a score such as validation AUC.
    """
    x = np.asarray(x, dtype=np.float64)
    n_features = x.shape[1]
    if n_features < 2:
        raise ValueError("recursive elimination needs at least 2 features")
    active = list(range(n_features))
    elimination_order: list[int] = []
    while len(active) > 1:
        model = train_linear_svm(x[:, active], y, C, seed=seed, max_epochs=max_epochs)
        weights = np.abs(model.weights)
        drop_local = int(np.lexsort((active, weights))[0])  # smallest |w|, ties -> lowest index
        elimination_order.append(active.pop(drop_local))
    elimination_order.append(active[0])

    importance = elimination_order[::-1]  # most important first
    scores_by_size = {}
    for size in range(1, n_features + 1):
        subset = sorted(importance[:size])
        scores_by_size[size] = float(inner_eval(subset))
    best_size = max(range(1, n_features + 1), key=lambda s: (scores_by_size[s], -s))
    selected = sorted(importance[:best_size])
    final = train_linear_svm(x[:, selected], y, C, seed=seed, max_epochs=max_epochs)
    return RfeResult(elimination_order, scores_by_size, selected, final)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_svm_json(
    model: LinearSvmModel,
    path: str,
    selected: Sequence[int] | None = None,
    norm: NormStats | None = None,
) -> None:
    """JSON model dump with weights, bias, C, selected feature names and
    the training-fold standardization statistics."""
    selected = list(selected) if selected is not None else list(range(model.weights.shape[0]))
    doc = {
        "kind": "linear_svm",
        "C": model.C,
        "bias": model.bias,
        "weights": model.weights.tolist(),
        "selected_features": [FEATURE_NAMES[i] if i < len(FEATURE_NAMES) else str(i) for i in selected],
        "selected_indices": selected,
        "standardization": None
        if norm is None
        else {"mean": norm.mean.tolist(), "std": norm.std.tolist()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)


def load_svm_json(path: str) -> tuple[LinearSvmModel, list[int], NormStats | None]:
    doc = json.loads(open(path, encoding="utf-8").read())
    model = LinearSvmModel(np.array(doc["weights"]), float(doc["bias"]), float(doc["C"]))
    norm = None
    if doc["standardization"] is not None:
        norm = NormStats(np.array(doc["standardization"]["mean"]), np.array(doc["standardization"]["std"]))
    return model, list(doc["selected_indices"]), norm
