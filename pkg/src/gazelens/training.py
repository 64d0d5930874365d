"""Mini-batch training with adaptive gradient steps and early stopping,
plus finite-difference gradient verification.

Training is deterministic: the shuffle order, parameter initialization and
dropout masks all derive from TrainConfig.seed, and all math is float64.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import networks as nets


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    batch_size: int
    learning_rate: float
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0


@dataclass
class ModelParams:
    """Trained weights of one network together with its configuration."""

    kind: str
    config: object
    tensors: dict[str, np.ndarray]

    def copy(self) -> "ModelParams":
        return ModelParams(self.kind, self.config, {k: v.copy() for k, v in self.tensors.items()})


class Adam:
    """Adaptive moment estimation with the usual defaults."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def _batch_loss(kind, params, config, seqs, labels, training, dropout_rng):
    logits = nets.model_logits(kind, params, config, seqs, training, dropout_rng)
    return ad.bce_with_logits(logits, labels)


def evaluate_loss(kind: str, params: dict[str, np.ndarray], config, seqs, labels) -> float:
    """Mean binary cross-entropy on a set, no dropout, no gradients."""
    probs = nets.forward_batch(kind, params, config, seqs)
    probs = np.clip(probs, 1e-12, 1.0 - 1e-12)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(probs) + (1.0 - y) * np.log(1.0 - probs)).mean())


def train_classifier(
    kind: str,
    config,
    train_seqs: Sequence[np.ndarray],
    train_labels: Sequence[int],
    earlystop_seqs: Sequence[np.ndarray],
    earlystop_labels: Sequence[int],
    tc: TrainConfig,
) -> ModelParams:
    """Minimize mean BCE by shuffled mini-batch Adam; return the parameters
    from the epoch with the best early-stop loss. Stops after ``patience``
    epochs without improvement or at ``max_epochs``."""
    if len(train_seqs) == 0 or len(earlystop_seqs) == 0:
        raise ValueError("training and early-stop sets must be non-empty")
    train_labels = np.asarray(train_labels, dtype=np.float64)
    earlystop_labels = np.asarray(earlystop_labels, dtype=np.float64)
    if not set(np.unique(train_labels)) <= {0.0, 1.0}:
        raise ValueError("labels must be binary")
    rng = np.random.default_rng(tc.seed)
    params = nets.as_tensors(nets.init_params(kind, config, rng))
    opt = Adam(params, tc.learning_rate)
    train_seqs = [np.asarray(s, dtype=np.float64) for s in train_seqs]
    earlystop_seqs = [np.asarray(s, dtype=np.float64) for s in earlystop_seqs]

    best_loss = np.inf
    best_snapshot = {k: p.data.copy() for k, p in params.items()}
    best_epoch = -1
    n = len(train_seqs)
    with np.errstate(over="ignore"):
        for epoch in range(tc.max_epochs):
            perm = rng.permutation(n)
            for start in range(0, n, tc.batch_size):
                idx = perm[start : start + tc.batch_size]
                batch = [train_seqs[i] for i in idx]
                dropout_rng = np.random.default_rng(rng.integers(2**63))
                ad.zero_grads(params)
                loss = _batch_loss(kind, params, config, batch, train_labels[idx], True, dropout_rng)
                if not np.isfinite(loss.data):
                    raise TrainingDivergedError(
                        f"{kind}: non-finite training loss at epoch {epoch} (lr={tc.learning_rate:g})"
                    )
                ad.backward(loss)
                opt.step()
            plain = {k: p.data for k, p in params.items()}
            es_loss = evaluate_loss(kind, plain, config, earlystop_seqs, earlystop_labels)
            if not np.isfinite(es_loss):
                raise TrainingDivergedError(
                    f"{kind}: non-finite early-stop loss at epoch {epoch} (lr={tc.learning_rate:g})"
                )
            if es_loss < best_loss:
                best_loss = es_loss
                best_snapshot = {k: p.data.copy() for k, p in params.items()}
                best_epoch = epoch
            elif epoch - best_epoch >= tc.patience:
                break
    return ModelParams(kind, config, best_snapshot)


def predict_proba(model: ModelParams, sequences) -> np.ndarray:
    return nets.forward_batch(model.kind, model.tensors, model.config, sequences)


# ---------------------------------------------------------------------------
# gradient verification
# ---------------------------------------------------------------------------


def gradient_check(
    kind: str,
    config,
    sequences: Sequence[np.ndarray],
    labels: Sequence[float] | None = None,
    targets: np.ndarray | None = None,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Compare analytic gradients against central finite differences on
    every parameter coordinate; return the maximum relative error.

    Classifier kinds check the BCE loss; the feed-forward kind checks the
    MSE loss against ``targets``.
    """
    rng = np.random.default_rng(seed)
    params = nets.as_tensors(nets.init_params(kind, config, rng))
    sequences = [np.asarray(s, dtype=np.float64) for s in sequences]

    if kind == nets.FFN_KIND:
        x = ad.constant(np.stack([s.ravel() for s in sequences]))
        t = np.asarray(targets, dtype=np.float64)

        def loss_fn():
            out, _ = nets.ffn_apply(params, x)
            return ad.mse(out, t)

    else:
        y = np.asarray(labels, dtype=np.float64)

        def loss_fn():
            return _batch_loss(kind, params, config, sequences, y, False, None)

    ad.zero_grads(params)
    loss = loss_fn()
    ad.backward(loss)
    analytic = {k: p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for k, p in params.items()}

    max_rel = 0.0
    for name, p in params.items():
        flat = p.data.ravel()
        g_flat = analytic[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data)
            flat[i] = orig - step
            down = float(loss_fn().data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(g_flat[i]) + abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(g_flat[i] - numeric) / denom)
    return max_rel
