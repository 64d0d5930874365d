"""The three architectures: a bidirectional LSTM classifier, a 1-D CNN
classifier, and a small feed-forward encoder.

Sequences have different lengths (7 to 13 words in paper-shaped data) and
are never padded against each other. The LSTM runs over a packed batch
(sorted by length, only the still-active rows touched per step) with a
hand-derived backward pass registered as a single fused autodiff node;
the CNN processes equal-length groups. Per-example results are identical
whether an example is evaluated alone or inside a batch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LSTM_KIND = "lstm"
CNN_KIND = "cnn"
FFN_KIND = "ffn"


@dataclass(frozen=True)
class LstmConfig:
    input_width: int
    hidden_size: int
    bidirectional: bool = True


@dataclass(frozen=True)
class CnnConfig:
    input_width: int
    c1_channels: int
    c1_kernel: int
    c1_pool: str  # "average" | "max"
    c2_channels: int
    c2_kernel: int
    c2_pool: str
    l1_size: int
    dropout: float


@dataclass(frozen=True)
class FfnConfig:
    input_width: int
    hidden_size: int
    output_width: int


# ---------------------------------------------------------------------------
# parameter initialization (uniform fan-in scaling, deterministic per rng)
# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, shape)


def init_lstm_params(config: LstmConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, h = config.input_width, config.hidden_size
    k = 1.0 / np.sqrt(h)
    params = {}
    for direction in ("f", "b"):
        params[f"wx_{direction}"] = _uniform(rng, (d, 4 * h), k)
        params[f"wh_{direction}"] = _uniform(rng, (h, 4 * h), k)
        bias = _uniform(rng, (4 * h,), k)
        bias[h : 2 * h] += 1.0  # forget gate bias starts open
        params[f"b_{direction}"] = bias
    params["head_w"] = _uniform(rng, (2 * h, 1), 1.0 / np.sqrt(2 * h))
    params["head_b"] = np.zeros(1)
    return params


def init_cnn_params(config: CnnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    # biases share the weights' fan-in scaling: an exactly-zero bias would
    # park dead windows (zero padding through max pooling) exactly on the
    # rectifier kink, which breaks finite-difference verification
    d = config.input_width
    k1 = 1.0 / np.sqrt(config.c1_kernel * d)
    k2 = 1.0 / np.sqrt(config.c2_kernel * config.c1_channels)
    kd1 = 1.0 / np.sqrt(config.c2_channels)
    kd2 = 1.0 / np.sqrt(config.l1_size)
    return {
        "conv1_w": _uniform(rng, (config.c1_kernel, d, config.c1_channels), k1),
        "conv1_b": _uniform(rng, (config.c1_channels,), k1),
        "conv2_w": _uniform(rng, (config.c2_kernel, config.c1_channels, config.c2_channels), k2),
        "conv2_b": _uniform(rng, (config.c2_channels,), k2),
        "dense1_w": _uniform(rng, (config.c2_channels, config.l1_size), kd1),
        "dense1_b": _uniform(rng, (config.l1_size,), kd1),
        "dense2_w": _uniform(rng, (config.l1_size, 1), kd2),
        "dense2_b": _uniform(rng, (1,), kd2),
    }


def init_ffn_params(config: FfnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, h, o = config.input_width, config.hidden_size, config.output_width
    return {
        "w1": _uniform(rng, (d, h), np.sqrt(6.0 / (d + h))),
        "b1": np.zeros(h),
        "w2": _uniform(rng, (h, o), np.sqrt(6.0 / (h + o))),
        "b2": np.zeros(o),
    }


def init_params(kind: str, config, rng: np.random.Generator) -> dict[str, np.ndarray]:
    if kind == LSTM_KIND:
        return init_lstm_params(config, rng)
    if kind == CNN_KIND:
        return init_cnn_params(config, rng)
    if kind == FFN_KIND:
        return init_ffn_params(config, rng)
    raise ValueError(f"unknown model kind {kind!r}")


def as_tensors(params: dict[str, np.ndarray]) -> dict[str, Tensor]:
    return {k: ad.parameter(v) for k, v in params.items()}


# ---------------------------------------------------------------------------
# packed batches
# ---------------------------------------------------------------------------


@dataclass
class PackedBatch:
    """Length-sorted batch of variable-length sequences without padding
    across examples: ``padded[b, t]`` is only read while t < lengths[b]."""

    padded_fwd: np.ndarray  # (B, T_max, D); rows sorted by length desc
    padded_bwd: np.ndarray  # same, each sequence time-reversed
    batch_sizes: np.ndarray  # (T_max,), active rows per step
    lengths: np.ndarray  # (B,), sorted desc
    inv_order: np.ndarray  # original index -> sorted row


def pack_sequences(sequences: list[np.ndarray]) -> PackedBatch:
    lengths = np.array([s.shape[0] for s in sequences], dtype=np.int64)
    if np.any(lengths < 1):
        raise ValueError("empty sequence in batch")
    widths = {s.shape[1] for s in sequences}
    if len(widths) != 1:
        raise ValueError(f"inconsistent sequence widths {sorted(widths)}")
    order = np.argsort(-lengths, kind="stable")
    b, t_max, d = len(sequences), int(lengths.max()), sequences[0].shape[1]
    padded_f = np.zeros((b, t_max, d))
    padded_b = np.zeros((b, t_max, d))
    for row, idx in enumerate(order):
        seq = sequences[idx]
        padded_f[row, : len(seq)] = seq
        padded_b[row, : len(seq)] = seq[::-1]
    sorted_lengths = lengths[order]
    batch_sizes = np.array([int(np.sum(sorted_lengths > t)) for t in range(t_max)], dtype=np.int64)
    inv_order = np.empty(b, dtype=np.int64)
    inv_order[order] = np.arange(b)
    return PackedBatch(padded_f, padded_b, batch_sizes, sorted_lengths, inv_order)


# ---------------------------------------------------------------------------
# bidirectional LSTM with mean pooling over steps (fused autodiff node)
# ---------------------------------------------------------------------------


def _lstm_direction_forward(padded, batch_sizes, wx, wh, b, need_cache):
    b_n, t_max, _ = padded.shape
    h_size = wh.shape[0]
    xw = padded.reshape(b_n * t_max, -1) @ wx + b
    xw = xw.reshape(b_n, t_max, 4 * h_size)
    h = np.zeros((b_n, h_size))
    c = np.zeros((b_n, h_size))
    acc = np.zeros((b_n, h_size))
    cache = [] if need_cache else None
    for t in range(t_max):
        n = batch_sizes[t]
        z = xw[:n, t] + h[:n] @ wh
        i = _sig(z[:, :h_size])
        f = _sig(z[:, h_size : 2 * h_size])
        g = np.tanh(z[:, 2 * h_size : 3 * h_size])
        o = _sig(z[:, 3 * h_size :])
        c_prev = c[:n].copy()
        c_new = f * c_prev + i * g
        tc = np.tanh(c_new)
        if need_cache:
            cache.append((n, i, f, g, o, c_prev, tc, h[:n].copy()))
        h[:n] = o * tc
        c[:n] = c_new
        acc[:n] += h[:n]
    return acc, cache


def _lstm_direction_backward(g_acc_scaled, padded, batch_sizes, wh, cache):
    b_n, t_max, d = padded.shape
    h_size = wh.shape[0]
    gh = np.zeros((b_n, h_size))
    gc = np.zeros((b_n, h_size))
    g_xw = np.zeros((b_n, t_max, 4 * h_size))
    g_wh = np.zeros_like(wh)
    for t in range(t_max - 1, -1, -1):
        n, i, f, g, o, c_prev, tc, h_prev = cache[t]
        ghn = gh[:n] + g_acc_scaled[:n]
        gct = gc[:n] + ghn * o * (1.0 - tc * tc)
        gz = np.empty((n, 4 * h_size))
        gz[:, :h_size] = (gct * g) * i * (1.0 - i)
        gz[:, h_size : 2 * h_size] = (gct * c_prev) * f * (1.0 - f)
        gz[:, 2 * h_size : 3 * h_size] = (gct * i) * (1.0 - g * g)
        gz[:, 3 * h_size :] = (ghn * tc) * o * (1.0 - o)
        g_xw[:n, t] = gz
        g_wh += h_prev.T @ gz
        gh[:n] = gz @ wh.T
        gc[:n] = gct * f
    flat = g_xw.reshape(b_n * t_max, 4 * h_size)
    g_wx = padded.reshape(b_n * t_max, d).T @ flat
    g_b = flat.sum(axis=0)
    return g_wx, g_wh, g_b


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def bilstm_mean_pool(packed: PackedBatch, params: dict[str, Tensor]) -> Tensor:
    """Mean over steps of the concatenated forward/backward hidden states,
    returned in the batch's original example order: (B, 2H)."""
    wx_f, wh_f, b_f = params["wx_f"], params["wh_f"], params["b_f"]
    wx_b, wh_b, b_b = params["wx_b"], params["wh_b"], params["b_b"]
    need_grad = wx_f.requires_grad
    acc_f, cache_f = _lstm_direction_forward(
        packed.padded_fwd, packed.batch_sizes, wx_f.data, wh_f.data, b_f.data, need_grad
    )
    acc_b, cache_b = _lstm_direction_forward(
        packed.padded_bwd, packed.batch_sizes, wx_b.data, wh_b.data, b_b.data, need_grad
    )
    inv_len = 1.0 / packed.lengths[:, None]
    pooled_sorted = np.concatenate([acc_f * inv_len, acc_b * inv_len], axis=1)
    pooled = pooled_sorted[packed.inv_order]

    def bwd(g):
        h_size = wh_f.data.shape[0]
        g_sorted = np.zeros_like(pooled_sorted)
        g_sorted[packed.inv_order] = g
        g_scaled = g_sorted * inv_len
        gwx, gwh, gb = _lstm_direction_backward(
            g_scaled[:, :h_size], packed.padded_fwd, packed.batch_sizes, wh_f.data, cache_f
        )
        ad.accumulate(wx_f, gwx)
        ad.accumulate(wh_f, gwh)
        ad.accumulate(b_f, gb)
        gwx, gwh, gb = _lstm_direction_backward(
            g_scaled[:, h_size:], packed.padded_bwd, packed.batch_sizes, wh_b.data, cache_b
        )
        ad.accumulate(wx_b, gwx)
        ad.accumulate(wh_b, gwh)
        ad.accumulate(b_b, gb)

    return ad.node(pooled, (wx_f, wh_f, b_f, wx_b, wh_b, b_b), bwd)


def lstm_logits(params: dict[str, Tensor], packed: PackedBatch) -> Tensor:
    pooled = bilstm_mean_pool(packed, params)
    return ad.affine(pooled, params["head_w"], params["head_b"])


def lstm_pooled_state(params: dict[str, np.ndarray], config: LstmConfig, sequence: np.ndarray) -> np.ndarray:
    """Mean-pooled concatenated hidden state for one sequence, (2H,)."""
    packed = pack_sequences([np.asarray(sequence, dtype=np.float64)])
    tensors = {k: ad.constant(v) for k, v in params.items()}
    return bilstm_mean_pool(packed, tensors).data[0]


def lstm_forward(params: dict[str, np.ndarray], config: LstmConfig, sequence: np.ndarray) -> float:
    """Classification probability for one sequence."""
    return float(lstm_forward_batch(params, config, [np.asarray(sequence, dtype=np.float64)])[0])


def lstm_forward_batch(params: dict[str, np.ndarray], config: LstmConfig, sequences) -> np.ndarray:
    if len(sequences) == 0:
        return np.zeros(0)
    _check_width(sequences, config.input_width)
    packed = pack_sequences([np.asarray(s, dtype=np.float64) for s in sequences])
    tensors = {k: ad.constant(v) for k, v in params.items()}
    logits = lstm_logits(tensors, packed)
    return _sigmoid_np(logits.data.ravel())


# ---------------------------------------------------------------------------
# CNN over the word-sequence axis
# ---------------------------------------------------------------------------


def cnn_logits(
    params: dict[str, Tensor],
    config: CnnConfig,
    sequences: list[np.ndarray],
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Logits (B, 1) in the original example order. Equal-length sequences
    are processed together; dropout applies only when training."""
    if training and config.dropout > 0.0 and dropout_rng is None:
        raise ValueError("training with dropout requires a random generator")
    by_length: dict[int, list[int]] = {}
    for idx, s in enumerate(sequences):
        by_length.setdefault(s.shape[0], []).append(idx)
    group_logits: list[Tensor] = []
    order: list[int] = []
    for length in sorted(by_length, reverse=True):
        idxs = by_length[length]
        x = ad.constant(np.stack([sequences[i] for i in idxs]))
        h = ad.relu(ad.conv1d(x, params["conv1_w"], params["conv1_b"], "same"))
        h = ad.pool1d(h, config.c1_pool)
        h = ad.relu(ad.conv1d(h, params["conv2_w"], params["conv2_b"], "same"))
        h = ad.pool1d(h, config.c2_pool)
        h = ad.mean_time(h)
        h = ad.relu(ad.affine(h, params["dense1_w"], params["dense1_b"]))
        if training and config.dropout > 0.0:
            h = ad.dropout(h, config.dropout, dropout_rng)
        group_logits.append(ad.affine(h, params["dense2_w"], params["dense2_b"]))
        order.extend(idxs)
    stacked = group_logits[0] if len(group_logits) == 1 else ad.concat_rows(group_logits)
    inv = np.empty(len(sequences), dtype=np.int64)
    inv[np.array(order)] = np.arange(len(sequences))
    return ad.take_rows(stacked, inv)


def cnn_forward(
    params: dict[str, np.ndarray],
    config: CnnConfig,
    sequence: np.ndarray,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> float:
    return float(
        cnn_forward_batch(params, config, [np.asarray(sequence, dtype=np.float64)], training, dropout_rng)[0]
    )


def cnn_forward_batch(
    params: dict[str, np.ndarray],
    config: CnnConfig,
    sequences,
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> np.ndarray:
    if len(sequences) == 0:
        return np.zeros(0)
    _check_width(sequences, config.input_width)
    tensors = {k: ad.constant(v) for k, v in params.items()}
    seqs = [np.asarray(s, dtype=np.float64) for s in sequences]
    logits = cnn_logits(tensors, config, seqs, training, dropout_rng)
    return _sigmoid_np(logits.data.ravel())


# ---------------------------------------------------------------------------
# feed-forward encoder
# ---------------------------------------------------------------------------


def ffn_apply(params: dict[str, Tensor], x: Tensor) -> tuple[Tensor, Tensor]:
    """Graph-building forward pass; returns (output, hidden)."""
    hidden = ad.tanh(ad.affine(x, params["w1"], params["b1"]))
    out = ad.affine(hidden, params["w2"], params["b2"])
    return out, hidden


def ffn_forward(params: dict[str, np.ndarray], x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pure forward pass; returns (output, hidden activations)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params["w1"].shape[0]:
        raise ValueError(f"input width {x.shape[1]} does not match {params['w1'].shape[0]}")
    hidden = np.tanh(x @ params["w1"] + params["b1"])
    out = hidden @ params["w2"] + params["b2"]
    return out, hidden


def _sigmoid_np(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_width(sequences, width: int) -> None:
    for s in sequences:
        if s.shape[0] < 1:
            raise ValueError("sequence must contain at least one word")
        if s.shape[1] != width:
            raise ValueError(f"sequence width {s.shape[1]} does not match model input width {width}")


def model_logits(
    kind: str,
    params: dict[str, Tensor],
    config,
    sequences: list[np.ndarray],
    training: bool = False,
    dropout_rng: np.random.Generator | None = None,
) -> Tensor:
    """Unified graph-building logits for the two classifiers."""
    if kind == LSTM_KIND:
        return lstm_logits(params, pack_sequences(sequences))
    if kind == CNN_KIND:
        return cnn_logits(params, config, sequences, training, dropout_rng)
    raise ValueError(f"unknown classifier kind {kind!r}")


def forward_batch(kind: str, params: dict[str, np.ndarray], config, sequences) -> np.ndarray:
    """Unified inference probabilities for the two classifiers."""
    if kind == LSTM_KIND:
        return lstm_forward_batch(params, config, sequences)
    if kind == CNN_KIND:
        return cnn_forward_batch(params, config, sequences)
    raise ValueError(f"unknown classifier kind {kind!r}")
