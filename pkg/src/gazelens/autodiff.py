"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps a float64 array plus the closures needed to push gradients
back to its parents. Ops build the graph eagerly; ``backward`` runs the
tape in reverse topological order. Everything a constant produced from
another constant skips graph construction entirely, so inference pays no
bookkeeping cost.

Convention: backward closures must hand freshly allocated (or exclusively
owned) arrays to ``accumulate``; the engine itself never mutates gradient
arrays in place.
"""
from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "bwd", "requires_grad")

    def __init__(self, data, parents=(), bwd=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.parents: tuple[Tensor, ...] = parents
        self.bwd = bwd
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):  # pragma: no cover
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(data)


def accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def node(data, parents, bwd) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, parents=tuple(parents), bwd=bwd, requires_grad=True)
    return Tensor(data)


def backward(out: Tensor) -> None:
    """Accumulate d(out)/d(leaf) into every reachable parameter's .grad.

    ``out`` is typically a scalar loss; its seed gradient is 1.
    """
    out.grad = np.ones_like(out.data)
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(out, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            stack.append((p, False))
    for node in reversed(topo):
        if node.bwd is not None and node.grad is not None:
            node.bwd(node.grad)


def zero_grads(params) -> None:
    for p in params.values() if isinstance(params, dict) else params:
        p.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and linear ops
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(g, b.data.shape))

    return node(a.data + b.data, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g, a.data.shape))
        accumulate(b, _unbroadcast(-g, b.data.shape))

    return node(a.data - b.data, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return node(a.data * b.data, (a, b), bwd)


def scale(a: Tensor, s: float) -> Tensor:
    def bwd(g):
        accumulate(a, g * s)

    return node(a.data * s, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    def bwd(g):
        accumulate(a, g @ b.data.T)
        accumulate(b, a.data.T @ g)

    return node(a.data @ b.data, (a, b), bwd)


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for 2-D x (rows are examples)."""

    def bwd(g):
        accumulate(x, g @ w.data.T)
        accumulate(w, x.data.T @ g)
        accumulate(b, g.sum(axis=0))

    return node(x.data @ w.data + b.data, (x, w, b), bwd)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0.0)

    def bwd(g):
        accumulate(x, g * (x.data > 0))

    return node(y, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def bwd(g):
        accumulate(x, g * (1.0 - y * y))

    return node(y, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def bwd(g):
        accumulate(x, g * y * (1.0 - y))

    return node(y, (x,), bwd)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather y = x[idx]; duplicate indices accumulate in the backward."""

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        accumulate(x, gx)

    return node(x.data[idx], (x,), bwd)


def concat_rows(tensors: list[Tensor]) -> Tensor:
    sizes = [t.data.shape[0] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=0)):
            accumulate(t, piece.copy())

    return node(np.concatenate([t.data for t in tensors], axis=0), tuple(tensors), bwd)


def dropout(x: Tensor, p: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; deterministic for a fixed generator state."""
    if p <= 0.0:
        return x
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)

    def bwd(g):
        accumulate(x, g * mask)

    return node(x.data * mask, (x,), bwd)


# ---------------------------------------------------------------------------
# sequence ops: 1-D convolution and pooling over (groups, time, channels)
# ---------------------------------------------------------------------------


def conv1d(x: Tensor, w: Tensor, b: Tensor, padding: str = "same") -> Tensor:
    """Cross-correlation along the time axis, stride 1.

    x: (G, T, C_in), w: (k, C_in, C_out), b: (C_out,).
    "same" zero-pads to preserve T (odd k); "valid" yields T - k + 1 steps.
    """
    g_n, t_n, c_in = x.data.shape
    k, c_in_w, c_out = w.data.shape
    if c_in_w != c_in:
        raise ValueError(f"channel mismatch: input {c_in}, kernel {c_in_w}")
    if padding == "same":
        pad = (k - 1) // 2
        xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
        t_out = t_n
    elif padding == "valid":
        pad = 0
        xp = x.data
        t_out = t_n - k + 1
        if t_out < 1:
            raise ValueError(f"sequence of length {t_n} too short for kernel {k}")
    else:
        raise ValueError(f"unknown padding {padding!r}")
    patches = np.concatenate([xp[:, i : i + t_out, :] for i in range(k)], axis=2)
    pf = patches.reshape(-1, k * c_in)
    wf = w.data.reshape(k * c_in, c_out)
    y = (pf @ wf).reshape(g_n, t_out, c_out) + b.data

    def bwd(g):
        gf = g.reshape(-1, c_out)
        accumulate(w, (pf.T @ gf).reshape(k, c_in, c_out))
        accumulate(b, g.sum(axis=(0, 1)))
        if x.requires_grad:
            gp = (gf @ wf.T).reshape(g_n, t_out, k * c_in)
            gxp = np.zeros((g_n, t_n + 2 * pad, c_in))
            for i in range(k):
                gxp[:, i : i + t_out, :] += gp[:, :, i * c_in : (i + 1) * c_in]
            accumulate(x, gxp[:, pad : pad + t_n, :] if pad else gxp)

    return node(y, (x, w, b), bwd)


def pool1d(x: Tensor, kind: str) -> Tensor:
    """Local pooling, window 2, stride 2, ceil semantics: an odd final
    step forms its own window. kind is "average" or "max" (max ties go to
    the earlier element)."""
    g_n, t_n, c_n = x.data.shape
    t_even = t_n - (t_n % 2)
    a = x.data[:, 0:t_even:2, :]
    b = x.data[:, 1:t_even:2, :]
    if kind == "average":
        y = (a + b) / 2.0
    elif kind == "max":
        y = np.maximum(a, b)
    else:
        raise ValueError(f"unknown pooling {kind!r}")
    odd = t_n % 2 == 1
    if odd:
        y = np.concatenate([y, x.data[:, -1:, :]], axis=1)

    def bwd(g):
        gx = np.zeros_like(x.data)
        g_pairs = g[:, : t_even // 2, :]
        if kind == "average":
            gx[:, 0:t_even:2, :] = g_pairs / 2.0
            gx[:, 1:t_even:2, :] = g_pairs / 2.0
        else:
            first_wins = a >= b
            gx[:, 0:t_even:2, :] = g_pairs * first_wins
            gx[:, 1:t_even:2, :] = g_pairs * ~first_wins
        if odd:
            gx[:, -1, :] = g[:, -1, :]
        accumulate(x, gx)

    return node(y, (x,), bwd)


def mean_time(x: Tensor) -> Tensor:
    """Global average over the time axis: (G, T, C) -> (G, C)."""
    t_n = x.data.shape[1]
    y = x.data.mean(axis=1)

    def bwd(g):
        accumulate(x, np.repeat(g[:, None, :] / t_n, t_n, axis=1))

    return node(y, (x,), bwd)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean binary cross-entropy of sigmoid(logits) against 0/1 targets,
    computed in the numerically stable logit form."""
    z = logits.data.ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if z.shape != y.shape:
        raise ValueError(f"logits {z.shape} vs targets {y.shape}")
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))

    def bwd(g):
        gz = (float(g) * (_sigmoid(z) - y) / z.size).reshape(logits.data.shape)
        accumulate(logits, gz)

    return node(loss.mean(), (logits,), bwd)


def mse(pred: Tensor, targets: np.ndarray) -> Tensor:
    """Mean squared error over all components."""
    t = np.asarray(targets, dtype=np.float64)
    diff = pred.data - t

    def bwd(g):
        accumulate(pred, float(g) * 2.0 * diff / diff.size)

    return node((diff * diff).mean(), (pred,), bwd)
