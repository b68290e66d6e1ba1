"""Small dense networks, Adam and running normalization statistics.

Parameters live in one flat float64 vector per network, which keeps the
optimizer, gradient averaging and checkpointing trivial.  Layer ``i`` owns
a weight block ``W_i`` of shape ``[in_i, out_i]`` followed by its bias.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace

import numpy as np

from qpsim import diff


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


ACTIVATIONS = ("tanh", "swish")


class MLP:
    """Affine layers with a hidden activation and an identity output."""

    def __init__(self, sizes, activation: str = "tanh"):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"need at least input and output widths, got {sizes}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        self.sizes = sizes
        self.activation = activation
        self.shapes = list(zip(sizes[:-1], sizes[1:]))
        self.num_params = sum(i * o + o for i, o in self.shapes)

    def init(self, rng: np.random.Generator, last_scale: float = 1.0) -> np.ndarray:
        """Glorot-uniform weights and zero biases; ``last_scale`` shrinks the
        output layer (small initial policy outputs help on-policy methods)."""
        parts = []
        for k, (i, o) in enumerate(self.shapes):
            lim = np.sqrt(6.0 / (i + o))
            w = rng.uniform(-lim, lim, size=(i, o))
            if k == len(self.shapes) - 1:
                w = w * last_scale
            parts += [w.ravel(), np.zeros(o)]
        return np.concatenate(parts)

    def layers(self, params):
        out, at = [], 0
        for i, o in self.shapes:
            w = params[at : at + i * o].reshape(i, o)
            at += i * o
            b = params[at : at + o]
            at += o
            out.append((w, b))
        return out

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return z * _sigmoid(z)

    def _act_grad(self, z, a):
        if self.activation == "tanh":
            return 1.0 - a * a
        s = _sigmoid(z)
        return s + z * s * (1.0 - s)

    def forward(self, params, x, keep_cache: bool = False):
        """``y = f(x)`` for ``x`` of shape ``[n, in]`` (or ``[in]``).

        Works on tracked object arrays too, which is how analytic policy
        gradients flow through the policy.
        """
        squeeze = np.ndim(x) == 1
        h = np.atleast_2d(x)
        cache = [h]
        layers = self.layers(params)
        for k, (w, b) in enumerate(layers):
            z = diff.matmul(h, w) + b if (h.dtype == object or w.dtype == object) else h @ w + b
            if k < len(layers) - 1:
                a = self._act(z)
                cache.append((z, a))
                h = a
            else:
                h = z
        y = h[0] if squeeze else h
        return (y, cache) if keep_cache else y

    def backward(self, params, cache, dy):
        """Gradients of ``sum(dy * y)`` w.r.t. the flat params and the input."""
        dy = np.atleast_2d(dy)
        layers = self.layers(params)
        grads = [None] * len(layers)
        g = dy
        for k in range(len(layers) - 1, -1, -1):
            w, _ = layers[k]
            h_in = cache[0] if k == 0 else cache[k][1]
            grads[k] = (h_in.T @ g, g.sum(axis=0))
            g = g @ w.T
            if k > 0:
                z, a = cache[k]
                g = g * self._act_grad(z, a)
        flat = np.concatenate([p.ravel() for wb in grads for p in wb])
        return flat, g


def mlp_forward(net: MLP, params, x):
    return net.forward(params, x)


def mlp_backward(net: MLP, params, x, dy):
    """``(dparams, dx)`` for the vector-Jacobian product with ``dy``."""
    _, cache = net.forward(params, x, keep_cache=True)
    return net.backward(params, cache, dy)


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params, learning_rate: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    z = np.zeros_like(np.asarray(params, dtype=np.float64))
    return AdamState(z, z.copy(), 0, learning_rate, beta1, beta2, eps)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update; returns ``(state', params')``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.m.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match {state.m.shape}")
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return replace(state, m=m, v=v, step=t), params


@dataclass(frozen=True)
class RunningStats:
    """Count, mean and sum of squared deviations per dimension."""

    count: float
    mean: np.ndarray
    m2: np.ndarray

    @staticmethod
    def empty(dim: int) -> "RunningStats":
        return RunningStats(0.0, np.zeros(dim), np.zeros(dim))

    @property
    def var(self) -> np.ndarray:
        return self.m2 / self.count if self.count > 0 else np.ones_like(self.mean)

    def update(self, batch) -> "RunningStats":
        return stats_update(self, batch)

    def merge(self, other) -> "RunningStats":
        return stats_merge(self, other)


def stats_merge(a: RunningStats, b: RunningStats) -> RunningStats:
    """Exact pooled statistics of the union of two samples (Chan et al.)."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta * delta * (a.count * b.count / n)
    return RunningStats(n, mean, m2)


def stats_update(stats: RunningStats, batch) -> RunningStats:
    """Folds a ``[n, d]`` batch into ``stats``."""
    x = np.asarray(batch, dtype=np.float64).reshape(-1, stats.mean.shape[0])
    if x.shape[0] == 0:
        return stats
    mean = x.mean(axis=0)
    m2 = ((x - mean) ** 2).sum(axis=0)
    return stats_merge(stats, RunningStats(float(x.shape[0]), mean, m2))


def merge_all(stats_list) -> RunningStats:
    """Pairwise tree reduction in list order; the order is part of the result."""
    items = list(stats_list)
    while len(items) > 1:
        items = [stats_merge(items[i], items[i + 1]) if i + 1 < len(items) else items[i]
                 for i in range(0, len(items), 2)]
    return items[0]


def normalize(stats: RunningStats, x, clip: float = 5.0):
    """``(x - mean) / sqrt(var + 1e-5)`` clipped to ``±clip``; identity before any data."""
    if stats.count == 0:
        return x
    return np.clip((x - stats.mean) / np.sqrt(stats.var + 1e-5), -clip, clip)


# checkpoint files --------------------------------------------------------

MAGIC = b"QPSIMCKP"
VERSION = 1


def save_checkpoint(path, dims, arrays: dict, meta: dict = None):
    """Writes a versioned parameter file.

    Layout, all little-endian: 8-byte magic, ``u32`` version, ``u32`` number
    of layer widths followed by that many ``u32`` widths, ``u32`` length of a
    UTF-8 JSON metadata block and the block itself, ``u64`` scalar count and
    the ``float64`` scalars.  The metadata lists the named sections that the
    scalar array is cut into, in order.
    """
    meta = dict(meta or {})
    names = list(arrays)
    flat = [np.asarray(arrays[n], dtype="<f8").ravel() for n in names]
    meta["sections"] = [[n, int(a.size)] for n, a in zip(names, flat)]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    data = np.concatenate(flat) if flat else np.zeros(0, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}I", *[int(d) for d in dims]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<Q", data.size))
        fh.write(data.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns ``(dims, arrays, meta)`` as written by :func:`save_checkpoint`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    at = 8
    version, nd = struct.unpack_from("<II", raw, at)
    at += 8
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    dims = list(struct.unpack_from(f"<{nd}I", raw, at))
    at += 4 * nd
    (blen,) = struct.unpack_from("<I", raw, at)
    at += 4
    meta = json.loads(raw[at : at + blen].decode("utf-8"))
    at += blen
    (n,) = struct.unpack_from("<Q", raw, at)
    at += 8
    data = np.frombuffer(raw, dtype="<f8", count=n, offset=at).astype(np.float64)
    arrays, k = {}, 0
    for name, size in meta.get("sections", []):
        arrays[name] = data[k : k + size]
        k += size
    if k != n:
        raise ValueError(f"{path}: sections cover {k} of {n} scalars")
    return dims, arrays, meta
