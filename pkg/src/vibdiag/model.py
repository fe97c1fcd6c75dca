"""Compact 1-D CNN in plain numpy: build, forward, backward, Adam, checkpoints.

Layout is channels-last throughout: a batch is ``(B, L, C)``. Each block is a
same-padded convolution, ReLU and a size-2 / stride-2 max-pool (floor on odd
lengths). The head is flatten, dense + ReLU, inverted dropout, dense + softmax.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_CLAMP = 1e-12
CHECKPOINT_MAGIC = b"VDCNNCK\x00"
CHECKPOINT_VERSION = 1


class StaleCacheError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    input_length: int = 2000
    input_channels: int = 2
    conv_blocks: int = 5
    filters_per_block: int = 64
    kernel_sizes: tuple[int, ...] = (5, 3, 3, 3, 3)
    pool_size: int = 2
    dense_units: int = 128
    dropout_rate: float = 0.4
    num_classes: int = 4

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)

    @property
    def kernels(self) -> tuple[int, ...]:
        """Kernel size per block; a short ``kernel_sizes`` repeats its last entry."""
        ks = self.kernel_sizes[:self.conv_blocks]
        return ks + (ks[-1],) * (self.conv_blocks - len(ks))

    def feature_lengths(self) -> list[int]:
        lengths = [self.input_length]
        for _ in range(self.conv_blocks):
            lengths.append(lengths[-1] // self.pool_size)
        return lengths

    @property
    def flat_units(self) -> int:
        return self.feature_lengths()[-1] * self.filters_per_block

    def validate(self) -> None:
        positive = ("input_length", "input_channels", "conv_blocks", "filters_per_block",
                    "dense_units", "num_classes")
        for name in positive:
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pool_size != 2:
            raise ValueError("only pool_size=2 is supported")
        if not self.kernel_sizes or any(k < 1 or k % 2 == 0 for k in self.kernel_sizes):
            raise ValueError("kernel sizes must be odd and positive")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.feature_lengths()[-1] < 1:
            raise ValueError("input too short for the number of pooling blocks")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c_in = self.input_channels
        for i, k in enumerate(self.kernels, start=1):
            shapes[f"conv{i}.weight"] = (k, c_in, self.filters_per_block)
            shapes[f"conv{i}.bias"] = (self.filters_per_block,)
            c_in = self.filters_per_block
        shapes["dense.weight"] = (self.flat_units, self.dense_units)
        shapes["dense.bias"] = (self.dense_units,)
        shapes["out.weight"] = (self.dense_units, self.num_classes)
        shapes["out.bias"] = (self.num_classes,)
        return shapes

    def parameter_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes().values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    version: int = 0

    def __post_init__(self):
        expected = self.config.shapes()
        if list(self.tensors) != list(expected):
            raise ValueError("parameter names/order do not match the configuration")
        for name, shape in expected.items():
            if self.tensors[name].shape != shape:
                raise ValueError(f"{name}: shape {self.tensors[name].shape} != {shape}")

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, self.version)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()},
                           self.version)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self.tensors.values())


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams, **kw) -> "AdamState":
        return cls({k: np.zeros_like(t) for k, t in params.tensors.items()},
                   {k: np.zeros_like(t) for k, t in params.tensors.items()}, **kw)

    def copy(self) -> "AdamState":
        return AdamState({k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()},
                         self.step, self.beta1, self.beta2, self.eps)


def _fans(name: str, shape) -> tuple[int, int]:
    if name.startswith("conv"):
        k, c_in, c_out = shape
        return k * c_in, k * c_out
    return shape[0], shape[1]


def build(cfg: ModelConfig | None = None, seed: int = 0,
          dtype=np.float64) -> tuple[ModelParams, AdamState]:
    """Glorot-uniform weights from ``seed``, zero biases, fresh Adam moments."""
    cfg = cfg or ModelConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in cfg.shapes().items():
        if name.endswith(".bias"):
            tensors[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in, fan_out = _fans(name, shape)
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            tensors[name] = rng.uniform(-limit, limit, shape).astype(dtype)
    params = ModelParams(cfg, tensors)
    return params, AdamState.zeros_like(params)


# ------------------------------------------------------------------ layers

def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """``(B, L, C)`` -> ``(B * L, k * C)`` for a same-padded convolution."""
    B, L, C = x.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    win = sliding_window_view(xp, k, axis=1)  # (B, L, C, k)
    # the reshape can yield an overlapping-stride view that BLAS rejects
    return np.ascontiguousarray(win.transpose(0, 1, 3, 2).reshape(B * L, k * C))


def _conv_forward(x, w, b):
    B, L, _ = x.shape
    k, c_in, c_out = w.shape
    return (_im2col(x, k) @ w.reshape(k * c_in, c_out) + b).reshape(B, L, c_out)


def _conv_backward(x, w, dout):
    B, L, C = x.shape
    k, _, c_out = w.shape
    pad = (k - 1) // 2
    d2 = dout.reshape(B * L, c_out)
    dw = (_im2col(x, k).T @ d2).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(k * C, c_out).T).reshape(B, L, k, C)
    dxp = np.zeros((B, L + k - 1, C), dtype=dout.dtype)
    for j in range(k):
        dxp[:, j:j + L] += dcols[:, :, j]
    return dxp[:, pad:pad + L], dw, db


def _pool_forward(x):
    B, L, F = x.shape
    half = L // 2
    a = x[:, 0:2 * half:2]
    b = x[:, 1:2 * half:2]
    first = a >= b
    return np.where(first, a, b), first


def _pool_backward(dout, first, length):
    B, half, F = dout.shape
    dx = np.zeros((B, length, F), dtype=dout.dtype)
    dx[:, 0:2 * half:2] = np.where(first, dout, 0.0)
    dx[:, 1:2 * half:2] = np.where(first, 0.0, dout)
    return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    version: int
    training: bool
    conv_inputs: list = field(default_factory=list)
    conv_outputs: list = field(default_factory=list)
    pool_masks: list = field(default_factory=list)
    flat: np.ndarray | None = None
    hidden: np.ndarray | None = None
    dropout_mask: np.ndarray | None = None
    dropped: np.ndarray | None = None
    probs: np.ndarray | None = None


def forward(params: ModelParams, batch, training: bool = False, dropout_seed=None):
    """Return ``(probabilities (B, classes), cache)``."""
    cfg = params.config
    x = np.asarray(batch, dtype=params.dtype)
    if x.ndim != 3 or x.shape[1:] != (cfg.input_length, cfg.input_channels):
        raise ValueError(
            f"expected batch (B, {cfg.input_length}, {cfg.input_channels}), got {x.shape}")
    if training and dropout_seed is None:
        raise ValueError("training mode needs a dropout_seed")
    t = params.tensors
    cache = ForwardCache(params.version, training)
    for i in range(1, cfg.conv_blocks + 1):
        cache.conv_inputs.append(x)
        a = np.maximum(_conv_forward(x, t[f"conv{i}.weight"], t[f"conv{i}.bias"]), 0.0)
        cache.conv_outputs.append(a)
        x, first = _pool_forward(a)
        cache.pool_masks.append(first)
    flat = x.reshape(x.shape[0], -1)
    hidden = np.maximum(flat @ t["dense.weight"] + t["dense.bias"], 0.0)
    dropped = hidden
    if training and cfg.dropout_rate > 0:
        rng = np.random.default_rng(dropout_seed)
        mask = (rng.random(hidden.shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)
        mask = mask.astype(hidden.dtype)
        cache.dropout_mask = mask
        dropped = hidden * mask
    probs = softmax(dropped @ t["out.weight"] + t["out.bias"])
    cache.flat, cache.hidden, cache.dropped, cache.probs = flat, hidden, dropped, probs
    return probs, cache


def predict_proba(params: ModelParams, batch) -> np.ndarray:
    return forward(params, batch, training=False)[0]


def predict(params: ModelParams, batch, batch_size: int = 256) -> np.ndarray:
    batch = np.asarray(batch)
    out = [predict_proba(params, batch[i:i + batch_size]).argmax(axis=1)
           for i in range(0, len(batch), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels.astype(np.int64)] = 1.0
    return out


def loss(probabilities, labels) -> float:
    """Mean categorical cross-entropy; ``labels`` are one-hot rows or integer codes."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = one_hot(labels, p.shape[1])
    return float(np.mean(-np.sum(y * np.log(np.maximum(p, LOG_CLAMP)), axis=1)))


def logit_gradient(probabilities, labels) -> np.ndarray:
    p = np.asarray(probabilities)
    return (p - one_hot(labels, p.shape[1]).astype(p.dtype)) / p.shape[0]


def backward(params: ModelParams, cache: ForwardCache | None, labels) -> dict[str, np.ndarray]:
    """Gradients of the mean cross-entropy for the batch held in ``cache``."""
    if cache is None or cache.probs is None:
        raise StaleCacheError("no forward cache; run forward(training=True) first")
    if not cache.training:
        raise StaleCacheError("cache comes from an inference pass")
    if cache.version != params.version:
        raise StaleCacheError("cache is stale: parameters changed since the forward pass")
    cfg = params.config
    t = params.tensors
    grads = {}
    d = logit_gradient(cache.probs, labels)
    grads["out.weight"] = cache.dropped.T @ d
    grads["out.bias"] = d.sum(axis=0)
    d = d @ t["out.weight"].T
    if cache.dropout_mask is not None:
        d = d * cache.dropout_mask
    d = d * (cache.hidden > 0)
    grads["dense.weight"] = cache.flat.T @ d
    grads["dense.bias"] = d.sum(axis=0)
    d = (d @ t["dense.weight"].T).reshape(
        cache.flat.shape[0], cfg.feature_lengths()[-1], cfg.filters_per_block)
    for i in range(cfg.conv_blocks, 0, -1):
        a = cache.conv_outputs[i - 1]
        d = _pool_backward(d, cache.pool_masks[i - 1], a.shape[1]) * (a > 0)
        d, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = _conv_backward(
            cache.conv_inputs[i - 1], t[f"conv{i}.weight"], d)
    return {name: grads[name] for name in t}


def adam_step(params: ModelParams, state: AdamState, gradients: dict[str, np.ndarray],
              lr: float) -> tuple[ModelParams, AdamState]:
    """Bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if not lr > 0:
        raise ValueError("learning rate must be positive")
    for name, g in gradients.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        if g.shape != params.tensors[name].shape:
            raise ValueError(f"gradient shape mismatch for {name}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, g in gradients.items():
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params.tensors[name] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.version += 1
    return params, state


# -------------------------------------------------------------- checkpoints

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


def save_checkpoint(params: ModelParams, path, extra: dict | None = None) -> Path:
    """Binary container plus a JSON twin at ``<path>.json``.

    Layout: magic, u32 version, u32 config length, config JSON, u32 tensor
    count, then per tensor: u16 name length, name, u8 dtype code, u8 ndim,
    u32 dims, raw little-endian data.
    """
    path = Path(path)
    meta = {"config": params.config.to_dict(), "extra": extra or {}}
    cfg_bytes = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, arr in params.tensors.items():
            code = 1 if arr.dtype == np.float32 else 0
            data = np.ascontiguousarray(arr, dtype=_DTYPES[code])
            nb = name.encode()
            fh.write(struct.pack("<H", len(nb)) + nb)
            fh.write(struct.pack("<BB", code, arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(data.tobytes())
    twin = {"format_version": CHECKPOINT_VERSION, **meta,
            "tensors": {k: {"shape": list(v.shape), "values": v.ravel().tolist()}
                        for k, v in params.tensors.items()}}
    with open(path.with_suffix(path.suffix + ".json"), "w") as fh:
        json.dump(twin, fh)
    return path


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a model checkpoint")
    pos = len(CHECKPOINT_MAGIC)
    version, n_cfg = struct.unpack_from("<II", blob, pos)
    pos += 8
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(blob[pos:pos + n_cfg])
    pos += n_cfg
    (n_tensors,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = {}
    for _ in range(n_tensors):
        (n_name,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + n_name].decode()
        pos += n_name
        code, ndim = struct.unpack_from("<BB", blob, pos)
        pos += 2
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        dt = _DTYPES[code]
        size = int(np.prod(shape)) * dt.itemsize
        tensors[name] = np.frombuffer(blob, dt, int(np.prod(shape)), pos).reshape(shape).copy()
        pos += size
    if pos != len(blob):
        raise ValueError(f"{path}: trailing bytes in checkpoint")
    return ModelParams(ModelConfig.from_dict(meta["config"]), tensors), meta.get("extra", {})
