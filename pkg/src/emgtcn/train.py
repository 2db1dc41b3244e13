"""Mini-batch training: Adam, cross-entropy, the epoch loop, and
bit-exact checkpointing.

Determinism is a contract here, not an aspiration. Batch order comes
from one seeded PCG64 generator that is advanced exactly once per epoch,
optimizer math is plain float64, and the checkpoint stores weights,
moment buffers and the generator state verbatim, so a run resumed from
epoch e reproduces the uninterrupted run bit for bit.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FormatError,
    NumericalError,
    UsageError,
)
from .model import AttentionTcn, ModelConfig
from .tensor import Tensor, make_op

__all__ = [
    "TrainConfig",
    "TrainResult",
    "Adam",
    "cross_entropy",
    "train",
    "Checkpoint",
    "make_checkpoint",
    "restore_model",
    "restore_optimizer",
    "save_checkpoint",
    "load_checkpoint",
    "write_trace",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 32
    lr: float = 1e-4
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not (self.lr > 0):
            raise ConfigError(f"lr must be positive, got {self.lr}")


@dataclass
class TrainResult:
    """Per-epoch trace plus the RNG state needed to continue the run."""

    epochs: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    accuracies: list = field(default_factory=list)
    rng_state: dict | None = None

    def append(self, epoch: int, loss: float, acc: float):
        self.epochs.append(epoch)
        self.losses.append(loss)
        self.accuracies.append(acc)


class Adam:
    """Standard Adam with bias correction over a name -> Tensor map."""

    def __init__(self, params: dict, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self):
        """Apply one update from the gradients currently on the params.

        A missing gradient counts as zero (the moments still decay).
        """
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            if not np.isfinite(g).all():
                raise NumericalError(
                    f"non-finite gradient for parameter {name!r} at step {t}"
                )
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of the true classes.

    ``logits`` is B x K (or a single K-vector), ``labels`` holds class
    indices in [0, K). Stable via log-sum-exp; the gradient is the fused
    (softmax - one_hot) / B, so no giant softmax graph is recorded.
    """
    squeeze = logits.ndim == 1
    if squeeze:
        labels = np.asarray([labels], dtype=np.int64)
    else:
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    z2 = logits.data.reshape(1, -1) if squeeze else logits.data
    if z2.ndim != 2:
        raise DimensionError(f"logits must be B x K, got shape {logits.shape}")
    b, k = z2.shape
    if labels.shape != (b,):
        raise DimensionError(
            f"need one label per row: {b} rows, {labels.shape[0]} labels"
        )
    bad = (labels < 0) | (labels >= k)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"label {labels[i]} at index {i} outside [0, {k})"
        )
    z = z2
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))
    losses = lse[:, 0] - z[np.arange(b), labels]
    soft = np.exp(z - lse)

    def backward(g):
        grad = soft.copy()
        grad[np.arange(b), labels] -= 1.0
        grad *= g / b
        return (grad.reshape(logits.shape) if squeeze else grad,)

    return make_op(np.asarray(losses.mean()), (logits,), backward)


def train(
    model: AttentionTcn,
    train_set,
    cfg: TrainConfig,
    optimizer: Adam | None = None,
    start_epoch: int = 0,
    rng_state: dict | None = None,
) -> TrainResult:
    """Run epochs [start_epoch, cfg.epochs) of shuffled mini-batch SGD.

    Shuffling draws one permutation per epoch from a PCG64 generator
    seeded with cfg.seed (or restored from ``rng_state`` when resuming),
    which is what makes split runs reproduce whole runs exactly.
    """
    m = len(train_set)
    if m == 0:
        raise UsageError("cannot train on an empty segment set")
    want = (model.cfg.channels, model.cfg.seq_len)
    if tuple(train_set.data.shape[1:]) != want:
        raise DimensionError(
            f"segments are {train_set.data.shape[1:]}, model expects {want}"
        )
    opt = optimizer if optimizer is not None else Adam(
        model.named_parameters(), lr=cfg.lr
    )
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if rng_state is not None:
        rng.bit_generator.state = rng_state

    x_all = np.ascontiguousarray(train_set.data, dtype=np.float64)
    y_all = np.asarray(train_set.labels, dtype=np.int64)

    result = TrainResult()
    for epoch in range(start_epoch, cfg.epochs):
        order = rng.permutation(m) if cfg.shuffle else np.arange(m)
        loss_sum = 0.0
        correct = 0
        for lo in range(0, m, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            xb = x_all[idx]
            yb = y_all[idx]
            logits = model.forward(xb)
            loss = cross_entropy(logits, yb)
            tape = loss.backward()
            opt.step()
            tape.reset()
            loss_sum += float(loss.data) * len(idx)
            correct += int((np.argmax(logits.data, axis=1) == yb).sum())
        result.append(epoch, loss_sum / m, correct / m)
    result.rng_state = rng.bit_generator.state
    return result


def write_trace(path, result: TrainResult):
    """Emit the per-epoch trace as CSV with round-trippable floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss,train_acc\n")
        for e, l, a in zip(result.epochs, result.losses, result.accuracies):
            fh.write(f"{e},{l!r},{a!r}\n")


# -- checkpoint format ---------------------------------------------------
#
# little-endian binary:
#   magic "TCHG" | u32 version | u32 entry_count | entries...
# entry:
#   u32 name_len | name utf-8 | u8 kind | payload
# kinds: 0 = JSON blob (u64 byte length + bytes)
#        1 = float64 array (u32 ndim, u64 dims..., raw data)
#        2 = i64 scalar

_MAGIC = b"TCHG"
_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    epoch: int
    weights: dict
    m: dict
    v: dict
    opt: dict
    rng_state: dict | None
    version: int = _VERSION


def make_checkpoint(
    model: AttentionTcn, optimizer: Adam, epoch: int, rng_state: dict | None
) -> Checkpoint:
    return Checkpoint(
        config=model.cfg,
        epoch=epoch,
        weights={k: p.data.copy() for k, p in model.named_parameters().items()},
        m={k: a.copy() for k, a in optimizer.m.items()},
        v={k: a.copy() for k, a in optimizer.v.items()},
        opt={
            "lr": optimizer.lr,
            "beta1": optimizer.beta1,
            "beta2": optimizer.beta2,
            "eps": optimizer.eps,
            "step": optimizer.step_count,
        },
        rng_state=rng_state,
    )


def restore_model(ckpt: Checkpoint) -> AttentionTcn:
    model = AttentionTcn(ckpt.config, seed=0)
    params = model.named_parameters()
    if set(params) != set(ckpt.weights):
        raise FormatError(
            "checkpoint weight names do not match the architecture "
            f"(missing {sorted(set(params) - set(ckpt.weights))[:3]}...)"
        )
    for name, p in params.items():
        buf = ckpt.weights[name]
        if buf.shape != p.data.shape:
            raise FormatError(
                f"weight {name!r} has shape {buf.shape}, expected {p.data.shape}"
            )
        p.data = np.ascontiguousarray(buf, dtype=np.float64)
    return model


def restore_optimizer(ckpt: Checkpoint, model: AttentionTcn) -> Adam:
    opt = Adam(
        model.named_parameters(),
        lr=ckpt.opt["lr"],
        beta1=ckpt.opt["beta1"],
        beta2=ckpt.opt["beta2"],
        eps=ckpt.opt["eps"],
    )
    opt.step_count = int(ckpt.opt["step"])
    for name in opt.m:
        opt.m[name] = np.ascontiguousarray(ckpt.m[name], dtype=np.float64)
        opt.v[name] = np.ascontiguousarray(ckpt.v[name], dtype=np.float64)
    return opt


def save_checkpoint(path, ckpt: Checkpoint):
    entries = [("config", 0, _cfg_to_json(ckpt.config)), ("epoch", 2, ckpt.epoch)]
    entries.append(("opt", 0, json.dumps(ckpt.opt, sort_keys=True)))
    if ckpt.rng_state is not None:
        entries.append(("rng", 0, json.dumps(ckpt.rng_state, sort_keys=True)))
    for name, arr in ckpt.weights.items():
        entries.append((f"w/{name}", 1, arr))
    for name, arr in ckpt.m.items():
        entries.append((f"m/{name}", 1, arr))
    for name, arr in ckpt.v.items():
        entries.append((f"v/{name}", 1, arr))

    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<II", ckpt.version, len(entries)))
    for name, kind, payload in entries:
        raw = name.encode("utf-8")
        out.write(struct.pack("<I", len(raw)))
        out.write(raw)
        out.write(struct.pack("<B", kind))
        if kind == 0:
            blob = payload.encode("utf-8")
            out.write(struct.pack("<Q", len(blob)))
            out.write(blob)
        elif kind == 1:
            arr = np.ascontiguousarray(payload, dtype="<f8")
            out.write(struct.pack("<I", arr.ndim))
            out.write(struct.pack(f"<{max(arr.ndim, 1)}Q", *(arr.shape or (1,))))
            out.write(arr.tobytes())
        else:
            out.write(struct.pack("<q", int(payload)))
    with open(path, "wb") as fh:
        fh.write(out.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != _MAGIC:
        raise FormatError(
            f"not a checkpoint file: bad magic {magic!r} at offset 0"
        )
    version, count = struct.unpack("<II", r.take(8, "header"))
    if version != _VERSION:
        raise FormatError(
            f"checkpoint version {version} is not supported; this build reads {_VERSION}"
        )
    fields: dict = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", r.take(4, "entry name length"))
        name = r.take(name_len, "entry name").decode("utf-8")
        (kind,) = struct.unpack("<B", r.take(1, f"kind of {name!r}"))
        if kind == 0:
            (blob_len,) = struct.unpack("<Q", r.take(8, f"length of {name!r}"))
            fields[name] = r.take(blob_len, f"payload of {name!r}").decode("utf-8")
        elif kind == 1:
            (ndim,) = struct.unpack("<I", r.take(4, f"rank of {name!r}"))
            dims = struct.unpack(
                f"<{max(ndim, 1)}Q", r.take(8 * max(ndim, 1), f"shape of {name!r}")
            )
            shape = dims[:ndim] if ndim else ()
            n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            raw = r.take(8 * n, f"data of {name!r}")
            fields[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        elif kind == 2:
            (fields[name],) = struct.unpack("<q", r.take(8, f"value of {name!r}"))
        else:
            raise FormatError(
                f"unknown entry kind {kind} for {name!r} at offset {r.offset}"
            )
    if r.offset != len(buf):
        raise FormatError(
            f"{len(buf) - r.offset} trailing bytes after offset {r.offset}"
        )
    try:
        config = ModelConfig(**json.loads(fields.pop("config")))
        epoch = int(fields.pop("epoch"))
        opt = json.loads(fields.pop("opt"))
        rng_state = json.loads(fields.pop("rng")) if "rng" in fields else None
    except KeyError as missing:
        raise FormatError(f"checkpoint is missing entry {missing}") from None
    weights, moments_m, moments_v = {}, {}, {}
    for name, value in fields.items():
        group, _, param = name.partition("/")
        target = {"w": weights, "m": moments_m, "v": moments_v}.get(group)
        if target is None or not param:
            raise FormatError(f"unrecognized checkpoint entry {name!r}")
        target[param] = value
    return Checkpoint(
        config=config, epoch=epoch, weights=weights, m=moments_m, v=moments_v,
        opt=opt, rng_state=rng_state, version=version,
    )


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.buf):
            raise FormatError(
                f"truncated checkpoint: needed {n} bytes for {what} at offset "
                f"{self.offset}, only {len(self.buf) - self.offset} remain"
            )
        out = self.buf[self.offset : self.offset + n]
        self.offset += n
        return out


def _cfg_to_json(cfg: ModelConfig) -> str:
    return json.dumps(
        {
            "channels": cfg.channels,
            "seq_len": cfg.seq_len,
            "num_patches": cfg.num_patches,
            "patch_len": cfg.patch_len,
            "model_dim": cfg.model_dim,
            "kernel_size": cfg.kernel_size,
            "num_classes": cfg.num_classes,
        },
        sort_keys=True,
    )
