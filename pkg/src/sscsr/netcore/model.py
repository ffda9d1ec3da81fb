"""Configurable 1-D residual network for I/Q classification.

stem conv (BN, ReLU) -> per stage: one strided residual block followed by
``num_res_blocks`` plain residual blocks -> global average pooling ->
dense -> softmax.  Residual blocks use depthwise-separable 3-tap convs.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

from ..errors import ConfigError, ShapeError
from .layers import (
    BatchNorm,
    Conv1d,
    Dense,
    GlobalAvgPool,
    ReLU,
    ResidualBlock,
    Sequential,
    softmax,
    softmax_backward,
)


class Mode(str, Enum):
    TRAIN = "TRAIN"
    EVAL = "EVAL"


@dataclass(frozen=True)
class ArchConfig:
    input_len: int = 1024
    num_classes: int = 10
    input_channels: int = 2
    stem_kernels: int = 64
    stem_size: int = 7
    stem_stride: int = 2
    num_res_blocks: int = 1
    channels_per_stage: tuple = (32, 64, 64)

    def __post_init__(self):
        object.__setattr__(self, "channels_per_stage", tuple(int(c) for c in self.channels_per_stage))
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.input_channels != 2:
            raise ConfigError("input_channels is fixed at 2 (I and Q)")
        for name in ("input_len", "stem_kernels", "stem_size", "stem_stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.num_res_blocks < 0:
            raise ConfigError("num_res_blocks must be >= 0")
        if not self.channels_per_stage or min(self.channels_per_stage) < 1:
            raise ConfigError("channels_per_stage must be a non-empty list of positive widths")
        length = (self.input_len + 2 * (self.stem_size // 2) - self.stem_size) // self.stem_stride + 1
        for _ in self.channels_per_stage:
            length = (length - 1) // 2 + 1
        if length < 1:
            raise ConfigError(f"input_len {self.input_len} is too short for this many stages")

    def to_dict(self):
        d = asdict(self)
        d["channels_per_stage"] = list(self.channels_per_stage)
        return d

    @classmethod
    def toy(cls, input_len, num_classes):
        """Small two-stage network for tests and desk-scale runs."""
        return cls(
            input_len=input_len,
            num_classes=num_classes,
            stem_kernels=16,
            num_res_blocks=0,
            channels_per_stage=(16, 32),
        )


@lru_cache(maxsize=32)
def network(arch):
    """Layer graph for ``arch`` (stateless; parameters live in a :class:`ParamSet`)."""
    layers = [
        Conv1d("stem", arch.input_channels, arch.stem_kernels, arch.stem_size, arch.stem_stride, input_grad=False),
        BatchNorm("stem.bn", arch.stem_kernels),
        ReLU(),
    ]
    cin = arch.stem_kernels
    for s, width in enumerate(arch.channels_per_stage):
        layers.append(ResidualBlock(f"stage{s}.down", cin, width, stride=2))
        for b in range(arch.num_res_blocks):
            layers.append(ResidualBlock(f"stage{s}.block{b}", width, width))
        cin = width
    layers += [GlobalAvgPool(), Dense("head", cin, arch.num_classes)]
    return Sequential(layers)


@dataclass
class ParamSet:
    """Trainable parameters, batch-norm running statistics and their EMA shadow.

    ``ema`` covers the names in both ``params`` and ``state``.
    """

    arch: ArchConfig
    params: dict
    state: dict
    ema: dict = field(default_factory=dict)

    def live(self):
        return {**self.params, **self.state}

    def names(self):
        return list(self.params) + list(self.state)

    def count(self):
        return int(sum(v.size for v in self.params.values()))

    def copy(self):
        return copy.deepcopy(self)

    def load_live(self, values):
        """Overwrite params and state in place from a flat name -> array map."""
        for k in self.params:
            self.params[k] = values[k].copy()
        for k in self.state:
            self.state[k] = values[k].copy()

    def shadow_set(self):
        """A ParamSet whose live values are the EMA shadow."""
        out = ParamSet(self.arch, {}, {}, {})
        out.params = {k: self.ema[k].copy() for k in self.params}
        out.state = {k: self.ema[k].copy() for k in self.state}
        out.ema = {k: v.copy() for k, v in self.ema.items()}
        return out

    def astype(self, dtype):
        cast = lambda d: {k: v.astype(dtype) for k, v in d.items()}
        return ParamSet(self.arch, cast(self.params), cast(self.state), cast(self.ema))


def build_model(arch, rng, dtype=np.float32):
    """Initialize parameters for ``arch``; the EMA shadow starts equal to them."""
    params, state = {}, {}
    network(arch).init(rng, params, state, np.dtype(dtype))
    ps = ParamSet(arch, params, state)
    ps.ema = {k: v.copy() for k, v in ps.live().items()}
    return ps


class Tape:
    """Everything ``backward`` needs from one TRAIN forward pass."""

    __slots__ = ("caches", "probs", "batch_shape")

    def __init__(self, caches, probs, batch_shape):
        self.caches, self.probs, self.batch_shape = caches, probs, batch_shape


def _prepare(paramset, batch):
    batch = np.asarray(batch)
    arch = paramset.arch
    if batch.ndim != 3 or batch.shape[1] != arch.input_channels or batch.shape[2] != arch.input_len:
        raise ShapeError(
            f"expected batch of shape (B, {arch.input_channels}, {arch.input_len}), got {batch.shape}"
        )
    dtype = next(iter(paramset.params.values())).dtype
    return np.ascontiguousarray(batch.transpose(0, 2, 1), dtype=dtype)


def forward(paramset, batch, mode=Mode.EVAL, *, record=False, update_stats=True):
    """Class probabilities for a ``(B, 2, L)`` batch.

    TRAIN mode normalizes with batch statistics and (unless
    ``update_stats=False``) moves the running statistics; EVAL mode reads
    the running statistics and mutates nothing.  With ``record=True``
    returns ``(probs, tape)`` for :func:`backward`.
    """
    mode = Mode(mode)
    x = _prepare(paramset, batch)
    train = mode is Mode.TRAIN
    logits, caches = network(paramset.arch).forward(
        paramset.params, paramset.state, x, train, update_stats and train
    )
    probs = softmax(logits)
    if record:
        return probs, Tape(caches, probs, x.shape)
    return probs


def backward(paramset, tape, dprobs, grads=None):
    """Accumulate ``d loss / d params`` given ``d loss / d probs`` for a recorded pass."""
    if grads is None:
        grads = {}
    dprobs = np.asarray(dprobs, dtype=tape.probs.dtype)
    if dprobs.shape != tape.probs.shape:
        raise ShapeError(f"gradient shape {dprobs.shape} does not match output {tape.probs.shape}")
    dlogits = softmax_backward(tape.probs, dprobs)
    network(paramset.arch).backward(paramset.params, tape.caches, dlogits, grads)
    return grads


def zero_grads(paramset):
    return {k: np.zeros_like(v) for k, v in paramset.params.items()}


def predict(paramset, x, batch_size=256):
    """EVAL-mode probabilities for complex ``(N, L)`` samples, in chunks."""
    from ..dataio import to_network_input

    out = []
    for i in range(0, len(x), batch_size):
        out.append(forward(paramset, to_network_input(x[i:i + batch_size]), Mode.EVAL))
    return np.concatenate(out) if out else np.zeros((0, paramset.arch.num_classes))
