"""The U-Net variant used for tongue and vein segmentation, plus checkpoints.

Contracting path: ``depth`` levels of two (conv3x3 -> BN -> act) blocks and a
2x2 max-pool, filters doubling per level.  Bottleneck: two more blocks at
``base * 2**depth`` filters followed by dropout.  Expansive path: per level a
2x2 stride-2 transposed conv (-> BN -> act), concatenation with the matching
skip, and two blocks halving the filters.  Head: one 3x3 conv to a single
channel and a sigmoid.  With depth 4 that is 19 ordinary and 4 transposed
convolutions.
"""
from __future__ import annotations

import struct
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .errors import (
    CheckpointError,
    CheckpointMissingName,
    CheckpointShapeMismatch,
    CheckpointTruncated,
    CheckpointUnknownName,
    CheckpointVersionMismatch,
    ConfigError,
    ShapeError,
)
from .nn import functional as F
from .nn.layers import ACTIVATIONS, ConvBNAct, Conv3x3, UpConv2x2
from .nn.tensor import Tensor

DEFAULT_DEPTH = 4


@dataclass
class UNetConfig:
    base_filters: int = 16
    depth: int = DEFAULT_DEPTH
    dropout_rate: float = 0.05
    l2_scale: float = 1e-4
    in_channels: int = 1
    out_channels: int = 1
    activation: str = "relu"
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if self.base_filters < 1:
            raise ConfigError(f"base_filters must be >= 1, got {self.base_filters}")
        # depth != 4 exists only for small gradient-check networks
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.in_channels != 1 or self.out_channels != 1:
            raise ConfigError("only single-channel input and output are supported")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.l2_scale < 0:
            raise ConfigError("l2_scale must be non-negative")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")

    def to_dict(self):
        return asdict(self)


class UNet:
    def __init__(self, config: UNetConfig, rng: np.random.Generator, dtype=np.float32):
        self.config = config
        cfg = config
        widths = [cfg.base_filters * 2 ** lvl for lvl in range(cfg.depth + 1)]
        kw = dict(activation=cfg.activation, momentum=cfg.bn_momentum, eps=cfg.bn_eps, dtype=dtype)

        self.down = []
        c_in = cfg.in_channels
        for lvl in range(cfg.depth):
            c = widths[lvl]
            self.down.append((
                ConvBNAct(f"down{lvl}.conv1", Conv3x3, c_in, c, rng, **kw),
                ConvBNAct(f"down{lvl}.conv2", Conv3x3, c, c, rng, **kw),
            ))
            c_in = c
        self.bottom = (
            ConvBNAct("bottom.conv1", Conv3x3, c_in, widths[-1], rng, **kw),
            ConvBNAct("bottom.conv2", Conv3x3, widths[-1], widths[-1], rng, **kw),
        )
        self.up = []
        for lvl in reversed(range(cfg.depth)):
            c = widths[lvl]
            self.up.append((
                ConvBNAct(f"up{lvl}.tconv", UpConv2x2, widths[lvl + 1], c, rng, **kw),
                ConvBNAct(f"up{lvl}.conv1", Conv3x3, 2 * c, c, rng, **kw),
                ConvBNAct(f"up{lvl}.conv2", Conv3x3, c, c, rng, **kw),
            ))
        self.head = Conv3x3("head", widths[0], cfg.out_channels, rng, bias=True, dtype=dtype)

    # ------------------------------------------------------------------
    def blocks(self):
        for pair in self.down:
            yield from pair
        yield from self.bottom
        for triple in self.up:
            yield from triple

    def conv_layers(self):
        """Every convolution in forward order (blocks first, head last)."""
        return [b.conv for b in self.blocks()] + [self.head]

    def conv_census(self) -> dict:
        census = {"conv": 0, "transposed_conv": 0}
        for layer in self.conv_layers():
            census[layer.kind] += 1
        return census

    def parameters(self):
        params = []
        for b in self.blocks():
            params.extend(b.parameters())
        params.extend(self.head.parameters())
        return params

    def buffers(self):
        bufs = []
        for b in self.blocks():
            bufs.extend(b.buffers())
        return bufs

    def state_entries(self):
        """Ordered (name, array) pairs: every parameter, then BN running stats."""
        return [(p.name, p.data) for p in self.parameters()] + self.buffers()

    def weight_decayed(self):
        return [p for p in self.parameters() if p.weight_decayed]

    def num_trainable(self) -> int:
        return sum(p.data.size for p in self.parameters() if p.trainable)

    def freeze(self):
        for p in self.parameters():
            p.set_trainable(False)
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        for b in self.blocks():
            st = b.bn.state
            st.running_mean = st.running_mean.astype(dtype)
            st.running_var = st.running_var.astype(dtype)
        return self

    # ------------------------------------------------------------------
    def forward(self, x, training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.data.ndim != 4:
            raise ShapeError(f"expected NCHW input, got {x.shape}")
        mult = 2 ** self.config.depth
        if x.shape[2] % mult or x.shape[3] % mult:
            raise ShapeError(f"spatial dims {x.shape[2:]} must be divisible by {mult}")
        skips = []
        h = x
        for c1, c2 in self.down:
            h = c2(c1(h, training), training)
            skips.append(h)
            h = F.max_pool_2x2(h)
        b1, b2 = self.bottom
        h = b2(b1(h, training), training)
        h = F.dropout(h, self.config.dropout_rate, rng, training)
        for (tconv, c1, c2), skip in zip(self.up, reversed(skips)):
            h = tconv(h, training)
            h = F.concat_channels(h, skip)
            h = c2(c1(h, training), training)
        return F.sigmoid(self.head(h))

    __call__ = forward


def build(config: UNetConfig, rng: np.random.Generator, dtype=np.float32) -> UNet:
    return UNet(config, rng, dtype=dtype)


# ----------------------------------------------------------------------
# checkpoint format: b"UNET" b"CKP1" <u32 count> then per entry
# <u32 name_len> <utf-8 name> <u8 rank> <rank x u32 dims> <prod(dims) x f32>, all little-endian

MAGIC = b"UNET"
VERSION = 1


def _version_tag(v: int) -> bytes:
    return b"CKP" + str(v).encode()


def encode_entries(entries) -> bytes:
    out = [MAGIC, _version_tag(VERSION), struct.pack("<I", len(entries))]
    for name, arr in entries:
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def decode_entries(data: bytes) -> list:
    """Parse checkpoint bytes into [(name, float32 array)]; raises on any defect."""
    data = bytes(data)
    if len(data) < 8:
        raise CheckpointTruncated("checkpoint shorter than its 8-byte header")
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}")
    if data[4:8] != _version_tag(VERSION):
        raise CheckpointVersionMismatch(f"unsupported checkpoint version {data[4:8]!r}, expected {_version_tag(VERSION)!r}")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise CheckpointTruncated(f"checkpoint truncated at byte {pos}")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (count,) = take("<I")
    entries = []
    for _ in range(count):
        (name_len,) = take("<I")
        if pos + name_len > len(data):
            raise CheckpointTruncated(f"checkpoint truncated in entry name at byte {pos}")
        try:
            name = data[pos:pos + name_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"entry name at byte {pos} is not UTF-8") from exc
        pos += name_len
        (rank,) = take("<B")
        dims = take(f"<{rank}I")
        n = int(np.prod(dims, dtype=np.int64))
        nbytes = 4 * n
        if pos + nbytes > len(data):
            raise CheckpointTruncated(f"checkpoint truncated in values of {name!r}")
        values = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims).astype(np.float32)
        pos += nbytes
        entries.append((name, values))
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after last entry")
    return entries


def save_checkpoint(model: UNet) -> bytes:
    return encode_entries(model.state_entries())


def load_checkpoint(model: UNet, data: bytes) -> UNet:
    """Copy checkpoint values into ``model``; the model is untouched on any error."""
    entries = decode_entries(data)
    targets = dict(model.state_entries())
    seen = set()
    for name, values in entries:
        if name not in targets:
            raise CheckpointUnknownName(f"checkpoint entry {name!r} does not exist in the model")
        if values.shape != targets[name].shape:
            raise CheckpointShapeMismatch(
                f"shape mismatch for {name!r}: checkpoint {values.shape}, model {targets[name].shape}"
            )
        seen.add(name)
    missing = [n for n in targets if n not in seen]
    if missing:
        raise CheckpointMissingName(f"checkpoint lacks {len(missing)} model entries, first {missing[0]!r}")
    for name, values in entries:
        targets[name][...] = values
    return model


def infer_base_filters(data: bytes) -> int:
    """Read the first-level filter count back out of a checkpoint."""
    for name, values in decode_entries(data):
        if name == "down0.conv1.kernel":
            return int(values.shape[0])
    raise CheckpointError("checkpoint has no 'down0.conv1.kernel' entry")
