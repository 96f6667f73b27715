"""Encoder-decoder with mirror links: one encoder, albedo/shading/specular decoders.

Encoder level ``l`` (0-based) is a stride-2 Conv-BN-ReLU producing maps of
size ``resolution / 2**(l+1)``.  Decoder block ``k`` upsamples its previous
features to ``resolution / 2**(L-1-k)``, concatenates whatever links the
variant allows, and applies a stride-1 Conv-BN-ReLU.  The encoder counterpart
of block ``k`` is encoder level ``L-2-k``; for the last block, which works at
full resolution, the counterpart is the input image itself.
"""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .fileio import atomic_write_bytes
from .numerics import (AdamState, Tensor, batch_norm2d, concat, conv2d,
                       upsample_nearest2x)

VARIANTS = ("independent", "shared_encoder", "mirror_link", "skip3", "skip0")
COMPONENTS = ("albedo", "shading", "specular")

CHECKPOINT_MAGIC = b"NLICKPT\x01"
CHECKPOINT_VERSION = 1


@dataclass
class NetworkConfig:
    resolution: int = 64
    levels: int = 5
    base_channels: int = 16
    max_channels: int = 128
    variant: str = "mirror_link"

    def validate(self) -> "NetworkConfig":
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.levels < 3:
            raise ValueError(f"levels must be >= 3, got {self.levels}")
        res = self.resolution
        if res < 1 or res & (res - 1):
            raise ValueError(f"resolution must be a power of two, got {res}")
        if res % (2 ** self.levels):
            raise ValueError(f"resolution {res} is not divisible by 2**levels = {2 ** self.levels}")
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise ValueError("need 1 <= base_channels <= max_channels")
        return self

    def channels(self, level: int) -> int:
        return min(self.base_channels * 2 ** level, self.max_channels)

    @property
    def shared_encoder(self) -> bool:
        return self.variant != "independent"

    @property
    def cross_links(self) -> bool:
        return self.variant in ("mirror_link", "skip3", "skip0")

    @property
    def mirror_blocks(self) -> frozenset:
        """Decoder blocks that receive a mirror link (block 0 is deepest)."""
        L = self.levels
        if self.variant == "skip0":
            return frozenset()
        if self.variant == "skip3":
            return frozenset(range(-(-L // 2)))
        return frozenset(range(L))

    def decoder_channels(self, block: int) -> int:
        return self.channels(max(self.levels - 2 - block, 0))

    def mirror_channels(self, block: int) -> int:
        if block == self.levels - 1:
            return 3
        return self.channels(self.levels - 2 - block)

    def decoder_in_channels(self, block: int) -> int:
        own = self.channels(self.levels - 1) if block == 0 else self.decoder_channels(block - 1)
        total = own
        if block in self.mirror_blocks:
            total += self.mirror_channels(block)
        if self.cross_links and block >= 1:
            total += 2 * self.decoder_channels(block - 1)
        return total


@dataclass
class ConvBlock:
    """Conv(3x3) optionally followed by BN and ReLU."""

    weight: Tensor
    bias: Tensor
    stride: int = 1
    gamma: Tensor | None = None
    beta: Tensor | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    @classmethod
    def create(cls, cin: int, cout: int, stride: int, rng: np.random.Generator,
               dtype, norm: bool = True) -> "ConvBlock":
        fan_in = cin * 9
        bound = np.sqrt(6.0 / fan_in)
        weight = Tensor(rng.uniform(-bound, bound, size=(cout, cin, 3, 3)).astype(dtype),
                        requires_grad=True)
        bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
        if not norm:
            return cls(weight, bias, stride)
        return cls(weight, bias, stride,
                   gamma=Tensor(np.ones(cout, dtype=dtype), requires_grad=True),
                   beta=Tensor(np.zeros(cout, dtype=dtype), requires_grad=True),
                   running_mean=np.zeros(cout, dtype=dtype),
                   running_var=np.ones(cout, dtype=dtype))

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        y = conv2d(x, self.weight, self.bias, stride=self.stride, pad=1)
        if self.gamma is None:
            return y
        y = batch_norm2d(y, self.gamma, self.beta, training, self.running_mean, self.running_var)
        return y.relu()

    def named_tensors(self, prefix: str):
        yield prefix + ".weight", self.weight
        yield prefix + ".bias", self.bias
        if self.gamma is not None:
            yield prefix + ".gamma", self.gamma
            yield prefix + ".beta", self.beta

    def named_buffers(self, prefix: str):
        if self.gamma is not None:
            yield prefix + ".running_mean", self.running_mean
            yield prefix + ".running_var", self.running_var


@dataclass
class MirrorLinkNet:
    config: NetworkConfig
    encoders: list            # one list of ConvBlocks, or three for "independent"
    decoders: dict            # component -> list of ConvBlocks
    heads: dict               # component -> ConvBlock without BN
    encoder_frozen: bool = False
    dtype: str = "float32"
    extra: dict = field(default_factory=dict)

    # -- parameters ------------------------------------------------------------
    def named_parameters(self):
        for e, blocks in enumerate(self.encoders):
            for l, block in enumerate(blocks):
                yield from block.named_tensors(f"encoder{e}.level{l}")
        for comp in COMPONENTS:
            for k, block in enumerate(self.decoders[comp]):
                yield from block.named_tensors(f"decoder.{comp}.block{k}")
            yield from self.heads[comp].named_tensors(f"head.{comp}")

    def named_buffers(self):
        for e, blocks in enumerate(self.encoders):
            for l, block in enumerate(blocks):
                yield from block.named_buffers(f"encoder{e}.level{l}")
        for comp in COMPONENTS:
            for k, block in enumerate(self.decoders[comp]):
                yield from block.named_buffers(f"decoder.{comp}.block{k}")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def encoder_parameters(self) -> list[Tensor]:
        return [t for name, t in self.named_parameters() if name.startswith("encoder")]

    def decoder_parameters(self) -> list[Tensor]:
        return [t for name, t in self.named_parameters() if not name.startswith("encoder")]

    # -- forward -----------------------------------------------------------------
    def encode(self, x: Tensor, training: bool) -> list[list[Tensor]]:
        """Per-encoder list of level features, deepest last."""
        # a frozen encoder also keeps its batch-norm statistics fixed
        training = training and not self.encoder_frozen
        feats = []
        for blocks in self.encoders:
            h = x
            levels = []
            for block in blocks:
                h = block(h, training)
                levels.append(h)
            feats.append(levels)
        return feats

    def decode(self, feats: list[list[Tensor]], x: Tensor, training: bool) -> tuple:
        cfg = self.config
        L = cfg.levels
        mirror = cfg.mirror_blocks

        def encoder_for(i):
            return feats[i] if len(feats) > 1 else feats[0]

        prev = {comp: encoder_for(i)[L - 1] for i, comp in enumerate(COMPONENTS)}
        for k in range(L):
            up = {comp: upsample_nearest2x(prev[comp]) for comp in COMPONENTS}
            nxt = {}
            for i, comp in enumerate(COMPONENTS):
                parts = [up[comp]]
                if k in mirror:
                    parts.append(x if k == L - 1 else encoder_for(i)[L - 2 - k])
                if cfg.cross_links and k >= 1:
                    parts.extend(up[other] for other in COMPONENTS if other != comp)
                nxt[comp] = self.decoders[comp][k](concat(parts), training)
            prev = nxt
        return tuple(self.heads[comp](prev[comp], training) for comp in COMPONENTS)

    def forward(self, images, training: bool = False) -> tuple:
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=self.dtype))
        res = self.config.resolution
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2:] != (res, res):
            raise ValueError(f"expected input of shape (N, 3, {res}, {res}), got {x.shape}")
        if training and x.shape[0] < 2:
            raise ValueError("training-mode forward needs a batch of at least 2 (batch norm)")
        return self.decode(self.encode(x, training), x, training)

    __call__ = forward


def build(config: NetworkConfig, seed: int = 0, dtype="float32") -> MirrorLinkNet:
    """Initialize a network; the same seed gives bitwise-identical parameters."""
    config.validate()
    rng = np.random.default_rng(seed)
    L = config.levels
    n_enc = 1 if config.shared_encoder else 3
    encoders = []
    for _ in range(n_enc):
        blocks, cin = [], 3
        for l in range(L):
            blocks.append(ConvBlock.create(cin, config.channels(l), 2, rng, dtype))
            cin = config.channels(l)
        encoders.append(blocks)
    decoders, heads = {}, {}
    for comp in COMPONENTS:
        decoders[comp] = [ConvBlock.create(config.decoder_in_channels(k), config.decoder_channels(k),
                                           1, rng, dtype) for k in range(L)]
        heads[comp] = ConvBlock.create(config.decoder_channels(L - 1), 3, 1, rng, dtype, norm=False)
    return MirrorLinkNet(config, encoders, decoders, heads, dtype=np.dtype(dtype).name)


def count_params(net: MirrorLinkNet) -> int:
    return int(sum(p.data.size for p in net.parameters()))


def expected_param_count(config: NetworkConfig) -> int:
    """Closed-form parameter count from the channel schedule."""
    def block(cin, cout, norm=True):
        return cin * cout * 9 + cout + (2 * cout if norm else 0)

    L = config.levels
    enc, cin = 0, 3
    for l in range(L):
        enc += block(cin, config.channels(l))
        cin = config.channels(l)
    dec = sum(block(config.decoder_in_channels(k), config.decoder_channels(k)) for k in range(L))
    head = block(config.decoder_channels(L - 1), 3, norm=False)
    n_enc = 1 if config.shared_encoder else 3
    return n_enc * enc + 3 * (dec + head)


def freeze_encoder(net: MirrorLinkNet) -> MirrorLinkNet:
    """Mark encoder parameters non-trainable (shared-encoder variants only)."""
    if not net.config.shared_encoder:
        raise ValueError("freeze_encoder needs a shared encoder; variant 'independent' has three")
    for p in net.encoder_parameters():
        p.requires_grad = False
        p.grad = None
    net.encoder_frozen = True
    return net


def encoder_checksum(net: MirrorLinkNet) -> str:
    import hashlib
    h = hashlib.sha256()
    for p in net.encoder_parameters():
        h.update(np.ascontiguousarray(p.data).tobytes())
    for name, buf in net.named_buffers():
        if name.startswith("encoder"):
            h.update(np.ascontiguousarray(buf).tobytes())
    return h.hexdigest()


# -- checkpoints -----------------------------------------------------------------

def _pack(header: dict, arrays: list[np.ndarray]) -> bytes:
    body = io.BytesIO()
    table = []
    for arr in arrays:
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        table.append({"dtype": arr.dtype.name, "shape": list(arr.shape), "offset": body.tell()})
        body.write(le.tobytes())
    header = dict(header, arrays=table)
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return CHECKPOINT_MAGIC + len(head).to_bytes(8, "little") + head + body.getvalue()


def _unpack(blob: bytes) -> tuple[dict, list[np.ndarray]]:
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a checkpoint file (bad magic)")
    n = int.from_bytes(blob[len(CHECKPOINT_MAGIC):len(CHECKPOINT_MAGIC) + 8], "little")
    start = len(CHECKPOINT_MAGIC) + 8
    header = json.loads(blob[start:start + n].decode("utf-8"))
    base = start + n
    arrays = []
    for entry in header["arrays"]:
        dt = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        arr = np.frombuffer(blob, dtype=dt, count=count, offset=base + entry["offset"])
        arrays.append(arr.astype(np.dtype(entry["dtype"])).reshape(entry["shape"]))
    return header, arrays


def checkpoint_bytes(net: MirrorLinkNet, optimizer: AdamState | None = None,
                     extra: dict | None = None) -> bytes:
    names, arrays = [], []
    for name, t in net.named_parameters():
        names.append(name)
        arrays.append(t.data)
    for name, buf in net.named_buffers():
        names.append(name)
        arrays.append(buf)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(net.config),
        "dtype": net.dtype,
        "encoder_frozen": net.encoder_frozen,
        "names": names,
        "extra": extra if extra is not None else net.extra,
        "optimizer": None,
    }
    if optimizer is not None:
        header["optimizer"] = {"lr": optimizer.lr, "beta1": optimizer.beta1,
                               "beta2": optimizer.beta2, "eps": optimizer.eps,
                               "t": optimizer.t, "n": len(optimizer.m)}
        arrays.extend(optimizer.m)
        arrays.extend(optimizer.v)
    return _pack(header, arrays)


def save_checkpoint(path, net: MirrorLinkNet, optimizer: AdamState | None = None,
                    extra: dict | None = None) -> None:
    atomic_write_bytes(path, checkpoint_bytes(net, optimizer, extra))


def load_checkpoint(path) -> tuple[MirrorLinkNet, AdamState | None]:
    with open(path, "rb") as f:
        header, arrays = _unpack(f.read())
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    net = build(NetworkConfig(**header["config"]), seed=0, dtype=header["dtype"])
    values = dict(zip(header["names"], arrays))
    for name, t in net.named_parameters():
        t.data[...] = values[name]
    for name, buf in net.named_buffers():
        buf[...] = values[name]
    if header["encoder_frozen"]:
        freeze_encoder(net)
    net.extra = header.get("extra") or {}
    opt = None
    if header["optimizer"] is not None:
        o = header["optimizer"]
        rest = arrays[len(header["names"]):]
        opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], t=o["t"],
                        m=[a.copy() for a in rest[:o["n"]]], v=[a.copy() for a in rest[o["n"]:]])
    return net, opt
