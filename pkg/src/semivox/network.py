"""Dual-branch hierarchical network: a shared encoder of interleaved
ConvBlock + stride-2 downsampling, a deep decoder fed from the deepest level
and a shallow decoder fed from one level above, each ending in a softmax
segmentation head and a tanh regression head. Decoder blocks are
conv-then-transposed-conv with additive skip connections from the matching
encoder ConvBlock output.

No normalization layers: the autodiff surface stays small and gradient
checks stay exact. LeakyReLU (slope 0.01) follows every conv, down and up
layer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, LengthMismatchError, ReadError, WriteError
from .volume import ProbVolume, Volume3

LEAKY_SLOPE = 0.01


@dataclass(frozen=True)
class NetConfig:
    levels: int = 5
    base_channels: int = 4
    kernel: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.levels < 3:
            raise ConfigError(f"levels must be >= 3, got {self.levels}")
        if self.base_channels < 2:
            raise ConfigError(f"base_channels must be >= 2, got {self.base_channels}")
        if self.kernel % 2 != 1:
            raise ConfigError(f"kernel must be odd, got {self.kernel}")

    def channels(self, level: int) -> int:
        """Channel width at a 1-based encoder level; doubles per level."""
        return self.base_channels * (1 << (level - 1))


@dataclass
class BranchOutputs:
    """Graph tensors of the four heads; all share the input's spatial dims."""

    p_lseg: ad.DiffTensor  # (2, d, h, w) softmax
    p_hseg: ad.DiffTensor  # (2, d, h, w) softmax
    r_lreg: ad.DiffTensor  # (1, d, h, w) tanh
    r_hreg: ad.DiffTensor  # (1, d, h, w) tanh

    def prob_low(self) -> ProbVolume:
        d = self.p_lseg.data
        return ProbVolume(d.shape[1:], d[0], d[1])

    def prob_high(self) -> ProbVolume:
        d = self.p_hseg.data
        return ProbVolume(d.shape[1:], d[0], d[1])

    def reg_low(self) -> np.ndarray:
        return self.r_lreg.data[0]

    def reg_high(self) -> np.ndarray:
        return self.r_hreg.data[0]


class Network:
    """Parameter store plus the wiring of encoder/decoders/heads."""

    def __init__(self, config: NetConfig):
        self.config = config
        self.params: dict[str, ad.DiffTensor] = {}
        self._init_params()

    # -- construction ------------------------------------------------------

    def _add_conv(self, rng, name: str, c_in: int, c_out: int, k: int) -> None:
        bound = np.sqrt(1.0 / (c_in * k**3))
        self.params[f"{name}_w"] = ad.parameter(rng.uniform(-bound, bound, (c_out, c_in, k, k, k)))
        self.params[f"{name}_b"] = ad.parameter(rng.uniform(-bound, bound, c_out))

    def _add_up(self, rng, name: str, c_in: int, c_out: int) -> None:
        bound = np.sqrt(1.0 / (c_in * 8))
        self.params[f"{name}_w"] = ad.parameter(rng.uniform(-bound, bound, (c_in, c_out, 2, 2, 2)))
        self.params[f"{name}_b"] = ad.parameter(rng.uniform(-bound, bound, c_out))

    def _init_params(self) -> None:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        k = cfg.kernel
        for i in range(1, cfg.levels + 1):
            c = cfg.channels(i)
            self._add_conv(rng, f"enc{i}", 1 if i == 1 else c, c, k)
            if i < cfg.levels:
                bound = np.sqrt(1.0 / (c * 8))
                self.params[f"down{i}_w"] = ad.parameter(
                    rng.uniform(-bound, bound, (cfg.channels(i + 1), c, 2, 2, 2))
                )
                self.params[f"down{i}_b"] = ad.parameter(
                    rng.uniform(-bound, bound, cfg.channels(i + 1))
                )
        for branch, top in (("h", cfg.levels), ("l", cfg.levels - 1)):
            for i in range(top, 1, -1):
                c = cfg.channels(i)
                self._add_conv(rng, f"{branch}dec{i}", c, c, k)
                self._add_up(rng, f"{branch}up{i}", c, cfg.channels(i - 1))
            c1 = cfg.channels(1)
            self._add_conv(rng, f"{branch}seg", c1, 2, 1)
            self._add_conv(rng, f"{branch}reg", c1, 1, 1)

    # -- helpers -----------------------------------------------------------

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _conv(self, name: str, x: ad.DiffTensor) -> ad.DiffTensor:
        return ad.conv3(x, self.params[f"{name}_w"], self.params[f"{name}_b"])

    def _act_conv(self, name: str, x: ad.DiffTensor) -> ad.DiffTensor:
        return ad.leaky_relu(self._conv(name, x), LEAKY_SLOPE)

    def _down(self, i: int, x: ad.DiffTensor) -> ad.DiffTensor:
        return ad.leaky_relu(
            ad.down2(x, self.params[f"down{i}_w"], self.params[f"down{i}_b"]), LEAKY_SLOPE
        )

    def _up(self, name: str, x: ad.DiffTensor) -> ad.DiffTensor:
        return ad.leaky_relu(
            ad.up2(x, self.params[f"{name}_w"], self.params[f"{name}_b"]), LEAKY_SLOPE
        )

    def _decode(self, branch: str, feats: list[ad.DiffTensor], top: int) -> tuple[ad.DiffTensor, ad.DiffTensor]:
        y = feats[top - 1]
        for i in range(top, 1, -1):
            t = self._act_conv(f"{branch}dec{i}", y)
            t = self._up(f"{branch}up{i}", t)
            y = ad.add(t, feats[i - 2])  # skip from the encoder ConvBlock output
        seg = ad.softmax_channels(self._conv(f"{branch}seg", y))
        reg = ad.tanh(self._conv(f"{branch}reg", y))
        return seg, reg


def build_dual_branch(cfg: NetConfig) -> Network:
    return Network(cfg)


def forward(net: Network, v: Volume3 | np.ndarray) -> BranchOutputs:
    """Run both branches; the returned tensors keep the graph alive for one
    backward pass."""
    data = v.data if isinstance(v, Volume3) else np.asarray(v)
    cfg = net.config
    stride = 1 << (cfg.levels - 1)
    if any(d % stride != 0 or d // stride < 1 for d in data.shape):
        raise ConfigError(
            f"input dims {data.shape} must be divisible by 2^(levels-1) = {stride}"
        )
    x = ad.constant(data[None].astype(np.float64))
    feats: list[ad.DiffTensor] = []
    cur = x
    for i in range(1, cfg.levels + 1):
        cur = net._act_conv(f"enc{i}", cur)
        feats.append(cur)
        if i < cfg.levels:
            cur = net._down(i, cur)
    p_hseg, r_hreg = net._decode("h", feats, cfg.levels)
    p_lseg, r_lreg = net._decode("l", feats, cfg.levels - 1)
    return BranchOutputs(p_lseg=p_lseg, p_hseg=p_hseg, r_lreg=r_lreg, r_hreg=r_hreg)


def backward_and_step(net: Network, loss: ad.DiffTensor, lr: float) -> Network:
    """Reverse sweep + plain SGD update w <- w - lr * grad; frees the graph."""
    ad.backward(loss)
    for p in net.params.values():
        if p.grad is not None:
            p.data -= lr * p.grad
            p.grad = None
    ad.free_graph(loss)
    return net


# ---------------------------------------------------------------------------
# checkpoints: one JSON header line, then parameters as raw little-endian
# float32 in header order (the .vvol payload convention)


def save_checkpoint(net: Network, path, epoch: int) -> None:
    names = sorted(net.params)
    header = {
        "format": "semivox-ckpt-1",
        "epoch": int(epoch),
        "config": {
            "levels": net.config.levels,
            "base_channels": net.config.base_channels,
            "kernel": net.config.kernel,
            "seed": net.config.seed,
        },
        "params": [{"name": n, "shape": list(net.params[n].data.shape)} for n in names],
    }
    payload = b"".join(
        np.ascontiguousarray(net.params[n].data, dtype="<f4").tobytes() for n in names
    )
    try:
        with open(path, "wb") as f:
            f.write(json.dumps(header).encode() + b"\n" + payload)
    except OSError as e:
        raise WriteError(f"cannot write checkpoint to {path}: {e}") from e


def load_checkpoint(path) -> tuple[Network, int]:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise ReadError(f"cannot read checkpoint from {path}: {e}") from e
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing checkpoint header line")
    try:
        header = json.loads(blob[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: bad checkpoint header: {e}") from e
    if header.get("format") != "semivox-ckpt-1":
        raise FormatError(f"{path}: unknown checkpoint format {header.get('format')!r}")
    net = Network(NetConfig(**header["config"]))
    if {p["name"] for p in header["params"]} != set(net.params):
        raise FormatError(f"{path}: parameter list does not match the declared config")
    payload = blob[nl + 1 :]
    expected = sum(int(np.prod(p["shape"])) for p in header["params"]) * 4
    if len(payload) != expected:
        raise LengthMismatchError(f"{path}: payload has {len(payload)} bytes, need {expected}")
    offset = 0
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        net.params[entry["name"]].data = arr.astype(np.float64).reshape(shape)
        offset += count * 4
    return net, int(header["epoch"])
