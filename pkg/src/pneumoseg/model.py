"""U-Net with a residual encoder: configuration, layers and assembly.

The encoder runs ``depth`` stages of residual blocks with 2x max pooling
between them, the decoder mirrors it with nearest-neighbor upsampling and
skip concatenations, and a 1x1 convolution plus sigmoid produces the
per-pixel probability map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    out_channels: int = 1
    depth: int = 4
    base_channels: int = 16
    blocks_per_stage: int = 2
    seed: int = 0

    def validate(self):
        if self.in_channels < 1:
            raise ValueError(f"in_channels must be >= 1, got {self.in_channels}")
        if self.out_channels < 1:
            raise ValueError(f"out_channels must be >= 1, got {self.out_channels}")
        if self.depth < 2:
            raise ValueError(f"depth must be >= 2, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.blocks_per_stage < 1:
            raise ValueError(f"blocks_per_stage must be >= 1, got {self.blocks_per_stage}")

    def stage_channels(self, i: int) -> int:
        return self.base_channels * (2 ** i)

    def to_lines(self) -> dict:
        return {
            "in_channels": str(self.in_channels),
            "out_channels": str(self.out_channels),
            "depth": str(self.depth),
            "base_channels": str(self.base_channels),
            "blocks_per_stage": str(self.blocks_per_stage),
            "seed": str(self.seed),
        }

    @classmethod
    def from_lines(cls, kv: dict) -> "ModelConfig":
        return cls(
            in_channels=int(kv["in_channels"]),
            out_channels=int(kv["out_channels"]),
            depth=int(kv["depth"]),
            base_channels=int(kv["base_channels"]),
            blocks_per_stage=int(kv["blocks_per_stage"]),
            seed=int(kv["seed"]),
        )


class Parameter:
    """A named trainable tensor; names are unique within one model."""

    def __init__(self, name: str, data: np.ndarray):
        if not name:
            raise ValueError("parameter name must be non-empty")
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Module:
    """Minimal layer base: tracks parameters, buffers and child modules."""

    def __init__(self):
        self._params: list[Parameter] = []
        self._buffers: list[tuple[str, np.ndarray]] = []
        self._children: list[Module] = []

    def _register(self, child: "Module") -> "Module":
        self._children.append(child)
        return child

    def parameters(self) -> list[Parameter]:
        out = list(self._params)
        for c in self._children:
            out.extend(c.parameters())
        return out

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        out = list(self._buffers)
        for c in self._children:
            out.extend(c.buffers())
        return out


class Conv2d(Module):
    """3x3/1x1 convolution layer with He fan-in init."""

    def __init__(self, name, in_ch, out_ch, kernel, rng, padding=0, bias=True):
        super().__init__()
        self.padding = padding
        fan_in = in_ch * kernel * kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(out_ch, in_ch, kernel, kernel))
        self.weight = Parameter(f"{name}.weight", w.astype(np.float32))
        self._params.append(self.weight)
        self.bias = None
        if bias:
            self.bias = Parameter(f"{name}.bias", np.zeros(out_ch, dtype=np.float32))
            self._params.append(self.bias)

    def forward(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight.tensor, None if self.bias is None else self.bias.tensor,
                         stride=1, padding=self.padding)


class BatchNorm2d(Module):
    def __init__(self, name, channels, momentum=0.1, eps=1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels, dtype=np.float32))
        self._params.extend([self.gamma, self.beta])
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self._buffers.extend([(f"{name}.running_mean", self.running_mean),
                              (f"{name}.running_var", self.running_var)])

    def forward(self, x: Tensor, training: bool) -> Tensor:
        return ad.batch_norm(x, self.gamma.tensor, self.beta.tensor,
                             self.running_mean, self.running_var,
                             training, self.momentum, self.eps)


class ResidualBlock(Module):
    """conv-bn-relu, conv-bn, additive shortcut (1x1 projection on channel
    change), final relu."""

    def __init__(self, name, in_ch, out_ch, rng):
        super().__init__()
        self.conv1 = self._register(Conv2d(f"{name}.conv1", in_ch, out_ch, 3, rng, padding=1, bias=False))
        self.bn1 = self._register(BatchNorm2d(f"{name}.bn1", out_ch))
        self.conv2 = self._register(Conv2d(f"{name}.conv2", out_ch, out_ch, 3, rng, padding=1, bias=False))
        self.bn2 = self._register(BatchNorm2d(f"{name}.bn2", out_ch))
        self.shortcut = None
        if in_ch != out_ch:
            self.shortcut = self._register(Conv2d(f"{name}.shortcut", in_ch, out_ch, 1, rng, bias=False))

    def forward(self, x: Tensor, training: bool) -> Tensor:
        out = ad.relu(self.bn1.forward(self.conv1.forward(x), training))
        out = self.bn2.forward(self.conv2.forward(out), training)
        identity = x if self.shortcut is None else self.shortcut.forward(x)
        return ad.relu(ad.add(out, identity))


class Stage(Module):
    def __init__(self, name, in_ch, out_ch, blocks, rng):
        super().__init__()
        self.blocks = []
        ch = in_ch
        for b in range(blocks):
            blk = self._register(ResidualBlock(f"{name}.block{b}", ch, out_ch, rng))
            self.blocks.append(blk)
            ch = out_ch

    def forward(self, x: Tensor, training: bool) -> Tensor:
        for blk in self.blocks:
            x = blk.forward(x, training)
        return x


class UNet(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)

        self.enc_stages = []
        ch = config.in_channels
        for i in range(config.depth):
            out_ch = config.stage_channels(i)
            self.enc_stages.append(self._register(
                Stage(f"enc{i}", ch, out_ch, config.blocks_per_stage, rng)))
            ch = out_ch

        bottleneck_ch = config.stage_channels(config.depth)
        self.bottleneck = self._register(
            Stage("bottleneck", ch, bottleneck_ch, config.blocks_per_stage, rng))

        self.dec_stages = []
        ch = bottleneck_ch
        for i in reversed(range(config.depth)):
            out_ch = config.stage_channels(i)
            self.dec_stages.append(self._register(
                Stage(f"dec{i}", ch + out_ch, out_ch, config.blocks_per_stage, rng)))
            ch = out_ch

        self.head = self._register(
            Conv2d("head", ch, config.out_channels, 1, rng, bias=True))

    def forward(self, batch: Tensor, mode: str = "train") -> Tensor:
        """Probability map of the batch; spatial shape is preserved."""
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        training = mode == "train"
        if batch.data.ndim != 4 or batch.data.shape[1] != self.config.in_channels:
            raise ValueError(
                f"expected Nx{self.config.in_channels}xHxW input, got shape {batch.data.shape}")
        h, w = batch.data.shape[2:]
        div = 2 ** self.config.depth
        if h % div or w % div:
            raise ValueError(f"spatial dims {h}x{w} not divisible by 2^depth = {div}")

        skips = []
        x = batch
        for stage in self.enc_stages:
            x = stage.forward(x, training)
            skips.append(x)
            x = ad.max_pool2(x)
        x = self.bottleneck.forward(x, training)
        for stage, skip in zip(self.dec_stages, reversed(skips)):
            x = ad.upsample2_nearest(x)
            x = ad.concat_channels(x, skip)
            x = stage.forward(x, training)
        return ad.sigmoid(self.head.forward(x))

    def named_parameters(self) -> dict[str, Parameter]:
        out = {}
        for p in self.parameters():
            if p.name in out:
                raise ValueError(f"duplicate parameter name {p.name}")
            out[p.name] = p
        return out

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        """Parameters plus batch-norm running stats, in construction order."""
        arrays = [(p.name, p.tensor.data) for p in self.parameters()]
        arrays.extend(self.buffers())
        return arrays

    def state_snapshot(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.named_arrays()}

    def load_snapshot(self, snapshot: dict[str, np.ndarray]):
        for name, arr in self.named_arrays():
            arr[...] = snapshot[name]


def build(config: ModelConfig) -> UNet:
    return UNet(config)


def count_params(model: UNet) -> int:
    """Total element count over trainable parameters (running stats excluded)."""
    return sum(p.tensor.data.size for p in model.parameters())
