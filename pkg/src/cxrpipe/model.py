"""Small pre-activation residual network with a 15-way sigmoid head.

Global average pooling before the classifier makes the weights independent of
the input side length, so one model can be fine-tuned at 16, 32, 64 ... px.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import ShapeError, ValidationError
from .labels import NUM_CLASSES

MIN_SIDE = 16


@dataclass(frozen=True)
class ModelConfig:
    stem_channels: int = 8
    stage_widths: tuple[int, ...] = (8, 16, 32)
    blocks_per_stage: int = 2
    num_classes: int = NUM_CLASSES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))
        if self.num_classes != NUM_CLASSES:
            raise ValidationError(f"num_classes must be {NUM_CLASSES}, got {self.num_classes}")
        if self.stem_channels < 1 or self.blocks_per_stage < 1 or not self.stage_widths:
            raise ValidationError("stem_channels, blocks_per_stage and stage_widths must be positive")
        if any(w < 1 for w in self.stage_widths):
            raise ValidationError(f"stage widths must be positive: {self.stage_widths}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage_widths"] = list(self.stage_widths)
        return d


def _he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)


class Conv:
    def __init__(self, name: str, cin: int, cout: int, k: int, stride: int,
                 rng: np.random.Generator):
        self.weight = Parameter(_he_normal(rng, (cout, cin, k, k), cin * k * k), f"{name}.weight")
        self.stride = stride
        self.pad = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, None, self.stride, self.pad)

    def parameters(self) -> list[Parameter]:
        return [self.weight]


class BatchNorm:
    def __init__(self, name: str, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.name = name
        self.gamma = Parameter(np.ones(channels), f"{name}.gamma")
        self.beta = Parameter(np.zeros(channels), f"{name}.beta")
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ad.batchnorm2d(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              self.eps, train, self.momentum)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> dict[str, np.ndarray]:
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}


class ResidualBlock:
    """``y = x + F(x)`` with F = conv(relu(bn(conv(relu(bn(x)))))).

    When the block changes resolution or width, the shortcut becomes a 1x1
    strided projection of the pre-activated input.
    """

    def __init__(self, name: str, cin: int, cout: int, stride: int, rng: np.random.Generator):
        self.bn1 = BatchNorm(f"{name}.bn1", cin)
        self.conv1 = Conv(f"{name}.conv1", cin, cout, 3, stride, rng)
        self.bn2 = BatchNorm(f"{name}.bn2", cout)
        self.conv2 = Conv(f"{name}.conv2", cout, cout, 3, 1, rng)
        self.proj = Conv(f"{name}.proj", cin, cout, 1, stride, rng) if (stride != 1 or cin != cout) else None

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        h = ad.relu(self.bn1(x, train))
        shortcut = self.proj(h) if self.proj is not None else x
        out = self.conv1(h)
        out = self.conv2(ad.relu(self.bn2(out, train)))
        return ad.add(out, shortcut)

    def parameters(self) -> list[Parameter]:
        params = self.bn1.parameters() + self.conv1.parameters() + self.bn2.parameters() + self.conv2.parameters()
        if self.proj is not None:
            params += self.proj.parameters()
        return params

    def buffers(self) -> dict[str, np.ndarray]:
        return {**self.bn1.buffers(), **self.bn2.buffers()}


class ResNet:
    def __init__(self, config: ModelConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.stem = Conv("stem", 1, config.stem_channels, 3, 1, rng)
        self.blocks: list[ResidualBlock] = []
        cin = config.stem_channels
        for s, width in enumerate(config.stage_widths):
            for b in range(config.blocks_per_stage):
                stride = 2 if (s > 0 and b == 0) else 1
                self.blocks.append(ResidualBlock(f"stage{s + 1}.block{b}", cin, width, stride, rng))
                cin = width
        self.head_bn = BatchNorm("head.bn", cin)
        self.fc_weight = Parameter(_he_normal(rng, (config.num_classes, cin), cin), "head.fc.weight")
        self.fc_bias = Parameter(np.zeros(config.num_classes), "head.fc.bias")

    def parameters(self) -> list[Parameter]:
        params = self.stem.parameters()
        for block in self.blocks:
            params += block.parameters()
        return params + self.head_bn.parameters() + [self.fc_weight, self.fc_bias]

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def buffers(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for block in self.blocks:
            out.update(block.buffers())
        out.update(self.head_bn.buffers())
        return out

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, batch, train: bool = False) -> Tensor:
        """Map ``(B, 1, H, W)`` images to ``(B, 15)`` logits."""
        x = ad.as_tensor(batch)
        if x.data.ndim != 4 or x.shape[1] != 1:
            raise ShapeError("forward", "expected a (B, 1, H, W) batch", batch=x.shape)
        H, W = x.shape[2], x.shape[3]
        if H < MIN_SIDE or W < MIN_SIDE:
            raise ShapeError("forward", f"input sides must be at least {MIN_SIDE}", H=H, W=W)
        h = self.stem(x)
        for block in self.blocks:
            h = block(h, train)
        h = ad.relu(self.head_bn(h, train))
        return ad.linear(ad.global_avg_pool(h), self.fc_weight, self.fc_bias)

    __call__ = forward

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every parameter and BN statistic keyed by name, in a stable order."""
        state = {name: p.data for name, p in self.named_parameters().items()}
        state.update(self.buffers())
        return state


def build_model(config: ModelConfig | None = None) -> ResNet:
    return ResNet(config or ModelConfig())


def forward(model: ResNet, batch, train: bool = False) -> Tensor:
    return model.forward(batch, train)


def predict_probs(model: ResNet, batch) -> np.ndarray:
    """Eval-mode sigmoid probabilities, shape ``(B, 15)``."""
    return ad.sigmoid(model.forward(batch, train=False)).data
