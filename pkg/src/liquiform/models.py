"""The three network architectures.

build_rectification: U-Net that maps a distorted image to a coarse
restoration.  Four encoder stages (two 3x3 conv+BN+ReLU, then a stride-2
reduction conv) double the channel width up to a 512 cap and reach 1/16
scale; four decoder stages bilinearly upsample, concatenate the matching
encoder map and quarter the concatenated width with two convs; a 1x1 conv
plus sigmoid emits the image.

build_refinement: residual net that sharpens the coarse restoration.  A
7x7 stem, two stride-2 downsample blocks (channels x2 each), five
residual blocks at 4x base width, two stride-2 deconv upsample blocks
(channels /2 each), a 3x3 conv, and a 7x7 head whose tanh output is added
to the input (global skip) and clamped to [0,1].  BN+PReLU throughout.

build_discriminator: global real/fake critic.  Eight 3x3 convs with
LeakyReLU(0.2) (BN from the second on), strides 2 at layers 2/4/6 for a
net 1/8 scale at 8x base channels, then dense -> 16*base, LeakyReLU,
dense -> 1, sigmoid.

Weights are Glorot-uniform from a seeded generator, biases zero, BN gamma
1 / beta 0, PReLU slopes 0.25, so construction is reproducible.  The one
exception is the refinement head conv, which starts at zero so the
untrained refiner passes its input through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass(frozen=True)
class NetworkConfig:
    input_channels: int = 3
    base_channels: int = 64
    image_size: tuple[int, int] = (224, 224)
    dtype: type = np.float32

    def __post_init__(self):
        if self.input_channels not in (1, 3):
            raise ValueError(f"input_channels must be 1 or 3, got {self.input_channels}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        h, w = self.image_size
        if h < 2 or w < 2:
            raise ValueError(f"image_size too small: {self.image_size}")


class Network:
    """Named parameters, BN running states and a forward function."""

    def __init__(self, name: str, config: NetworkConfig):
        self.name = name
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.bn_states: dict[str, T.BatchNormState] = {}
        self._forward: Optional[Callable] = None

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(value.astype(self.config.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def add_bn_state(self, name: str, channels: int) -> T.BatchNormState:
        if name in self.bn_states:
            raise ValueError(f"duplicate BN state name {name!r}")
        st = T.BatchNormState(channels, dtype=self.config.dtype)
        self.bn_states[name] = st
        return st

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return self._forward(x, train)

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def set_trainable(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class _Conv:
    def __init__(self, net: Network, rng, name: str, c_in: int, c_out: int,
                 k: int, stride: int = 1):
        self.stride = stride
        self.padding = k // 2  # same-size at stride 1, floor(n/s) at stride 2
        w = _glorot(rng, (c_out, c_in, k, k), c_in * k * k, c_out * k * k)
        self.w = net.add_param(f"{name}.w", w)
        self.b = net.add_param(f"{name}.b", np.zeros(c_out))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.conv2d(x, self.w, self.b, stride=self.stride, padding=self.padding)


class _Deconv:
    """Stride-2 transposed conv doubling the spatial extent (even sizes)."""

    def __init__(self, net: Network, rng, name: str, c_in: int, c_out: int, k: int):
        w = _glorot(rng, (c_in, c_out, k, k), c_in * k * k, c_out * k * k)
        self.w = net.add_param(f"{name}.w", w)
        self.b = net.add_param(f"{name}.b", np.zeros(c_out))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.conv2d_transpose(x, self.w, self.b, stride=2, padding=1,
                                  output_padding=1)


class _BN:
    def __init__(self, net: Network, name: str, channels: int):
        self.gamma = net.add_param(f"{name}.gamma", np.ones(channels))
        self.beta = net.add_param(f"{name}.beta", np.zeros(channels))
        self.state = net.add_bn_state(name, channels)

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.state, train=train)


class _PReLU:
    def __init__(self, net: Network, name: str, channels: int):
        self.slope = net.add_param(f"{name}.slope", np.full(channels, 0.25))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.prelu(x, self.slope)


class _Dense:
    def __init__(self, net: Network, rng, name: str, d_in: int, d_out: int):
        w = _glorot(rng, (d_in, d_out), d_in, d_out)
        self.w = net.add_param(f"{name}.w", w)
        self.b = net.add_param(f"{name}.b", np.zeros(d_out))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return T.dense(x, self.w, self.b)


def _require_divisible(cfg: NetworkConfig, factor: int, which: str) -> None:
    h, w = cfg.image_size
    if h % factor or w % factor:
        raise ValueError(
            f"{which} needs image_size divisible by {factor}, got {cfg.image_size}")


def build_rectification(cfg: NetworkConfig, seed: int = 0) -> Network:
    _require_divisible(cfg, 16, "rectification network")
    net = Network("rectification", cfg)
    rng = np.random.default_rng(seed)
    base = cfg.base_channels
    widths = [min(512, base * (2 ** i)) for i in range(4)]

    enc = []
    c_in = cfg.input_channels
    for i, ch in enumerate(widths, start=1):
        conv1 = _Conv(net, rng, f"enc{i}.conv1", c_in, ch, 3)
        bn1 = _BN(net, f"enc{i}.bn1", ch)
        conv2 = _Conv(net, rng, f"enc{i}.conv2", ch, ch, 3)
        bn2 = _BN(net, f"enc{i}.bn2", ch)
        down = _Conv(net, rng, f"enc{i}.down", ch, ch, 3, stride=2)
        bn3 = _BN(net, f"enc{i}.bn3", ch)
        enc.append((conv1, bn1, conv2, bn2, down, bn3))
        c_in = ch

    dec = []
    c_in = widths[-1]
    for i, skip_ch in enumerate(reversed(widths), start=1):
        cat = c_in + skip_ch
        ch = cat // 4
        conv1 = _Conv(net, rng, f"dec{i}.conv1", cat, ch, 3)
        bn1 = _BN(net, f"dec{i}.bn1", ch)
        conv2 = _Conv(net, rng, f"dec{i}.conv2", ch, ch, 3)
        bn2 = _BN(net, f"dec{i}.bn2", ch)
        dec.append((conv1, bn1, conv2, bn2))
        c_in = ch

    out_conv = _Conv(net, rng, "out.conv", c_in, cfg.input_channels, 1)

    def forward(x: Tensor, train: bool) -> Tensor:
        skips = []
        h = x
        for conv1, bn1, conv2, bn2, down, bn3 in enc:
            h = T.relu(bn1(conv1(h, train), train))
            h = T.relu(bn2(conv2(h, train), train))
            skips.append(h)
            h = T.relu(bn3(down(h, train), train))
        for (conv1, bn1, conv2, bn2), skip in zip(dec, reversed(skips)):
            h = T.bilinear_upsample(h, 2)
            h = T.concat_channels(h, skip)
            h = T.relu(bn1(conv1(h, train), train))
            h = T.relu(bn2(conv2(h, train), train))
        return T.sigmoid(out_conv(h, train))

    net._forward = forward
    return net


def build_refinement(cfg: NetworkConfig, seed: int = 0) -> Network:
    _require_divisible(cfg, 4, "refinement network")
    net = Network("refinement", cfg)
    rng = np.random.default_rng(seed)
    base = cfg.base_channels

    stem = _Conv(net, rng, "stem.conv", cfg.input_channels, base, 7)
    stem_bn = _BN(net, "stem.bn", base)
    stem_act = _PReLU(net, "stem.act", base)

    downs = []
    c = base
    for i in range(1, 3):
        conv = _Conv(net, rng, f"down{i}.conv", c, 2 * c, 3, stride=2)
        bn = _BN(net, f"down{i}.bn", 2 * c)
        act = _PReLU(net, f"down{i}.act", 2 * c)
        downs.append((conv, bn, act))
        c *= 2

    res = []
    for i in range(1, 6):
        conv1 = _Conv(net, rng, f"res{i}.conv1", c, c, 3)
        bn1 = _BN(net, f"res{i}.bn1", c)
        act = _PReLU(net, f"res{i}.act", c)
        conv2 = _Conv(net, rng, f"res{i}.conv2", c, c, 3)
        bn2 = _BN(net, f"res{i}.bn2", c)
        res.append((conv1, bn1, act, conv2, bn2))

    ups = []
    for i in range(1, 3):
        deconv = _Deconv(net, rng, f"up{i}.deconv", c, c // 2, 3)
        bn = _BN(net, f"up{i}.bn", c // 2)
        act = _PReLU(net, f"up{i}.act", c // 2)
        ups.append((deconv, bn, act))
        c //= 2

    tail = _Conv(net, rng, "tail.conv", c, c, 3)
    tail_bn = _BN(net, "tail.bn", c)
    tail_act = _PReLU(net, "tail.act", c)
    head = _Conv(net, rng, "head.conv", c, cfg.input_channels, 7)
    head.w.data[...] = 0.0  # untrained refiner must pass its input through unchanged

    def forward(x: Tensor, train: bool) -> Tensor:
        h = stem_act(stem_bn(stem(x, train), train), train)
        for conv, bn, act in downs:
            h = act(bn(conv(h, train), train), train)
        for conv1, bn1, act, conv2, bn2 in res:
            r = bn2(conv2(act(bn1(conv1(h, train), train), train), train), train)
            h = T.add(h, r)
        for deconv, bn, act in ups:
            h = act(bn(deconv(h, train), train), train)
        h = tail_act(tail_bn(tail(h, train), train), train)
        residual = T.tanh(head(h, train))
        return T.clamp(T.add(x, residual), 0.0, 1.0)

    net._forward = forward
    return net


def build_discriminator(cfg: NetworkConfig, seed: int = 0) -> Network:
    _require_divisible(cfg, 8, "discriminator")
    net = Network("discriminator", cfg)
    rng = np.random.default_rng(seed)
    base = cfg.base_channels
    widths = [base, base, 2 * base, 2 * base, 4 * base, 4 * base, 8 * base, 8 * base]
    strides = [1, 2, 1, 2, 1, 2, 1, 1]

    layers = []
    c_in = cfg.input_channels
    for i, (ch, s) in enumerate(zip(widths, strides), start=1):
        conv = _Conv(net, rng, f"conv{i}", c_in, ch, 3, stride=s)
        bn = _BN(net, f"bn{i}", ch) if i >= 2 else None
        layers.append((conv, bn))
        c_in = ch

    h, w = cfg.image_size
    flat = widths[-1] * (h // 8) * (w // 8)
    dense1 = _Dense(net, rng, "dense1", flat, 16 * base)
    dense2 = _Dense(net, rng, "dense2", 16 * base, 1)

    def forward(x: Tensor, train: bool) -> Tensor:
        h = x
        for conv, bn in layers:
            h = conv(h, train)
            if bn is not None:
                h = bn(h, train)
            h = T.leaky_relu(h, 0.2)
        h = T.leaky_relu(dense1(T.flatten(h), train), 0.2)
        return T.sigmoid(dense2(h, train))

    net._forward = forward
    return net
