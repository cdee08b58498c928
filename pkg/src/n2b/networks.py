"""The two networks: a small U-Net denoiser and a three-layer noise extractor.

Parameters are named so checkpoints can address them individually. Weight
init is uniform with fan-in scaling (leaky-ReLU gain), fully seeded.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

LEAKY_SLOPE = 0.1


def _init_conv(cin: int, cout: int, k: int, rng: np.random.Generator,
               dtype=np.float32) -> tuple[Tensor, Tensor]:
    fan_in = cin * k * k
    gain = np.sqrt(2.0 / (1.0 + LEAKY_SLOPE ** 2))
    bound = gain * np.sqrt(3.0 / fan_in)
    weight = rng.uniform(-bound, bound, size=(cout, cin, k, k)).astype(dtype)
    bias = np.zeros(cout, dtype=dtype)
    return (Tensor(weight, requires_grad=True), Tensor(bias, requires_grad=True))


class ConvLayer:
    """3x3 (or kxk) convolution with 'same' padding."""

    def __init__(self, cin, cout, k, rng, dtype=np.float32):
        self.cin, self.cout, self.k = cin, cout, k
        self.weight, self.bias = _init_conv(cin, cout, k, rng, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=1, padding=self.k // 2)

    def named_params(self, prefix):
        return [(f"{prefix}.weight", self.weight), (f"{prefix}.bias", self.bias)]


class _Net:
    """Shared parameter bookkeeping for both networks."""

    def __init__(self):
        self._layers: list[tuple[str, ConvLayer]] = []

    def _add(self, name, layer):
        self._layers.append((name, layer))
        return layer

    def named_params(self):
        out = []
        for name, layer in self._layers:
            out.extend(layer.named_params(name))
        return out

    def params(self):
        return [p for _, p in self.named_params()]

    def param_count(self):
        return sum(p.data.size for p in self.params())

    def load_state(self, state: dict):
        for name, p in self.named_params():
            src = state[name]
            if src.shape != p.data.shape:
                raise ValueError(f"parameter {name}: shape {src.shape} != {p.data.shape}")
            p.data = src.astype(p.data.dtype)

    def state(self) -> dict:
        return {name: p.data for name, p in self.named_params()}


class DnNet(_Net):
    """U-Net denoiser: maps a noisy NCHW tensor to a same-shape image estimate.

    `depth` encoder levels of two 3x3 convs + leaky ReLU, 2x2 max pooling
    between levels, nearest-neighbour upsampling and skip concatenation on
    the way back up, and a final 3x3 projection with no activation.
    """

    def __init__(self, channels_in=1, depth=3, base_width=32, seed=0,
                 dtype=np.float32):
        super().__init__()
        if depth < 1:
            raise ValueError("depth must be >= 1")
        self.channels_in = channels_in
        self.depth = depth
        self.base_width = base_width
        rng = np.random.default_rng(seed)
        widths = [base_width * (2 ** i) for i in range(depth)]

        self.enc = []
        cin = channels_in
        for i, w in enumerate(widths):
            block = (self._add(f"enc{i}.conv1", ConvLayer(cin, w, 3, rng, dtype)),
                     self._add(f"enc{i}.conv2", ConvLayer(w, w, 3, rng, dtype)))
            self.enc.append(block)
            cin = w

        self.dec = []
        for i in range(depth - 2, -1, -1):
            w = widths[i]
            block = (self._add(f"dec{i}.up", ConvLayer(widths[i + 1], w, 3, rng, dtype)),
                     self._add(f"dec{i}.conv1", ConvLayer(2 * w, w, 3, rng, dtype)),
                     self._add(f"dec{i}.conv2", ConvLayer(w, w, 3, rng, dtype)))
            self.dec.append(block)

        self.head = self._add("head", ConvLayer(widths[0], channels_in, 3, rng, dtype))

    def forward(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        div = 2 ** (self.depth - 1)
        if h % div or w % div:
            raise T.ShapeError(
                f"DnNet depth {self.depth} needs H and W divisible by {div}, got {h}x{w}")
        skips = []
        cur = x
        for i, (c1, c2) in enumerate(self.enc):
            cur = T.leaky_relu(c1(cur), LEAKY_SLOPE)
            cur = T.leaky_relu(c2(cur), LEAKY_SLOPE)
            if i < self.depth - 1:
                skips.append(cur)
                cur = T.maxpool2(cur)
        for (up, c1, c2), skip in zip(self.dec, reversed(skips)):
            cur = T.leaky_relu(up(T.upsample2_nearest(cur)), LEAKY_SLOPE)
            cur = T.concat_channels(skip, cur)
            cur = T.leaky_relu(c1(cur), LEAKY_SLOPE)
            cur = T.leaky_relu(c2(cur), LEAKY_SLOPE)
        return self.head(cur)

    __call__ = forward


class NENet(_Net):
    """Noise extractor: three 3x3 convs, widths in -> 32 -> 32 -> in."""

    WIDTH = 32

    def __init__(self, channels_in=1, seed=0, dtype=np.float32):
        super().__init__()
        self.channels_in = channels_in
        rng = np.random.default_rng(seed)
        w = self.WIDTH
        self.conv1 = self._add("conv1", ConvLayer(channels_in, w, 3, rng, dtype))
        self.conv2 = self._add("conv2", ConvLayer(w, w, 3, rng, dtype))
        self.conv3 = self._add("conv3", ConvLayer(w, channels_in, 3, rng, dtype))

    def forward(self, x: Tensor) -> Tensor:
        h = T.leaky_relu(self.conv1(x), LEAKY_SLOPE)
        h = T.leaky_relu(self.conv2(h), LEAKY_SLOPE)
        return self.conv3(h)

    __call__ = forward


def build_dnnet(channels_in=1, depth=3, base_width=32, seed=0) -> DnNet:
    return DnNet(channels_in, depth, base_width, seed)


def build_nenet(channels_in=1, seed=0) -> NENet:
    return NENet(channels_in, seed)
