"""ConvNet architecture, bottom-up pass, activation patterns, and scores.

The network is a stack of valid (no padding) strided convolutions with
ReLU nonlinearities.  The bottom-up pass records, for every layer, both
the feature maps and the binary activation pattern (1 where the
pre-activation is strictly positive).  The feature value always equals
``delta * pre_activation`` exactly, which is the factorization the
top-down linearization in :mod:`convebm.linearize` relies on.

Two scoring modes exist: ``conv_sum`` sums every entry of the top-layer
feature maps (the single-density model used for sampling and training),
and ``category_heads`` forms one weighted score per category from 1x1
top-layer maps (used by the classification posterior and the
category-model checks in :mod:`convebm.oracle`).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .tensor import SeededRng, Tensor3

__all__ = [
    "CONV_SUM",
    "CATEGORY_HEADS",
    "LayerSpec",
    "Network",
    "ActivationPattern",
    "forward",
    "score_conv",
    "score_category",
    "softmax_posterior",
    "init_network",
    "conv_output_extent",
]

CONV_SUM = "conv_sum"
CATEGORY_HEADS = "category_heads"


def conv_output_extent(size: int, kernel: int, stride: int) -> int:
    """Valid-convolution output extent: floor((size - kernel) / stride) + 1."""
    return (size - kernel) // stride + 1


@dataclass
class LayerSpec:
    """One convolutional layer: weights (k, i, ky, kx) and biases (k,)."""

    num_filters: int
    kernel_h: int
    kernel_w: int
    stride: int
    weights: np.ndarray
    biases: np.ndarray

    def validate(self, in_channels: int) -> None:
        expected = (self.num_filters, in_channels, self.kernel_h, self.kernel_w)
        if self.weights.shape != expected:
            raise ValueError(
                f"layer weights shape {self.weights.shape} != expected {expected}"
            )
        if self.biases.shape != (self.num_filters,):
            raise ValueError(
                f"layer biases shape {self.biases.shape} != ({self.num_filters},)"
            )
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters contain non-finite entries")


@dataclass
class Network:
    """Layer stack plus top-mode configuration and reference variance.

    ``head_weights`` (C, num_top_filters) and ``head_biases`` (C,) are
    only present in ``category_heads`` mode.  ``sigma_sq`` is the
    variance of the Gaussian reference distribution (default 1).
    """

    input_channels: int
    layers: list = field(default_factory=list)
    top_mode: str = CONV_SUM
    head_weights: Optional[np.ndarray] = None
    head_biases: Optional[np.ndarray] = None
    sigma_sq: float = 1.0

    def validate(self, input_hw: Optional[tuple] = None) -> None:
        if self.top_mode not in (CONV_SUM, CATEGORY_HEADS):
            raise ValueError(f"unknown top_mode {self.top_mode!r}")
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")
        c = self.input_channels
        for layer in self.layers:
            layer.validate(c)
            c = layer.num_filters
        if self.top_mode == CATEGORY_HEADS:
            if self.head_weights is None or self.head_biases is None:
                raise ValueError("category_heads mode requires head weights and biases")
            if self.head_weights.shape[1] != c:
                raise ValueError(
                    f"head weights expect {self.head_weights.shape[1]} top filters, "
                    f"network has {c}"
                )
            if self.head_biases.shape != (self.head_weights.shape[0],):
                raise ValueError("head biases length must match number of categories")
        if input_hw is not None:
            self.output_shapes(input_hw)

    def output_shapes(self, input_hw: tuple) -> list:
        """Spatial (h, w) of every layer's output; raises if any extent < 1."""
        h, w = input_hw
        shapes = []
        for i, layer in enumerate(self.layers):
            h = conv_output_extent(h, layer.kernel_h, layer.stride)
            w = conv_output_extent(w, layer.kernel_w, layer.stride)
            if h < 1 or w < 1:
                raise ValueError(
                    f"layer {i + 1} output extent {h}x{w} < 1 for input {input_hw}"
                )
            shapes.append((h, w))
        return shapes

    def num_params(self) -> int:
        n = sum(layer.weights.size + layer.biases.size for layer in self.layers)
        if self.top_mode == CATEGORY_HEADS:
            n += self.head_weights.size + self.head_biases.size
        return n

    def copy(self) -> "Network":
        return replace(
            self,
            layers=[
                replace(l, weights=l.weights.copy(), biases=l.biases.copy())
                for l in self.layers
            ],
            head_weights=None if self.head_weights is None else self.head_weights.copy(),
            head_biases=None if self.head_biases is None else self.head_biases.copy(),
        )

    def prefix(self, num_layers: int) -> "Network":
        """Sub-network of the first ``num_layers`` layers with a conv_sum top.

        Layer arrays are shared, not copied, so updates through the
        prefix are visible in the full network.
        """
        if not 1 <= num_layers <= len(self.layers):
            raise ValueError(f"prefix length {num_layers} out of range")
        return Network(
            input_channels=self.input_channels,
            layers=self.layers[:num_layers],
            top_mode=CONV_SUM,
            sigma_sq=self.sigma_sq,
        )


@dataclass
class ActivationPattern:
    """Binary gate maps per layer plus the input shape they were computed on.

    ``maps[l]`` holds the {0, 1} gates of layer l+1 and mirrors that
    layer's feature-map shape.  The input shape makes the pattern
    self-contained for the top-down pass.
    """

    input_shape: tuple
    maps: list


def _windows(x: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided view of all valid (kh, kw) windows: (c, oh, ow, kh, kw)."""
    v = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    return v[:, ::stride, ::stride]


def forward(net: Network, image: Tensor3):
    """Bottom-up pass.

    Returns ``(fmaps, pattern)`` where ``fmaps[0]`` is the input image,
    ``fmaps[l]`` the ReLU feature maps of layer l, and ``pattern`` the
    activation gates.  For every layer, ``fmaps[l] == pattern.maps[l-1]
    * pre_activation`` holds exactly.
    """
    if image.ndim != 3 or image.shape[0] != net.input_channels:
        raise ValueError(
            f"image shape {image.shape} incompatible with "
            f"{net.input_channels} input channels"
        )
    net.output_shapes(image.shape[1:])
    fmaps = [image]
    gates = []
    x = image
    for layer in net.layers:
        win = _windows(x, layer.kernel_h, layer.kernel_w, layer.stride)
        pre = np.einsum("kiuv,ihwuv->khw", layer.weights, win)
        pre += layer.biases[:, np.newaxis, np.newaxis]
        delta = (pre > 0).astype(np.float64)
        x = delta * pre
        gates.append(delta)
        fmaps.append(x)
    return fmaps, ActivationPattern(input_shape=image.shape, maps=gates)


def score_conv(net: Network, image: Tensor3) -> float:
    """Sum of all top-layer feature-map entries (single-density score)."""
    if net.top_mode != CONV_SUM:
        raise ValueError(f"score_conv requires conv_sum top mode, got {net.top_mode!r}")
    fmaps, _ = forward(net, image)
    return float(fmaps[-1].sum())


def score_category(net: Network, image: Tensor3, c: int) -> float:
    """Category score: weighted sum of the 1x1 top-layer responses."""
    if net.top_mode != CATEGORY_HEADS:
        raise ValueError("score_category requires category_heads top mode")
    fmaps, _ = forward(net, image)
    top = fmaps[-1]
    if top.shape[1:] != (1, 1):
        raise ValueError(f"top-layer maps must be 1x1, got {top.shape[1:]}")
    return float(np.dot(net.head_weights[c], top[:, 0, 0]))


def softmax_posterior(scores: Sequence[float], biases: Sequence[float]) -> np.ndarray:
    """Posterior over categories: entry c proportional to exp(score_c + bias_c).

    Computed with max-subtraction so large scores cannot overflow.
    """
    s = np.asarray(scores, dtype=np.float64)
    b = np.asarray(biases, dtype=np.float64)
    if s.shape != b.shape or s.ndim != 1 or s.size < 1:
        raise ValueError(f"scores and biases must be 1-D of equal length")
    z = s + b
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


def init_network(
    input_channels: int,
    layer_defs: Sequence[tuple],
    init_std: float,
    rng: SeededRng,
    top_mode: str = CONV_SUM,
    num_categories: int = 0,
    sigma_sq: float = 1.0,
    input_hw: Optional[tuple] = None,
) -> Network:
    """Build a network with N(0, init_std^2) weights and zero biases.

    ``layer_defs`` is a sequence of ``(num_filters, kernel_h, kernel_w,
    stride)`` tuples.  ``init_std = 0`` gives all-zero weights.  When
    ``input_hw`` is provided the layer chain is validated against it.
    """
    if init_std < 0:
        raise ValueError("init_std must be >= 0")
    layers = []
    c = input_channels
    for nf, kh, kw, stride in layer_defs:
        shape = (nf, c, kh, kw)
        if init_std > 0:
            w = rng.normal(shape, init_std)
        else:
            w = np.zeros(shape, dtype=np.float64)
        layers.append(
            LayerSpec(
                num_filters=nf,
                kernel_h=kh,
                kernel_w=kw,
                stride=stride,
                weights=w,
                biases=np.zeros(nf, dtype=np.float64),
            )
        )
        c = nf
    head_w = head_b = None
    if top_mode == CATEGORY_HEADS:
        if num_categories < 1:
            raise ValueError("category_heads mode needs num_categories >= 1")
        if init_std > 0:
            head_w = rng.normal((num_categories, c), init_std)
        else:
            head_w = np.zeros((num_categories, c), dtype=np.float64)
        head_b = np.zeros(num_categories, dtype=np.float64)
    net = Network(
        input_channels=input_channels,
        layers=layers,
        top_mode=top_mode,
        head_weights=head_w,
        head_biases=head_b,
        sigma_sq=sigma_sq,
    )
    net.validate(input_hw)
    return net
