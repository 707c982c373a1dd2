"""Single-layer whole-patch model small enough to enumerate exhaustively.

Each of the K filters covers the entire patch domain, so the piece
structure of image space is just the sign pattern of K inner products
and all 2^K pieces can be listed.  The mean of each piece's Gaussian is
``sigma^2 * sum_k delta_k w_k``; a mean that lies inside its own piece
is an exact fixed point of the encode/decode round trip.  This module
is the ground-truth oracle for the deep model's piecewise-Gaussian and
mode-reconstruction properties.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .net import CONV_SUM, LayerSpec, Network
from .tensor import Tensor3, inner_product, sq_norm

__all__ = [
    "PrototypeModel",
    "proto_activation",
    "proto_mean",
    "proto_score",
    "proto_energy",
    "enumerate_pieces",
    "as_network",
]

MAX_ENUM_FILTERS = 20


@dataclass
class PrototypeModel:
    """K whole-patch filters (K, c, h, w), biases (K,), reference variance."""

    filters: np.ndarray
    biases: np.ndarray
    sigma_sq: float = 1.0

    def __post_init__(self):
        self.filters = np.asarray(self.filters, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.filters.ndim != 4:
            raise ValueError("filters must be a (K, c, h, w) array")
        if self.biases.shape != (self.filters.shape[0],):
            raise ValueError("biases length must equal the number of filters")
        if not (np.all(np.isfinite(self.filters)) and np.all(np.isfinite(self.biases))):
            raise ValueError("prototype parameters contain non-finite entries")
        if self.sigma_sq <= 0:
            raise ValueError("sigma_sq must be positive")

    @property
    def num_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def patch_shape(self) -> tuple:
        return self.filters.shape[1:]


def _check_patch(m: PrototypeModel, patch: Tensor3) -> None:
    if patch.shape != m.patch_shape:
        raise ValueError(f"patch shape {patch.shape} != filter shape {m.patch_shape}")


def proto_activation(m: PrototypeModel, patch: Tensor3) -> np.ndarray:
    """Binary vector delta_k = 1(<patch, w_k> + b_k > 0)."""
    _check_patch(m, patch)
    responses = np.tensordot(m.filters, patch, axes=3) + m.biases
    return (responses > 0).astype(np.float64)


def proto_mean(m: PrototypeModel, delta: np.ndarray) -> Tensor3:
    """Gated filter sum: sum_k delta_k w_k."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (m.num_filters,):
        raise ValueError(f"delta length {delta.shape} != ({m.num_filters},)")
    return np.tensordot(delta, m.filters, axes=1)


def proto_score(m: PrototypeModel, patch: Tensor3) -> float:
    """sum_k ReLU(<patch, w_k> + b_k)."""
    _check_patch(m, patch)
    responses = np.tensordot(m.filters, patch, axes=3) + m.biases
    return float(np.maximum(responses, 0.0).sum())


def proto_energy(m: PrototypeModel, patch: Tensor3) -> float:
    return sq_norm(patch) / (2.0 * m.sigma_sq) - proto_score(m, patch)


def enumerate_pieces(m: PrototypeModel):
    """All 2^K pieces as (delta, mean, mean_in_piece) triples.

    ``mean`` is ``sigma^2 * sum_k delta_k w_k`` and ``mean_in_piece`` is
    whether the bottom-up pattern of the mean reproduces delta, i.e.
    whether the mean is an exact auto-encoding local mode.
    """
    if m.num_filters > MAX_ENUM_FILTERS:
        raise ValueError(
            f"enumeration limited to K <= {MAX_ENUM_FILTERS}, got K={m.num_filters}"
        )
    pieces = []
    for bits in itertools.product((0.0, 1.0), repeat=m.num_filters):
        delta = np.array(bits, dtype=np.float64)
        mean = m.sigma_sq * proto_mean(m, delta)
        in_piece = bool(np.array_equal(proto_activation(m, mean), delta))
        pieces.append((delta, mean, in_piece))
    return pieces


def as_network(m: PrototypeModel) -> Network:
    """Re-encode as a one-layer conv_sum network with whole-patch kernels.

    The kernel covers the full patch, so each filter produces a single
    1x1 response and the conv_sum score equals the prototype score.
    """
    c, h, w = m.patch_shape
    layer = LayerSpec(
        num_filters=m.num_filters,
        kernel_h=h,
        kernel_w=w,
        stride=max(h, w),
        weights=m.filters.copy(),
        biases=m.biases.copy(),
    )
    net = Network(
        input_channels=c,
        layers=[layer],
        top_mode=CONV_SUM,
        sigma_sq=m.sigma_sq,
    )
    net.validate((h, w))
    return net
