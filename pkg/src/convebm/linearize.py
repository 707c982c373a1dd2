"""Per-piece affine form of the score, its two computations, and the energy.

For a fixed activation pattern the conv_sum score is affine in the
image: ``score(I) = alpha + <I, B>``.  ``top_down`` computes (alpha, B)
by the deconvolution recursion that starts from all-ones maps at the
top layer and scatter-adds gated, translated kernels downward.
``grad_score`` computes the same B a second way, as the reverse-mode
gradient of the score with respect to the image.  The two routes share
no accumulation code, so their entrywise agreement is a meaningful
cross-check rather than a tautology.

The energy of the tilted model is ``||I||^2 / (2 sigma^2) - score(I)``;
restricted to one piece it is a quadratic with identity Hessian (scaled
by 1/sigma^2) centered at sigma^2 * B.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import CONV_SUM, ActivationPattern, Network, forward, score_conv
from .tensor import Tensor3, sq_norm

__all__ = ["LinearPiece", "top_down", "grad_score", "energy"]


@dataclass
class LinearPiece:
    """Affine representation of the score on one piece: alpha + <I, B>."""

    alpha: float
    B: Tensor3


def _layer_input_shape(net: Network, delta: ActivationPattern, layer_idx: int) -> tuple:
    """Shape of the tensor feeding layer ``layer_idx`` (0-based)."""
    if layer_idx == 0:
        return delta.input_shape
    prev = delta.maps[layer_idx - 1]
    return prev.shape


def top_down(net: Network, delta: ActivationPattern) -> LinearPiece:
    """Deconvolution pass from the gates alone.

    The top coefficient maps are all ones; each layer scatters
    ``coef = B_k(x) * delta_k(x)`` times its kernel into the layer
    below, one kernel offset at a time, and accumulates the gated
    biases into alpha.
    """
    if net.top_mode != CONV_SUM:
        raise ValueError("top_down requires conv_sum top mode")
    if len(delta.maps) != len(net.layers):
        raise ValueError(
            f"pattern has {len(delta.maps)} layers, network has {len(net.layers)}"
        )
    b_cur = np.ones_like(delta.maps[-1])
    alpha = 0.0
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        gates = delta.maps[l]
        if gates.shape != b_cur.shape:
            raise ValueError(
                f"pattern map {l} shape {gates.shape} != expected {b_cur.shape}"
            )
        coef = b_cur * gates
        alpha += float(np.einsum("khw,k->", coef, layer.biases))
        oh, ow = coef.shape[1:]
        s = layer.stride
        b_prev = np.zeros(_layer_input_shape(net, delta, l), dtype=np.float64)
        for u in range(layer.kernel_h):
            for v in range(layer.kernel_w):
                contrib = np.einsum("khw,ki->ihw", coef, layer.weights[:, :, u, v])
                b_prev[:, u : u + s * (oh - 1) + 1 : s, v : v + s * (ow - 1) + 1 : s] += contrib
        b_cur = b_prev
    return LinearPiece(alpha=alpha, B=b_cur)


def grad_score(net: Network, image: Tensor3) -> Tensor3:
    """Reverse-mode gradient of the conv_sum score at ``image``.

    Gates are re-derived from the forward feature maps (a feature is
    positive iff its pre-activation is), and the backward sweep gathers
    per-window contributions, so neither the gate source nor the
    accumulation order is shared with :func:`top_down`.  The ReLU
    subgradient at exactly zero is zero.
    """
    if net.top_mode != CONV_SUM:
        raise ValueError("grad_score requires conv_sum top mode")
    fmaps, _ = forward(net, image)
    adj = np.ones_like(fmaps[-1])
    for l in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[l]
        coef = adj * (fmaps[l + 1] > 0)
        oh, ow = coef.shape[1:]
        s, kh, kw = layer.stride, layer.kernel_h, layer.kernel_w
        adj_prev = np.zeros(fmaps[l].shape, dtype=np.float64)
        for oy in range(oh):
            for ox in range(ow):
                c = coef[:, oy, ox]
                if not c.any():
                    continue
                adj_prev[:, s * oy : s * oy + kh, s * ox : s * ox + kw] += np.einsum(
                    "k,kiuv->iuv", c, layer.weights
                )
        adj = adj_prev
    return adj


def energy(net: Network, image: Tensor3) -> float:
    """Negative log density up to constants: ||I||^2/(2 sigma^2) - score."""
    return sq_norm(image) / (2.0 * net.sigma_sq) - score_conv(net, image)
