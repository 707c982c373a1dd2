"""Langevin dynamics for the tilted model and the noise-free mode finder.

One Langevin step is

    I' = I - (eps^2 / 2) (I / sigma^2 - B) + eps * Z,   Z ~ N(0, 1),

where B is the top-down reconstruction for the current activation
pattern, so the drift is exactly the auto-encoding reconstruction error
(for sigma^2 = 1).  No Metropolis correction is applied; the dynamics
carries the usual O(eps^2) discretization bias.  Dropping the noise
term turns the update into an attractor descent whose fixed points
satisfy I = sigma^2 * B, i.e. the exactly auto-encoding local modes.

Chains are independent: each owns its image and its own noise stream,
so results do not depend on the order chains are advanced in.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .linearize import top_down
from .net import Network, forward
from .tensor import SeededRng, Tensor3

__all__ = [
    "ChainState",
    "LangevinConfig",
    "langevin_step",
    "langevin_run",
    "descend",
]


@dataclass
class ChainState:
    """One persistent chain: current image, step counter, private stream."""

    image: Tensor3
    step_count: int
    rng: SeededRng


@dataclass
class LangevinConfig:
    epsilon: float = 0.3
    steps: int = 10

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")


def _drift(net: Network, image: Tensor3) -> Tensor3:
    _, delta = forward(net, image)
    piece = top_down(net, delta)
    return image / net.sigma_sq - piece.B


def langevin_step(
    net: Network, image: Tensor3, epsilon: float, rng: Optional[SeededRng]
) -> Tensor3:
    """One update; ``rng=None`` suppresses the noise term (test hook)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    out = image - 0.5 * epsilon * epsilon * _drift(net, image)
    if rng is not None:
        out += epsilon * rng.normal(image.shape)
    return out


def langevin_run(net: Network, chain: ChainState, config: LangevinConfig) -> ChainState:
    """Advance a chain ``config.steps`` times, consuming its own stream."""
    image = chain.image
    for _ in range(config.steps):
        image = langevin_step(net, image, config.epsilon, chain.rng)
    return replace(chain, image=image, step_count=chain.step_count + config.steps)


def descend(
    net: Network,
    image: Tensor3,
    epsilon: float = 0.3,
    max_steps: int = 10000,
    tol: float = 1e-8,
):
    """Noise-free attractor dynamics toward a local energy minimum.

    Iterates ``I <- I - (eps^2/2)(I/sigma^2 - B)`` until the largest
    per-pixel change drops below ``tol``.  Returns ``(image,
    converged)``; non-convergence within ``max_steps`` is reported by
    the flag, not an exception.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    half_sq = 0.5 * epsilon * epsilon
    for _ in range(max_steps):
        step = half_sq * _drift(net, image)
        image = image - step
        if np.abs(step).max() < tol:
            return image, True
    return image, False
