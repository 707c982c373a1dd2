"""Dense 3-D array core and deterministic seeded Gaussian noise.

A ``Tensor3`` is a C-contiguous float64 numpy array of shape
``(channels, height, width)``.  Flattening with ``.ravel()`` therefore
yields the fixed channel-major, then row-major layout used by the
checkpoint format.  All modules in this package operate on arrays in
this convention; the helpers here validate it and implement the handful
of primitives everything else is built on.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor3",
    "SeededRng",
    "tensor3",
    "zeros",
    "check_shape",
    "inner_product",
    "sq_norm",
    "gaussian_noise",
]

# Alias for readability in signatures: a (channels, height, width) float64 array.
Tensor3 = np.ndarray


def tensor3(data) -> Tensor3:
    """Coerce ``data`` to a float64 (channels, height, width) array.

    2-D input is promoted to a single channel.  Raises ``ValueError`` if
    the result is not 3-D or contains non-finite entries.
    """
    a = np.asarray(data, dtype=np.float64)
    if a.ndim == 2:
        a = a[np.newaxis]
    if a.ndim != 3:
        raise ValueError(f"expected 2-D or 3-D data, got ndim={a.ndim}")
    if a.size == 0:
        raise ValueError("tensor dimensions must be positive")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor contains non-finite entries")
    return np.ascontiguousarray(a)


def zeros(channels: int, height: int, width: int) -> Tensor3:
    if channels < 1 or height < 1 or width < 1:
        raise ValueError("tensor dimensions must be positive")
    return np.zeros((channels, height, width), dtype=np.float64)


def check_shape(a: Tensor3, b: Tensor3) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner_product(a: Tensor3, b: Tensor3) -> float:
    """Sum of the elementwise product of two same-shaped tensors."""
    check_shape(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def sq_norm(a: Tensor3) -> float:
    """Squared Euclidean norm; identical code path to inner_product(a, a)."""
    return inner_product(a, a)


class SeededRng:
    """Deterministic Gaussian noise stream backed by the Philox generator.

    Philox is counter-based, so the same seed yields a bit-identical
    sequence of draws regardless of platform thread count.  Concurrent
    consumers must each own their own stream; the documented sub-seeding
    rule is ``spawn(i)`` -> seed ``master_seed XOR i``.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def spawn(self, i: int) -> "SeededRng":
        """Independent stream number ``i``: seed = master_seed XOR i."""
        return SeededRng(self.seed ^ int(i))

    def normal(self, shape, sigma: float = 1.0) -> np.ndarray:
        if sigma <= 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        return sigma * self._gen.standard_normal(shape, dtype=np.float64)

    def state(self) -> dict:
        """JSON-serializable snapshot of the stream position."""
        s = self._gen.bit_generator.state
        return {
            "seed": self.seed,
            "counter": [int(c) for c in s["state"]["counter"]],
            "key": [int(k) for k in s["state"]["key"]],
            "buffer": [int(b) for b in s["buffer"]],
            "buffer_pos": int(s["buffer_pos"]),
            "has_uint32": int(s["has_uint32"]),
            "uinteger": int(s["uinteger"]),
        }

    def set_state(self, snap: dict) -> None:
        self.seed = int(snap["seed"])
        s = self._gen.bit_generator.state
        s["state"]["counter"] = np.array(snap["counter"], dtype=np.uint64)
        s["state"]["key"] = np.array(snap["key"], dtype=np.uint64)
        s["buffer"] = np.array(snap["buffer"], dtype=np.uint64)
        s["buffer_pos"] = snap["buffer_pos"]
        s["has_uint32"] = snap["has_uint32"]
        s["uinteger"] = snap["uinteger"]
        self._gen.bit_generator.state = s

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


def gaussian_noise(shape, sigma: float, rng: SeededRng) -> Tensor3:
    """I.i.d. N(0, sigma^2) tensor of the given (c, h, w) shape."""
    c, h, w = shape
    if c < 1 or h < 1 or w < 1:
        raise ValueError("tensor dimensions must be positive")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return rng.normal((c, h, w), sigma)
