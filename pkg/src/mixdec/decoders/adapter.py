"""Thin residual adapter: the only parameters that differ across decoders.

AdapterLayer(x) = x + W1 phi(W2 x) with a bottleneck width d_inner < d.
With W1 = 0 the layer is the identity, which is the tied initialization:
every decoder starts out computing exactly the same function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

FloatArray = NDArray[np.float64]


def relu(x: FloatArray) -> FloatArray:
    return np.maximum(x, 0.0)


@dataclass
class AdapterLayer:
    w1: FloatArray  # (d, d_inner)
    w2: FloatArray  # (d_inner, d)

    def __post_init__(self) -> None:
        d, d_inner = self.w1.shape
        if self.w2.shape != (d_inner, d):
            raise ValueError(
                f"w2 shape {self.w2.shape} incompatible with w1 shape {self.w1.shape}"
            )
        if not d_inner < d:
            raise ValueError(f"bottleneck must be thinner than d: {d_inner} >= {d}")

    @property
    def d(self) -> int:
        return self.w1.shape[0]

    @property
    def d_inner(self) -> int:
        return self.w1.shape[1]


def adapter_forward(layer: AdapterLayer, x: FloatArray) -> FloatArray:
    """Apply x + W1 relu(W2 x); accepts a single (d,) vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (layer.d,):
        raise ValueError(f"expected input of shape ({layer.d},), got {x.shape}")
    return x + layer.w1 @ relu(layer.w2 @ x)


def init_adapter(
    d: int,
    d_inner: int,
    rng: np.random.Generator,
    random_w1: bool = False,
) -> AdapterLayer:
    """Fresh adapter: W2 small random (scale 0.1/sqrt(d)), W1 zero or random.

    Zero W1 makes the adapter an exact identity at the start (tied mode);
    random W1 breaks the symmetry from step one (the init that triggers
    rich-gets-richer behavior under hard assignment).
    """
    scale = 0.1 / np.sqrt(d)
    w2 = rng.normal(0.0, scale, size=(d_inner, d))
    if random_w1:
        w1 = rng.normal(0.0, scale, size=(d, d_inner))
    else:
        w1 = np.zeros((d, d_inner))
    return AdapterLayer(w1=w1, w2=w2)
