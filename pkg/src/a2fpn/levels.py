"""Pyramid level container shared by the context and fusion modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LevelFeature:
    """One pyramid level: index (2..6), stride w.r.t. the image, c×h×w data."""

    level: int
    stride: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"level feature must be c×h×w, got {self.data.shape}")
        if self.stride < 1:
            raise ValueError("stride must be positive")

    @property
    def channels(self):
        return self.data.shape[0]
