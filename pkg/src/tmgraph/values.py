"""Attribute value types: named-axis tensors, histograms and vector clocks.

Scalars, enum tokens and strings are stored as plain Python ``int``/``float``
and ``str``; composite values are plain ``dict`` objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

NORMALIZATION_TOL = 1e-9


class AxisRole(str, Enum):
    SPATIAL_X = "spatial-x"
    SPATIAL_Y = "spatial-y"
    SPATIAL_Z = "spatial-z"
    TEMPORAL = "temporal"
    SPECTRAL = "spectral"
    OBSERVER = "observer"
    ANONYMOUS = "anonymous"


class Tensor:
    """Dense row-major float64 tensor with optional axis roles."""

    __slots__ = ("data", "axes")

    def __init__(self, data, shape: Optional[Sequence[int]] = None,
                 axes: Optional[Sequence[AxisRole | str]] = None):
        arr = np.array(data, dtype=np.float64, order="C")
        if shape is not None:
            shape = tuple(int(s) for s in shape)
            if arr.size != math.prod(shape):
                raise ValueError(
                    f"payload length {arr.size} does not match shape {shape}"
                )
            arr = arr.reshape(shape)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if axes is not None:
            axes = tuple(AxisRole(a) for a in axes)
            if len(axes) != arr.ndim:
                raise ValueError(f"{len(axes)} axis roles for a {arr.ndim}-d tensor")
        arr.setflags(write=False)
        self.data = arr
        self.axes = axes

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and self.axes == other.axes
            and self.data.tobytes() == other.data.tobytes()
        )

    def __hash__(self):
        return hash((self.shape, self.data.tobytes()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, axes={self.axes})"


class Histogram:
    """Nonnegative bin counts; ``normalized`` marks a probability vector."""

    __slots__ = ("counts", "normalized")

    def __init__(self, counts, normalized: bool = False):
        arr = np.array(counts, dtype=np.float64).reshape(-1)
        if arr.size < 1:
            raise ValueError("histogram needs at least one bin")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("histogram counts must be finite and nonnegative")
        if normalized and abs(arr.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"normalized histogram sums to {arr.sum()!r}")
        arr.setflags(write=False)
        self.counts = arr
        self.normalized = bool(normalized)

    @property
    def bins(self) -> int:
        return self.counts.size

    def probabilities(self) -> np.ndarray:
        if self.normalized:
            return self.counts
        total = self.counts.sum()
        if total <= 0:
            raise ValueError("zero-mass histogram")
        return self.counts / total

    def __eq__(self, other):
        if not isinstance(other, Histogram):
            return NotImplemented
        return (
            self.normalized == other.normalized
            and self.counts.tobytes() == other.counts.tobytes()
        )

    def __hash__(self):
        return hash((self.normalized, self.counts.tobytes()))

    def __repr__(self):
        return f"Histogram({self.counts.tolist()}, normalized={self.normalized})"


@dataclass
class VectorClock:
    """Process token -> event counter."""

    entries: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for proc, n in self.entries.items():
            if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 0:
                raise ValueError(f"invalid counter for {proc!r}: {n!r}")

    @classmethod
    def coerce(cls, value) -> "VectorClock":
        if isinstance(value, VectorClock):
            return value
        if isinstance(value, Mapping):
            return cls({str(k): int(v) if float(v).is_integer() else v
                        for k, v in value.items()})
        raise TypeError(f"not a vector clock: {value!r}")

    def get(self, proc: str) -> int:
        return self.entries.get(proc, 0)

    def happens_before(self, other: "VectorClock") -> bool:
        strict = False
        for proc in self.entries.keys() | other.entries.keys():
            mine, theirs = self.get(proc), other.get(proc)
            if mine > theirs:
                return False
            if mine < theirs:
                strict = True
        return strict

    def concurrent_with(self, other: "VectorClock") -> bool:
        return not self.happens_before(other) and not other.happens_before(self)
