"""Type schemas: allowed keys per type and the value dictionary of each key."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, FrozenSet, Mapping, Optional, Tuple

import numpy as np

from .values import AxisRole, Histogram, Tensor


class SchemaError(ValueError):
    """A value, schema or dictionary violates its declared constraints."""


class ValueKind(str, Enum):
    SCALAR = "scalar"
    ENUM = "enum"
    STRING = "string"
    HISTOGRAM = "histogram"
    TENSOR = "tensor"
    COMPOSITE = "composite"


class Side(str, Enum):
    VERTEX = "vertex"
    EDGE = "edge"


@dataclass(frozen=True)
class ValueDictionary:
    """The set of admissible values for one attribute key.

    Only the fields relevant to ``kind`` are consulted; use the classmethod
    constructors rather than filling them in by hand.
    """

    kind: ValueKind
    units: Optional[str] = None
    range: Optional[Tuple[float, float]] = None
    quantization: Optional[float] = None
    tokens: FrozenSet[str] = frozenset()
    bins: int = 0
    shape: Tuple[int, ...] = ()
    axes: Tuple[AxisRole, ...] = ()
    fields: Tuple[Tuple[str, "ValueDictionary"], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ValueKind(self.kind))
        if self.kind is ValueKind.SCALAR:
            if self.range is not None:
                lo, hi = (float(x) for x in self.range)
                if not lo <= hi:
                    raise SchemaError(f"empty scalar range {self.range}")
                object.__setattr__(self, "range", (lo, hi))
            if self.quantization is not None and not self.quantization > 0:
                raise SchemaError("quantization step must be positive")
        elif self.kind is ValueKind.ENUM:
            object.__setattr__(self, "tokens", frozenset(self.tokens))
            if not self.tokens:
                raise SchemaError("enum dictionary needs at least one token")
        elif self.kind is ValueKind.HISTOGRAM:
            if self.bins < 1:
                raise SchemaError("histogram bin count must be >= 1")
        elif self.kind is ValueKind.TENSOR:
            shape = tuple(int(s) for s in self.shape)
            if not shape or any(s < 1 for s in shape):
                raise SchemaError(f"invalid tensor shape {self.shape}")
            axes = tuple(AxisRole(a) for a in self.axes) or (AxisRole.ANONYMOUS,) * len(shape)
            if len(axes) != len(shape):
                raise SchemaError("one axis role per tensor dimension")
            object.__setattr__(self, "shape", shape)
            object.__setattr__(self, "axes", axes)
        elif self.kind is ValueKind.COMPOSITE:
            fields = tuple(sorted((str(k), v) for k, v in dict(self.fields).items()))
            object.__setattr__(self, "fields", fields)

    @classmethod
    def scalar(cls, range=None, quantization=None, units=None):
        return cls(ValueKind.SCALAR, units=units, range=range, quantization=quantization)

    @classmethod
    def enum(cls, tokens, units=None):
        return cls(ValueKind.ENUM, units=units, tokens=frozenset(tokens))

    @classmethod
    def string(cls, units=None):
        return cls(ValueKind.STRING, units=units)

    @classmethod
    def histogram(cls, bins, units=None):
        return cls(ValueKind.HISTOGRAM, units=units, bins=int(bins))

    @classmethod
    def tensor(cls, shape, axes=(), units=None):
        return cls(ValueKind.TENSOR, units=units, shape=tuple(shape), axes=tuple(axes))

    @classmethod
    def composite(cls, fields: Mapping[str, "ValueDictionary"], units=None):
        return cls(ValueKind.COMPOSITE, units=units, fields=tuple(fields.items()))

    @property
    def field_map(self) -> Dict[str, "ValueDictionary"]:
        return dict(self.fields)

    def temporal_axes(self) -> Tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.axes) if a is AxisRole.TEMPORAL)

    def validate(self, value: Any, path: str = "") -> Any:
        """Check ``value`` against this dictionary; return it in canonical form."""
        where = path or "<value>"
        kind = self.kind
        if kind is ValueKind.SCALAR:
            if isinstance(value, bool) or not isinstance(value, numbers.Real):
                raise SchemaError(f"{where}: expected a scalar, got {value!r}")
            x = float(value)
            if not math.isfinite(x):
                raise SchemaError(f"{where}: scalar must be finite")
            if self.range is not None and not self.range[0] <= x <= self.range[1]:
                raise SchemaError(f"{where}: {x} outside {self.range}")
            if self.quantization is not None:
                steps = x / self.quantization
                if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
                    raise SchemaError(f"{where}: {x} not a multiple of {self.quantization}")
            return int(value) if isinstance(value, (int, np.integer)) else x
        if kind is ValueKind.ENUM:
            if not isinstance(value, str) or value not in self.tokens:
                raise SchemaError(f"{where}: {value!r} not in {sorted(self.tokens)}")
            return value
        if kind is ValueKind.STRING:
            if not isinstance(value, str):
                raise SchemaError(f"{where}: expected a string, got {type(value).__name__}")
            return value
        if kind is ValueKind.HISTOGRAM:
            if not isinstance(value, Histogram):
                raise SchemaError(f"{where}: expected a Histogram")
            if value.bins != self.bins:
                raise SchemaError(f"{where}: {value.bins} bins, expected {self.bins}")
            return value
        if kind is ValueKind.TENSOR:
            if not isinstance(value, Tensor):
                raise SchemaError(f"{where}: expected a Tensor")
            if value.shape != self.shape:
                raise SchemaError(f"{where}: shape {value.shape}, expected {self.shape}")
            if value.axes is not None and value.axes != self.axes:
                raise SchemaError(f"{where}: axis roles {value.axes} != {self.axes}")
            if not np.all(np.isfinite(value.data)):
                raise SchemaError(f"{where}: tensor entries must be finite")
            if value.axes is None:
                value = Tensor(value.data, axes=self.axes)
            return value
        # composite
        if not isinstance(value, Mapping):
            raise SchemaError(f"{where}: expected a mapping")
        fields = self.field_map
        out = {}
        for k in sorted(value):
            if k not in fields:
                raise SchemaError(f"{where}: undeclared composite field {k!r}")
            out[k] = fields[k].validate(value[k], f"{where}.{k}")
        return out

    def leaves(self):
        """Yield every non-composite dictionary reachable from this one."""
        if self.kind is ValueKind.COMPOSITE:
            for _, sub in self.fields:
                yield from sub.leaves()
        else:
            yield self


@dataclass
class TypeSchema:
    """Allowed keys of a vertex or edge type and the dictionary of each."""

    type_name: str
    keys: Dict[str, ValueDictionary] = field(default_factory=dict)

    def __post_init__(self):
        if not self.type_name:
            raise SchemaError("type name must be nonempty")

    def validate(self, attributes: Mapping[str, Any]) -> Dict[str, Any]:
        out = {}
        for key in sorted(attributes):
            if key not in self.keys:
                raise SchemaError(f"{self.type_name}: undeclared key {key!r}")
            out[key] = self.keys[key].validate(attributes[key], f"{self.type_name}.{key}")
        return out
