"""128-bit entity identifiers: kind prefix + nanosecond clock + random payload."""

from __future__ import annotations

import random as _random
import time
from dataclasses import dataclass
from enum import IntEnum
from typing import Callable, Container, Optional

TIMESTAMP_BITS = 64
RANDOM_BITS = 56
_RANDOM_MASK = (1 << RANDOM_BITS) - 1
_TIMESTAMP_MASK = (1 << TIMESTAMP_BITS) - 1

# redraws from the rng before falling back to probing the random payload
MAX_REDRAWS = 8


class EntityKind(IntEnum):
    VERTEX = 0x01
    EDGE = 0x02


@dataclass(frozen=True)
class EntityId:
    """Identifier of a vertex or an edge.

    Ids of different kinds never compare equal and refuse ordering
    comparisons against each other.
    """

    kind: EntityKind
    timestamp_ns: int
    random: int

    def __post_init__(self):
        if not isinstance(self.kind, EntityKind):
            object.__setattr__(self, "kind", EntityKind(self.kind))
        if not 0 <= self.timestamp_ns <= _TIMESTAMP_MASK:
            raise ValueError(f"timestamp out of range: {self.timestamp_ns}")
        if not 0 <= self.random <= _RANDOM_MASK:
            raise ValueError(f"random payload out of range: {self.random}")

    @property
    def is_vertex(self) -> bool:
        return self.kind is EntityKind.VERTEX

    @property
    def is_edge(self) -> bool:
        return self.kind is EntityKind.EDGE

    def _key(self, other: "EntityId"):
        if not isinstance(other, EntityId):
            return NotImplemented
        if other.kind is not self.kind:
            raise TypeError("cannot order a vertex id against an edge id")
        return (self.timestamp_ns, self.random), (other.timestamp_ns, other.random)

    def __lt__(self, other):
        k = self._key(other)
        return k if k is NotImplemented else k[0] < k[1]

    def __le__(self, other):
        k = self._key(other)
        return k if k is NotImplemented else k[0] <= k[1]

    def __gt__(self, other):
        k = self._key(other)
        return k if k is NotImplemented else k[0] > k[1]

    def __ge__(self, other):
        k = self._key(other)
        return k if k is NotImplemented else k[0] >= k[1]

    def __int__(self) -> int:
        return (int(self.kind) << (TIMESTAMP_BITS + RANDOM_BITS)) | (
            self.timestamp_ns << RANDOM_BITS
        ) | self.random

    @classmethod
    def from_int(cls, value: int) -> "EntityId":
        if not 0 <= value < (1 << 128):
            raise ValueError("entity id must fit in 128 bits")
        return cls(
            EntityKind(value >> (TIMESTAMP_BITS + RANDOM_BITS)),
            (value >> RANDOM_BITS) & _TIMESTAMP_MASK,
            value & _RANDOM_MASK,
        )

    @property
    def hex(self) -> str:
        return f"{int(self):032x}"

    @classmethod
    def parse(cls, text: str) -> "EntityId":
        if len(text) != 32:
            raise ValueError(f"malformed entity id: {text!r}")
        return cls.from_int(int(text, 16))

    def __str__(self) -> str:
        return self.hex

    def __repr__(self) -> str:
        return f"EntityId({self.kind.name.lower()}:{self.hex})"


def new_id(
    kind: EntityKind,
    clock: Callable[[], int] = time.time_ns,
    rng: Optional[_random.Random] = None,
    taken: Container[EntityId] = (),
) -> EntityId:
    """Draw a fresh id of ``kind`` that is not in ``taken``.

    On collision the random payload is redrawn; if the rng keeps producing
    colliding values the payload is probed linearly instead, so a constant
    rng still terminates.
    """
    rng = rng if rng is not None else _random
    kind = EntityKind(kind)
    ts = clock() & _TIMESTAMP_MASK
    candidate = EntityId(kind, ts, rng.getrandbits(RANDOM_BITS))
    redraws = 0
    while candidate in taken:
        if redraws < MAX_REDRAWS:
            redraws += 1
            candidate = EntityId(kind, ts, rng.getrandbits(RANDOM_BITS))
        else:
            candidate = EntityId(kind, ts, (candidate.random + 1) & _RANDOM_MASK)
    return candidate
