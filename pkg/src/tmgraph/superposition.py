"""Probability-weighted virtual nodes and edges with superposed direction.

Direction amplitudes are nonnegative reals with unit L2 norm; their squares
are the probabilities of the forward, backward and bidirectional readings.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Dict, Iterable, List, Mapping, Tuple, Union

import numpy as np

from .ids import EntityId

if TYPE_CHECKING:  # pragma: no cover
    from .graph import Store

WEIGHT_TOL = 1e-9
NORM_TOL = 1e-9


class SuperpositionError(ValueError):
    pass


@dataclass(frozen=True)
class DirectionAmplitudes:
    forward: float = 1.0
    backward: float = 0.0
    bidirectional: float = 0.0

    def __post_init__(self):
        amps = (self.forward, self.backward, self.bidirectional)
        if any(not math.isfinite(a) or a < 0 for a in amps):
            raise SuperpositionError(f"amplitudes must be finite and >= 0: {amps}")
        norm2 = math.fsum(a * a for a in amps)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise SuperpositionError(f"squared amplitudes sum to {norm2!r}, not 1")

    @classmethod
    def normalized(cls, forward, backward, bidirectional) -> "DirectionAmplitudes":
        """Scale arbitrary nonnegative weights to unit L2 norm."""
        norm = math.sqrt(forward**2 + backward**2 + bidirectional**2)
        if norm == 0:
            raise SuperpositionError("all direction amplitudes are zero")
        return cls(forward / norm, backward / norm, bidirectional / norm)

    @property
    def is_deterministic_forward(self) -> bool:
        return (self.forward, self.backward, self.bidirectional) == (1.0, 0.0, 0.0)


FORWARD = DirectionAmplitudes(1.0, 0.0, 0.0)


@dataclass(frozen=True)
class SuperpositionDescriptor:
    direction: DirectionAmplitudes = FORWARD


def _square(a: float) -> float:
    # square the shortest decimal spelling exactly, round once: 0.8 -> 0.64
    f = Fraction(repr(a))
    return float(f * f)


def direction_probabilities(d: DirectionAmplitudes) -> Tuple[float, float, float]:
    probs = (_square(d.forward), _square(d.backward), _square(d.bidirectional))
    if abs(math.fsum(probs) - 1.0) > 2e-9:
        raise SuperpositionError("direction amplitudes are not normalized")
    return probs


@dataclass(frozen=True)
class VirtualNode:
    """A node whose identity is a weighted choice among concrete vertices."""

    id: EntityId
    constituents: Tuple[Tuple[EntityId, float], ...]

    def __post_init__(self):
        if not self.id.is_vertex:
            raise SuperpositionError("virtual node ids carry the vertex prefix")
        if not self.constituents:
            raise SuperpositionError("virtual node needs at least one constituent")
        ids = [c for c, _ in self.constituents]
        if len(set(ids)) != len(ids):
            raise SuperpositionError("constituents must be distinct")
        total = math.fsum(w for _, w in self.constituents)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise SuperpositionError(f"constituent weights sum to {total!r}")

    @property
    def weights(self) -> Dict[EntityId, float]:
        return dict(self.constituents)

    @property
    def is_degenerate(self) -> bool:
        """A single constituent: the node is just an alias of that vertex."""
        return len(self.constituents) == 1


def make_virtual_node(
    node_id: EntityId,
    constituents: Union[Mapping[EntityId, float], Iterable[Tuple[EntityId, float]]],
) -> VirtualNode:
    """Build a virtual node, renormalizing weights whose total lies in (0, 1]."""
    items = list(constituents.items() if isinstance(constituents, Mapping) else constituents)
    if not items:
        raise SuperpositionError("empty constituent set")
    weights = [float(w) for _, w in items]
    if any(not math.isfinite(w) or w < 0 for w in weights):
        raise SuperpositionError("constituent weights must be finite and >= 0")
    total = math.fsum(weights)
    if total == 0:
        raise SuperpositionError("constituent weights sum to zero")
    if total > 1.0 + WEIGHT_TOL:
        raise SuperpositionError(f"constituent weights sum to {total} > 1")
    normed = [w / total for w in weights]
    return VirtualNode(node_id, tuple((c, w) for (c, _), w in zip(items, normed)))


def collapse(vnode: VirtualNode, rng: np.random.Generator) -> EntityId:
    """Sample one constituent with its declared probability."""
    if vnode.is_degenerate:
        return vnode.constituents[0][0]
    cum = np.cumsum([w for _, w in vnode.constituents])
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    return vnode.constituents[min(idx, len(cum) - 1)][0]


def _endpoint_weights(store: "Store", node: EntityId) -> List[Tuple[EntityId, float]]:
    vnode = store.virtual_nodes.get(node)
    if vnode is None:
        return [(node, 1.0)]
    return list(vnode.constituents)


def expected_adjacency(store: "Store") -> Dict[Tuple[EntityId, EntityId], float]:
    """Project every edge onto concrete vertex pairs with expected weights.

    Forward probability goes to (source, target), backward to (target,
    source), bidirectional to both; virtual endpoints spread the mass over
    their constituents.
    """
    table: Dict[Tuple[EntityId, EntityId], float] = defaultdict(float)
    for edge in store.iter_edges():
        amps = edge.superposition.direction if edge.superposition else FORWARD
        p_fwd, p_bwd, p_bi = direction_probabilities(amps)
        for s, ws in _endpoint_weights(store, edge.source):
            for t, wt in _endpoint_weights(store, edge.target):
                w = ws * wt
                if p_fwd + p_bi:
                    table[(s, t)] += w * (p_fwd + p_bi)
                if p_bwd + p_bi:
                    table[(t, s)] += w * (p_bwd + p_bi)
    return dict(table)
