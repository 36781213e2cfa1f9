"""Edges derived from vertex attributes: causal order, comparisons, geometry, membership.

Order templates (``IS_LARGER_THAN_BY_*``, ``IS_SEQUENCED_AFTER_BY_*``) emit
the covering relation of the derived strict order; pass ``closure=True`` in
``params`` to materialize the full transitive closure instead.
"""

from __future__ import annotations

import numbers
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .graph import Store, Vertex
from .ids import EntityId
from .values import Tensor, VectorClock

BBOX_KEY = "bbox"
ORDINATORS = ("byte_order", "numeric_order")
MEMBERSHIP_TEMPLATES = {
    # template -> True when the edge runs member -> container
    "BELONGS_TO": True,
    "IN": True,
    "OWNS": False,
    "CATEGORICALLY_CONTAINS": False,
}
# IS_<direction>_PART_OF: (axis, lower half?)
DIRECTIONS = {
    "LEFT": (0, True), "RIGHT": (0, False),
    "FRONT": (1, True), "BACK": (1, False),
    "BOTTOM": (2, True), "TOP": (2, False),
}


class DerivationError(ValueError):
    pass


def _clock(v: Vertex, clock_key: str) -> VectorClock:
    if clock_key not in v.attributes:
        raise DerivationError(f"vertex {v.id} has no clock attribute {clock_key!r}")
    try:
        return VectorClock.coerce(v.attributes[clock_key])
    except (TypeError, ValueError) as exc:
        raise DerivationError(f"vertex {v.id}: invalid vector clock: {exc}") from None


def derive_happens_before(store: Store, a: EntityId, b: EntityId,
                          clock_key: str = "clock") -> Optional[EntityId]:
    """Add ``HAPPENS_BEFORE`` a->b when a's clock strictly precedes b's."""
    va, vb = store.get_vertex(a), store.get_vertex(b)
    if _clock(va, clock_key).happens_before(_clock(vb, clock_key)):
        return store.add_edge("HAPPENS_BEFORE", a, b)
    return None


def happens_before_pairs(store: Store, vertex_ids: Sequence[EntityId],
                         clock_key: str = "clock") -> List[Tuple[EntityId, EntityId]]:
    clocks = {v: _clock(store.get_vertex(v), clock_key) for v in vertex_ids}
    return [(a, b) for a in vertex_ids for b in vertex_ids
            if a != b and clocks[a].happens_before(clocks[b])]


def derive_all_happens_before(store: Store, vertex_ids: Sequence[EntityId],
                              clock_key: str = "clock") -> List[EntityId]:
    return [store.add_edge("HAPPENS_BEFORE", a, b)
            for a, b in happens_before_pairs(store, vertex_ids, clock_key)]


# ordering helpers ----------------------------------------------------------

def _transitive_closure(nodes: Sequence, rel: Set[Tuple]) -> Set[Tuple]:
    idx = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    reach = np.zeros((n, n), dtype=bool)
    for a, b in rel:
        reach[idx[a], idx[b]] = True
    for k in range(n):
        reach |= reach[:, k:k + 1] & reach[k:k + 1, :]
    if np.any(np.diag(reach)):
        raise DerivationError("comparator does not induce a strict order (cycle)")
    return {(nodes[i], nodes[j]) for i, j in zip(*np.nonzero(reach))}


def _covering(nodes: Sequence, closure: Set[Tuple]) -> Set[Tuple]:
    succ: Dict[Any, Set] = {n: set() for n in nodes}
    for a, b in closure:
        succ[a].add(b)
    return {(a, b) for a, b in closure
            if not any(b in succ[c] for c in succ[a] if c != b)}


def _order_edges(vertices: Sequence[Vertex], precedes: Callable[[Vertex, Vertex], bool],
                 closure: bool) -> List[Tuple[EntityId, EntityId]]:
    rel = set()
    for a in vertices:
        for b in vertices:
            if a.id != b.id and precedes(a, b):
                if precedes(b, a):
                    raise DerivationError(f"{a.id} and {b.id} precede each other")
                rel.add((a.id, b.id))
    nodes = [v.id for v in vertices]
    full = _transitive_closure(nodes, rel)
    chosen = full if closure else _covering(nodes, full)
    return sorted(chosen)


def _attr(v: Vertex, key: str):
    try:
        return v.attributes[key]
    except KeyError:
        raise DerivationError(f"vertex {v.id} lacks attribute {key!r}") from None


def _number(v: Vertex, key: str) -> float:
    x = _attr(v, key)
    if isinstance(x, Tensor) and x.data.size == 1:
        return float(x.data.ravel()[0])
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise DerivationError(f"{v.id}.{key} is not comparable as a number")
    return float(x)


def _ordinator_key(name: str) -> Callable[[Vertex, str], Any]:
    if name == "byte_order":
        def key(v, attr):
            x = _attr(v, attr)
            if not isinstance(x, str):
                raise DerivationError(f"{v.id}.{attr} is not a string")
            return x.encode("utf-8")
        return key
    if name == "numeric_order":
        return _number
    raise DerivationError(f"unsupported ordinator {name!r}; have {ORDINATORS}")


def _bbox(v: Vertex) -> np.ndarray:
    box = _attr(v, BBOX_KEY)
    if not isinstance(box, Tensor) or box.shape != (2, 3):
        raise DerivationError(f"{v.id}.bbox must be a [2,3] tensor")
    lo, hi = box.data
    if np.any(lo > hi):
        raise DerivationError(f"{v.id}.bbox has min corner above max corner")
    return box.data


def _contains(outer: np.ndarray, inner: np.ndarray) -> bool:
    return bool(np.all(outer[0] <= inner[0]) and np.all(inner[1] <= outer[1])
                and not np.array_equal(outer, inner))


def _overlaps(a: np.ndarray, b: np.ndarray) -> bool:
    # closed boxes: touching faces count
    return bool(np.all(a[0] <= b[1]) and np.all(b[0] <= a[1]))


def _part_of(part: np.ndarray, whole: np.ndarray, axis: int, lower: bool) -> bool:
    if not _contains(whole, part):
        return False
    mid = (whole[0, axis] + whole[1, axis]) / 2.0
    return part[1, axis] <= mid if lower else part[0, axis] >= mid


def comparison_pairs(vertices: Sequence[Vertex], template: str,
                     params: Optional[Mapping[str, Any]] = None) -> List[Tuple[EntityId, EntityId]]:
    """(source, target) pairs the template relates, without touching the store."""
    params = dict(params or {})
    closure = bool(params.get("closure", False))
    vertices = sorted(vertices, key=lambda v: v.id)

    if template.startswith("IS_LARGER_THAN_BY_"):
        attr = params.get("attr", template[len("IS_LARGER_THAN_BY_"):])
        values = {v.id: _number(v, attr) for v in vertices}
        return _order_edges(vertices, lambda a, b: values[a.id] > values[b.id], closure)

    if template.startswith("IS_SEQUENCED_AFTER_BY_"):
        name = template[len("IS_SEQUENCED_AFTER_BY_"):]
        if name in ORDINATORS:
            attr = params.get("attr")
            if not attr:
                raise DerivationError("ordinator templates need params['attr']")
            keyf = _ordinator_key(name)
            keys = {v.id: keyf(v, attr) for v in vertices}
            return _order_edges(vertices, lambda a, b: keys[a.id] < keys[b.id], closure)
        cmp = params.get("comparator")
        if not callable(cmp):
            raise DerivationError(f"template {template} needs a callable params['comparator']")

        def precedes(a, b):
            try:
                return cmp(a, b) < 0
            except (KeyError, TypeError) as exc:
                raise DerivationError(f"comparator failed on {a.id}, {b.id}: {exc}") from None
        return _order_edges(vertices, precedes, closure)

    if template in ("SPATIALLY_CONTAINS", "SPATIALLY_OVERLAPS") or (
            template.startswith("IS_") and template.endswith("_PART_OF")):
        boxes = {v.id: _bbox(v) for v in vertices}
        pairs = []
        for a in vertices:
            for b in vertices:
                if a.id == b.id:
                    continue
                ba, bb = boxes[a.id], boxes[b.id]
                if template == "SPATIALLY_CONTAINS":
                    hit = _contains(ba, bb)
                elif template == "SPATIALLY_OVERLAPS":
                    hit = _overlaps(ba, bb)
                else:
                    direction = template[len("IS_"):-len("_PART_OF")]
                    if direction not in DIRECTIONS:
                        raise DerivationError(f"unknown direction {direction!r}")
                    hit = _part_of(ba, bb, *DIRECTIONS[direction])
                if hit:
                    pairs.append((a.id, b.id))
        return pairs

    if template in MEMBERSHIP_TEMPLATES:
        ref_key, match_key = params.get("ref_key"), params.get("match_key")
        if not ref_key or not match_key:
            raise DerivationError(f"{template} needs params 'ref_key' and 'match_key'")
        member_to_container = MEMBERSHIP_TEMPLATES[template]
        pairs = []
        for m in vertices:
            if ref_key not in m.attributes:
                continue
            for c in vertices:
                if c.id != m.id and c.attributes.get(match_key) == m.attributes[ref_key]:
                    pairs.append((m.id, c.id) if member_to_container else (c.id, m.id))
        return pairs

    raise DerivationError(f"unknown edge template {template!r}")


def derive_comparison_edges(store: Store, vertex_ids: Iterable[EntityId], template: str,
                            params: Optional[Mapping[str, Any]] = None) -> List[EntityId]:
    vertices = [store.get_vertex(v) for v in vertex_ids]
    pairs = comparison_pairs(vertices, template, params)
    return [store.add_edge(template, s, t) for s, t in pairs]
