"""Hyper-histogram cells: typed values updated through independent shard accumulators.

Writers add deltas to one shard each; nothing they do is visible through
``reconciled`` until :meth:`HypergramCell.reconcile` folds the shard residues
into the cached global value.  Addition is the only update, so the fold is
independent of shard assignment and arrival order.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from .flow import GraphView, TopologyKind, generate_topology
from .ids import EntityId

DEFAULT_SHARDS = 8
ENCODING_V1 = "dense-f64-v1"


class HypergramError(ValueError):
    pass


class CellKind(str, Enum):
    SCALAR = "scalar"
    HISTOGRAM = "histogram"
    TENSOR = "tensor"


def _zero(kind: CellKind, shape: Tuple[int, ...]):
    if kind is CellKind.SCALAR:
        return 0
    return np.zeros(shape, dtype=np.float64)


class HypergramCell:
    """One lattice cell with ``shards`` independent accumulators.

    Concurrency: ``accumulate`` locks a single shard, so up to ``shards``
    writers proceed in parallel; ``reconcile`` takes every shard lock for its
    fold and therefore excludes writers while it runs.
    """

    def __init__(self, cell_id: EntityId, kind: CellKind | str,
                 shape: Sequence[int] = (), shards: int = DEFAULT_SHARDS,
                 encoding: str = ENCODING_V1):
        self.cell_id = cell_id
        self.kind = CellKind(kind)
        if self.kind is CellKind.SCALAR:
            shape = ()
        else:
            shape = tuple(int(s) for s in shape)
            if not shape or any(s < 1 for s in shape):
                raise HypergramError(f"invalid cell shape {shape}")
            if self.kind is CellKind.HISTOGRAM and len(shape) != 1:
                raise HypergramError("histogram cells are one-dimensional")
        if shards < 1:
            raise HypergramError("a cell needs at least one shard")
        self.shape = shape
        self.encoding = encoding
        self.residues: List = [_zero(self.kind, shape) for _ in range(shards)]
        self.pending = [0] * shards
        self.reconciled = _zero(self.kind, shape)
        self.version = 0
        self._locks = [threading.Lock() for _ in range(shards)]
        self._rr = itertools.count()

    @property
    def shards(self) -> int:
        return len(self.residues)

    def _coerce(self, delta):
        if self.kind is CellKind.SCALAR:
            if isinstance(delta, (bool, np.bool_)) or not np.isscalar(delta):
                raise HypergramError(f"scalar cell takes a number, got {delta!r}")
            if not math.isfinite(delta):
                raise HypergramError("delta must be finite")
            return delta
        arr = np.asarray(delta, dtype=np.float64)
        if arr.shape != self.shape:
            raise HypergramError(f"delta shape {arr.shape} != cell shape {self.shape}")
        if not np.all(np.isfinite(arr)):
            raise HypergramError("delta must be finite")
        if self.kind is CellKind.HISTOGRAM and np.any(arr < 0):
            raise HypergramError("histogram deltas add nonnegative counts")
        return arr

    def accumulate(self, delta, shard: Optional[int] = None) -> int:
        """Add ``delta`` to one shard; returns the shard used."""
        delta = self._coerce(delta)
        if shard is None:
            shard = next(self._rr) % self.shards
        elif not 0 <= shard < self.shards:
            raise HypergramError(f"shard {shard} out of range")
        with self._locks[shard]:
            self.residues[shard] = self.residues[shard] + delta
            self.pending[shard] += 1
        return shard

    def reconcile(self):
        """Fold shard residues into the cached value; return the global value."""
        for lock in self._locks:
            lock.acquire()
        try:
            if any(self.pending):
                total = self.reconciled
                for i in range(self.shards):
                    total = total + self.residues[i]
                    self.residues[i] = _zero(self.kind, self.shape)
                    self.pending[i] = 0
                self.reconciled = total
                self.version += 1
            return self.value
        finally:
            for lock in reversed(self._locks):
                lock.release()

    @property
    def value(self):
        """The reconciled cache as last published (a copy for array kinds)."""
        if self.kind is CellKind.SCALAR:
            return self.reconciled
        return self.reconciled.copy()

    def __repr__(self):
        return f"HypergramCell({self.cell_id!r}, {self.kind.value}, v{self.version})"


@dataclass
class TopologyDescriptor:
    metric_dimensionality: int
    connectional_dimensionality: int
    density: float
    notes: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_dimensionality < 0 or self.connectional_dimensionality < 0:
            raise HypergramError("dimensionalities are nonnegative")


@dataclass
class Lattice:
    """Cells laid out on a tessellation; ``links`` are directed neighbor edges."""

    name: str
    topology: TopologyKind
    cells: Dict[Hashable, EntityId] = field(default_factory=dict)
    links: List[Tuple[Hashable, Hashable]] = field(default_factory=list)
    metric_dimensionality: Optional[int] = None
    notes: Dict[str, str] = field(default_factory=dict)

    def link(self, a, b) -> None:
        if a not in self.cells or b not in self.cells:
            raise HypergramError(f"unknown lattice point in link {a!r}->{b!r}")
        if a == b:
            raise HypergramError("a cell cannot neighbor itself")
        if (a, b) in self.links:
            return
        self.links.append((a, b))

    def view(self) -> GraphView:
        return GraphView(vertices=list(self.cells), edges={l: l for l in self.links})

    def max_links(self) -> int:
        if self.topology.kind == "dense":
            return self.topology.max_directed_edges()
        n = len(self.cells)
        return n * (n - 1)


def build_lattice(name: str, topology: TopologyKind) -> Tuple[Lattice, List[Hashable]]:
    """Lattice points and neighbor links of ``topology``; cell ids are filled in by the caller."""
    view = generate_topology(topology)
    lattice = Lattice(name, topology, links=list(view.edges.values()))
    return lattice, list(view.vertices)


def describe_topology(lattice: Lattice) -> TopologyDescriptor:
    nbrs = lattice.view().out_neighbors()
    connectional = max((len(s) for s in nbrs.values()), default=0)
    possible = lattice.max_links()
    density = len(lattice.links) / possible if possible else 0.0
    if lattice.metric_dimensionality is not None:
        metric_dim = lattice.metric_dimensionality
    else:
        metric_dim = lattice.topology.dimensions
    return TopologyDescriptor(metric_dim, connectional, density, dict(lattice.notes))
