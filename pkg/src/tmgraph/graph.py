"""The typed directed multigraph store."""

from __future__ import annotations

import random
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Hashable, Iterable, Iterator, List, Mapping, Optional, Tuple

from .flow import GraphView, TopologyKind
from .hypergram import (
    DEFAULT_SHARDS,
    CellKind,
    HypergramCell,
    HypergramError,
    Lattice,
    TopologyDescriptor,
    build_lattice,
    describe_topology,
)
from .ids import EntityId, EntityKind, new_id
from .metrics import METRIC_IDS, check_admissible
from .schema import SchemaError, Side, TypeSchema, ValueDictionary
from .superposition import SuperpositionDescriptor, VirtualNode, make_virtual_node


class GraphError(ValueError):
    """Referential or type errors: unknown type, dangling endpoint, missing entity."""


@dataclass(frozen=True)
class EmbeddingProvenance:
    """Which dimensional-reduction map produced an embedding attribute."""

    map_id: str
    version: str = ""

    def __post_init__(self):
        if not self.map_id:
            raise SchemaError("provenance map_id must be nonempty")


@dataclass
class Vertex:
    id: EntityId
    type_name: str
    attributes: Dict[str, Any] = field(default_factory=dict)
    provenance: Dict[str, EmbeddingProvenance] = field(default_factory=dict)


@dataclass
class Edge:
    id: EntityId
    type_name: str
    source: EntityId
    target: EntityId
    attributes: Dict[str, Any] = field(default_factory=dict)
    superposition: Optional[SuperpositionDescriptor] = None
    provenance: Dict[str, EmbeddingProvenance] = field(default_factory=dict)


@dataclass
class ReplicationMeta:
    """Declared replication and durability; stored and echoed, never enforced."""

    replicas: int = 1
    durability: str = ""


# built-in edge vocabulary; names matching these get a schema on first use
_EQUALS_KEYS = {
    "score": ValueDictionary.scalar(range=(0.0, 1.0)),
    "epsilon": ValueDictionary.scalar(range=(0.0, 1.0)),
    "kernel": ValueDictionary.enum({"dirac", "gaussian"}),
    "sigma": ValueDictionary.string(),
    "observer": ValueDictionary.string(),
}
_BUILTIN_PATTERNS: List[Tuple[re.Pattern, Callable[[], Dict[str, ValueDictionary]]]] = [
    (re.compile(r"HAPPENS_BEFORE"), dict),
    (re.compile(r"IS_SIMILAR_AS_.+_ON_.+"), lambda: {"distance": ValueDictionary.scalar()}),
    (re.compile(r"EQUALS_(embodiment|functional|representation)"), lambda: dict(_EQUALS_KEYS)),
    (re.compile(r"SPATIALLY_(CONTAINS|OVERLAPS)"), dict),
    (re.compile(r"CATEGORICALLY_CONTAINS|BELONGS_TO|IN|OWNS"), dict),
    (re.compile(r"IS_(LEFT|RIGHT|FRONT|BACK|BOTTOM|TOP)_PART_OF"), dict),
    (re.compile(r"IS_LARGER_THAN_BY_.+"), dict),
    (re.compile(r"IS_SEQUENCED_AFTER_BY_.+"), dict),
]


def builtin_edge_schema(type_name: str) -> Optional[TypeSchema]:
    for pattern, keys in _BUILTIN_PATTERNS:
        if pattern.fullmatch(type_name):
            return TypeSchema(type_name, keys())
    return None


class _IdSpace:
    def __init__(self, store: "Store"):
        self.store = store

    def __contains__(self, eid) -> bool:
        return self.store._taken(eid)


class Store:
    """In-memory tensor-typed multigraph.

    Parallel edges, of the same or different types, are allowed between any
    pair of endpoints. Edge endpoints are vertices or registered virtual nodes.

    Single writer: callers serialize mutations themselves.
    """

    def __init__(self, *, seed: Optional[int] = None,
                 clock: Callable[[], int] = time.time_ns,
                 metric_registry: Iterable[str] = METRIC_IDS):
        self.clock = clock
        self.rng = random.Random(seed)
        self.metric_registry: Tuple[str, ...] = tuple(sorted(set(metric_registry)))
        unknown = set(self.metric_registry) - set(METRIC_IDS)
        if unknown:
            raise SchemaError(f"unknown metrics in registry: {sorted(unknown)}")
        self.vertex_schemas: Dict[str, TypeSchema] = {}
        self.edge_schemas: Dict[str, TypeSchema] = {}
        self.vertices: Dict[EntityId, Vertex] = {}
        self.edges: Dict[EntityId, Edge] = {}
        self.virtual_nodes: Dict[EntityId, VirtualNode] = {}
        self.cells: Dict[EntityId, HypergramCell] = {}
        self.lattices: Dict[str, Lattice] = {}
        # named registries carried in the manifest
        self.metrics: Dict[str, Any] = {}
        self.kernels: Dict[str, Any] = {}
        self.calibrations: Dict[str, Any] = {}
        self.replication = ReplicationMeta()
        self._incident: Dict[EntityId, set] = {}

    # ids ------------------------------------------------------------------

    def _taken(self, eid: EntityId) -> bool:
        return (eid in self.vertices or eid in self.edges
                or eid in self.virtual_nodes or eid in self.cells)

    def new_id(self, kind: EntityKind) -> EntityId:
        return new_id(kind, self.clock, self.rng, _IdSpace(self))

    # schemas --------------------------------------------------------------

    def register_schema(self, schema: TypeSchema, side: Side | str = Side.VERTEX) -> None:
        side = Side(side)
        registry = self.vertex_schemas if side is Side.VERTEX else self.edge_schemas
        if schema.type_name in registry:
            raise SchemaError(f"{side.value} type {schema.type_name!r} already registered")
        for key, dictionary in schema.keys.items():
            if not isinstance(dictionary, ValueDictionary):
                raise SchemaError(f"{schema.type_name}.{key}: not a value dictionary")
            try:
                check_admissible(dictionary, self.metric_registry)
            except SchemaError as exc:
                raise SchemaError(f"{schema.type_name}.{key}: {exc}") from None
        registry[schema.type_name] = schema

    def vertex_schema(self, type_name: str) -> TypeSchema:
        try:
            return self.vertex_schemas[type_name]
        except KeyError:
            raise GraphError(f"unknown vertex type {type_name!r}") from None

    def edge_schema(self, type_name: str) -> TypeSchema:
        schema = self.edge_schemas.get(type_name)
        if schema is None:
            schema = builtin_edge_schema(type_name)
            if schema is None:
                raise GraphError(f"unknown edge type {type_name!r}")
            self.register_schema(schema, Side.EDGE)
        return schema

    # vertices -------------------------------------------------------------

    def add_vertex(self, type_name: str, attributes: Optional[Mapping[str, Any]] = None,
                   provenance: Optional[Mapping[str, EmbeddingProvenance]] = None,
                   vertex_id: Optional[EntityId] = None) -> EntityId:
        schema = self.vertex_schema(type_name)
        attrs = schema.validate(attributes or {})
        prov = self._check_provenance(attrs, provenance)
        if vertex_id is None:
            vertex_id = self.new_id(EntityKind.VERTEX)
        elif not vertex_id.is_vertex or self._taken(vertex_id):
            raise GraphError(f"cannot use id {vertex_id!r} for a vertex")
        self.vertices[vertex_id] = Vertex(vertex_id, type_name, attrs, prov)
        self._incident[vertex_id] = set()
        return vertex_id

    def get_vertex(self, vertex_id: EntityId) -> Vertex:
        try:
            return self.vertices[vertex_id]
        except KeyError:
            raise GraphError(f"no vertex {vertex_id!r}") from None

    def update_vertex(self, vertex_id: EntityId, attributes: Mapping[str, Any],
                      provenance: Optional[Mapping[str, EmbeddingProvenance]] = None) -> None:
        """Merge ``attributes`` into the vertex; a ``None`` value removes the key."""
        v = self.get_vertex(vertex_id)
        v.attributes, v.provenance = self._merged(
            self.vertex_schema(v.type_name), v.attributes, v.provenance, attributes, provenance)

    def delete_vertex(self, vertex_id: EntityId) -> List[EntityId]:
        """Remove the vertex and every edge incident to it; returns the edge ids removed."""
        self.get_vertex(vertex_id)
        for vn in self.virtual_nodes.values():
            if vertex_id in vn.weights:
                raise GraphError(f"{vertex_id!r} is a constituent of virtual node {vn.id!r}")
        removed = sorted(self._incident.pop(vertex_id))
        for eid in removed:
            self._drop_edge(eid)
        del self.vertices[vertex_id]
        return removed

    # edges ----------------------------------------------------------------

    def _endpoint_exists(self, node: EntityId) -> bool:
        return node in self.vertices or node in self.virtual_nodes

    def add_edge(self, type_name: str, source: EntityId, target: EntityId,
                 attributes: Optional[Mapping[str, Any]] = None, *,
                 superposition: Optional[SuperpositionDescriptor] = None,
                 provenance: Optional[Mapping[str, EmbeddingProvenance]] = None,
                 edge_id: Optional[EntityId] = None) -> EntityId:
        schema = self.edge_schema(type_name)
        for end in (source, target):
            if not isinstance(end, EntityId) or not self._endpoint_exists(end):
                raise GraphError(f"dangling endpoint {end!r}")
        attrs = schema.validate(attributes or {})
        prov = self._check_provenance(attrs, provenance)
        if edge_id is None:
            edge_id = self.new_id(EntityKind.EDGE)
        elif not edge_id.is_edge or self._taken(edge_id):
            raise GraphError(f"cannot use id {edge_id!r} for an edge")
        self.edges[edge_id] = Edge(edge_id, type_name, source, target, attrs, superposition, prov)
        self._incident[source].add(edge_id)
        self._incident[target].add(edge_id)
        return edge_id

    def get_edge(self, edge_id: EntityId) -> Edge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise GraphError(f"no edge {edge_id!r}") from None

    def update_edge(self, edge_id: EntityId, attributes: Mapping[str, Any],
                    provenance: Optional[Mapping[str, EmbeddingProvenance]] = None) -> None:
        e = self.get_edge(edge_id)
        e.attributes, e.provenance = self._merged(
            self.edge_schema(e.type_name), e.attributes, e.provenance, attributes, provenance)

    def delete_edge(self, edge_id: EntityId) -> None:
        self.get_edge(edge_id)
        self._drop_edge(edge_id)

    def _drop_edge(self, edge_id: EntityId) -> None:
        e = self.edges.pop(edge_id)
        for end in (e.source, e.target):
            inc = self._incident.get(end)
            if inc is not None:
                inc.discard(edge_id)

    def incident_edges(self, node: EntityId) -> List[EntityId]:
        return sorted(self._incident.get(node, ()))

    def iter_vertices(self) -> Iterator[Vertex]:
        for vid in sorted(self.vertices):
            yield self.vertices[vid]

    def iter_edges(self) -> Iterator[Edge]:
        for eid in sorted(self.edges):
            yield self.edges[eid]

    def edges_between(self, source: EntityId, target: EntityId) -> List[Edge]:
        return [self.edges[e] for e in sorted(self._incident.get(source, ()))
                if self.edges[e].source == source and self.edges[e].target == target]

    def graph_view(self, type_name: Optional[str] = None, hex_ids: bool = False) -> GraphView:
        """Snapshot for flow analysis; ``hex_ids`` keys everything by id strings."""
        key = (lambda i: i.hex) if hex_ids else (lambda i: i)
        edges = {key(e.id): (key(e.source), key(e.target)) for e in self.iter_edges()
                 if type_name is None or e.type_name == type_name}
        nodes = sorted(self.vertices) + sorted(self.virtual_nodes)
        return GraphView(vertices=[key(v) for v in nodes], edges=edges)

    def query(self, type_name: Optional[str] = None,
              predicate: Optional[Callable[[Vertex], bool]] = None) -> List[Vertex]:
        return [v for v in self.iter_vertices()
                if (type_name is None or v.type_name == type_name)
                and (predicate is None or predicate(v))]

    # virtual nodes ---------------------------------------------------------

    def add_virtual_node(self, constituents, node_id: Optional[EntityId] = None) -> VirtualNode:
        items = list(constituents.items() if isinstance(constituents, Mapping) else constituents)
        for vid, _ in items:
            if vid not in self.vertices:
                raise GraphError(f"virtual node constituent {vid!r} is not a concrete vertex")
        if node_id is None:
            node_id = self.new_id(EntityKind.VERTEX)
        elif self._taken(node_id):
            raise GraphError(f"id {node_id!r} already in use")
        vnode = make_virtual_node(node_id, items)
        self.virtual_nodes[vnode.id] = vnode
        self._incident[vnode.id] = set()
        return vnode

    def delete_virtual_node(self, node_id: EntityId) -> List[EntityId]:
        if node_id not in self.virtual_nodes:
            raise GraphError(f"no virtual node {node_id!r}")
        removed = sorted(self._incident.pop(node_id))
        for eid in removed:
            self._drop_edge(eid)
        del self.virtual_nodes[node_id]
        return removed

    # hypergram lattices ------------------------------------------------------

    def register_lattice(self, name: str, topology: TopologyKind,
                         cell_kind: CellKind | str = CellKind.SCALAR, shape=(),
                         shards: int = DEFAULT_SHARDS,
                         metric_dimensionality: Optional[int] = None,
                         notes: Optional[Mapping[str, str]] = None) -> Lattice:
        if name in self.lattices:
            raise HypergramError(f"lattice {name!r} already registered")
        lattice, points = build_lattice(name, topology)
        lattice.metric_dimensionality = metric_dimensionality
        lattice.notes = dict(notes or {})
        for p in points:
            cid = self.new_id(EntityKind.VERTEX)
            self.cells[cid] = HypergramCell(cid, cell_kind, shape, shards)
            lattice.cells[p] = cid
        self.lattices[name] = lattice
        return lattice

    def lattice(self, name: str) -> Lattice:
        try:
            return self.lattices[name]
        except KeyError:
            raise HypergramError(f"unregistered lattice {name!r}") from None

    def cell(self, name: str, point: Hashable) -> HypergramCell:
        lattice = self.lattice(name)
        try:
            return self.cells[lattice.cells[point]]
        except KeyError:
            raise HypergramError(f"lattice {name!r} has no point {point!r}") from None

    def describe_topology(self, name: str) -> TopologyDescriptor:
        return describe_topology(self.lattice(name))

    # helpers --------------------------------------------------------------

    @staticmethod
    def _check_provenance(attrs, provenance) -> Dict[str, EmbeddingProvenance]:
        prov = dict(provenance or {})
        for key, p in prov.items():
            if key not in attrs:
                raise SchemaError(f"provenance for missing attribute {key!r}")
            if not isinstance(p, EmbeddingProvenance):
                raise SchemaError(f"provenance for {key!r} must be EmbeddingProvenance")
        return prov

    def _merged(self, schema, old_attrs, old_prov, updates, provenance):
        attrs = dict(old_attrs)
        for key, value in updates.items():
            if value is None:
                attrs.pop(key, None)
            else:
                attrs[key] = value
        attrs = schema.validate(attrs)
        prov = {k: p for k, p in old_prov.items() if k in attrs}
        prov.update(provenance or {})
        return attrs, self._check_provenance(attrs, prov)

    def check_schema_soundness(self) -> List[str]:
        """Full scan; returns a description of every stored attribute that fails its schema."""
        problems = []
        for v in self.iter_vertices():
            try:
                self.vertex_schema(v.type_name).validate(v.attributes)
            except (SchemaError, GraphError) as exc:
                problems.append(f"{v.id}: {exc}")
        for e in self.iter_edges():
            try:
                self.edge_schema(e.type_name).validate(e.attributes)
            except (SchemaError, GraphError) as exc:
                problems.append(f"{e.id}: {exc}")
        return problems
