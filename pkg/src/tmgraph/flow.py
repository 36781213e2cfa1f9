"""Typed flows on multigraphs: divergence, conservation checks and max-flow."""

from __future__ import annotations

import itertools
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

CONSERVATION_TOL = 1e-9


class FlowError(ValueError):
    pass


@dataclass
class GraphView:
    """Read-only snapshot of a directed multigraph: edge id -> (source, target)."""

    vertices: List[Hashable] = field(default_factory=list)
    edges: Dict[Hashable, Tuple[Hashable, Hashable]] = field(default_factory=dict)

    def out_neighbors(self) -> Dict[Hashable, Set[Hashable]]:
        nbrs = {v: set() for v in self.vertices}
        for s, t in self.edges.values():
            if s != t:
                nbrs.setdefault(s, set()).add(t)
        return nbrs


@dataclass(frozen=True)
class CargoType:
    cargo_id: str
    unit: str = ""


@dataclass
class FlowAssignment:
    """Signed flux per edge for one cargo; negative flux runs against the edge."""

    cargo: CargoType
    flux: Dict[Hashable, float] = field(default_factory=dict)
    capacities: Dict[Hashable, float] = field(default_factory=dict)

    def __post_init__(self):
        for e, c in self.capacities.items():
            if c < 0:
                raise FlowError(f"negative capacity on {e!r}")


@dataclass(frozen=True)
class TopologyKind:
    """``dense`` lattice with per-axis extents, or an empty ``sparse`` scaffold."""

    kind: str = "sparse"
    extents: Tuple[int, ...] = ()
    size: int = 0  # vertex count of a sparse scaffold

    def __post_init__(self):
        if self.kind not in ("dense", "sparse"):
            raise FlowError(f"unknown topology kind {self.kind!r}")
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        if self.kind == "dense":
            if not self.extents:
                raise FlowError("dense lattice needs at least one dimension")
            if any(e < 1 for e in self.extents):
                raise FlowError(f"lattice extents must be >= 1: {self.extents}")
        elif self.size < 0:
            raise FlowError("negative scaffold size")

    @classmethod
    def dense(cls, *extents: int) -> "TopologyKind":
        return cls("dense", tuple(extents))

    @classmethod
    def sparse(cls, size: int = 0) -> "TopologyKind":
        return cls("sparse", (), size)

    @property
    def dimensions(self) -> int:
        return len(self.extents)

    def max_directed_edges(self) -> int:
        """Directed neighbor links the tessellation can hold."""
        if self.kind == "dense":
            n = math.prod(self.extents)
            pairs = sum(n // e * (e - 1) for e in self.extents)
            return 2 * pairs
        return self.size * (self.size - 1)


def generate_topology(kind: TopologyKind) -> GraphView:
    """Dense: lattice points linked to every axis neighbor in both directions."""
    if kind.kind == "sparse":
        return GraphView(vertices=list(range(kind.size)))
    points = list(itertools.product(*(range(e) for e in kind.extents)))
    edges = {}
    for p in points:
        for axis in range(len(kind.extents)):
            if p[axis] + 1 < kind.extents[axis]:
                q = p[:axis] + (p[axis] + 1,) + p[axis + 1:]
                edges[(p, q)] = (p, q)
                edges[(q, p)] = (q, p)
    return GraphView(vertices=points, edges=edges)


def _endpoints(view: GraphView, edge_id):
    try:
        return view.edges[edge_id]
    except KeyError:
        raise FlowError(f"flux on unknown edge {edge_id!r}") from None


def divergence(view: GraphView, assignment: FlowAssignment, vertex) -> float:
    """Inbound minus outbound flux at ``vertex``."""
    total = []
    for e, f in assignment.flux.items():
        s, t = _endpoints(view, e)
        if t == vertex:
            total.append(f)
        if s == vertex:
            total.append(-f)
    return math.fsum(total)


def divergences(view: GraphView, assignment: FlowAssignment) -> Dict[Hashable, float]:
    parts = {v: [] for v in view.vertices}
    for e, f in assignment.flux.items():
        s, t = _endpoints(view, e)
        parts.setdefault(t, []).append(f)
        parts.setdefault(s, []).append(-f)
    return {v: math.fsum(xs) for v, xs in parts.items()}


@dataclass
class KirchhoffReport:
    cargo: str
    passed: bool
    vertex_residuals: Dict[Hashable, float] = field(default_factory=dict)
    capacity_violations: Dict[Hashable, Tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cargo": self.cargo,
            "passed": self.passed,
            "vertex_residuals": {str(v): r for v, r in self.vertex_residuals.items()},
            "capacity_violations": {
                str(e): {"flux": f, "capacity": c}
                for e, (f, c) in self.capacity_violations.items()
            },
        }


def check_kirchhoff(
    view: GraphView,
    assignment: FlowAssignment,
    sources: Iterable = (),
    sinks: Iterable = (),
    tol: float = CONSERVATION_TOL,
) -> KirchhoffReport:
    sources, sinks = set(sources), set(sinks)
    if sources & sinks:
        raise FlowError("a vertex cannot be both source and sink")
    residuals = {
        v: d
        for v, d in divergences(view, assignment).items()
        if v not in sources and v not in sinks and abs(d) > tol
    }
    violations = {}
    for e, cap in assignment.capacities.items():
        f = assignment.flux.get(e, 0.0)
        if abs(f) > cap + tol:
            violations[e] = (f, cap)
    return KirchhoffReport(
        assignment.cargo.cargo_id, not residuals and not violations, residuals, violations
    )


def max_flow(
    view: GraphView,
    cargo: CargoType,
    source,
    sink,
    capacities: Mapping[Hashable, float],
) -> Tuple[float, FlowAssignment]:
    """Edmonds-Karp over the multigraph; edges without a capacity carry nothing.

    Returns the flow value and a witness assignment with one nonnegative flux
    per capacitated edge.
    """
    if source == sink:
        raise FlowError("source and sink must differ")
    for e, c in capacities.items():
        if c < 0:
            raise FlowError(f"negative capacity on {e!r}")
        _endpoints(view, e)

    # residual arcs: (to, capacity, reverse arc index, edge id, forward?)
    arcs: Dict[Hashable, List[list]] = defaultdict(list)
    for e in sorted(capacities, key=repr):
        s, t = view.edges[e]
        if s == t:
            continue
        fwd = [t, float(capacities[e]), None, e, True]
        bwd = [s, 0.0, None, e, False]
        fwd[2], bwd[2] = len(arcs[t]), len(arcs[s])
        arcs[s].append(fwd)
        arcs[t].append(bwd)

    value = 0.0
    while True:
        parent = {source: None}
        queue = deque([source])
        while queue and sink not in parent:
            u = queue.popleft()
            for i, arc in enumerate(arcs[u]):
                if arc[1] > 0 and arc[0] not in parent:
                    parent[arc[0]] = (u, i)
                    queue.append(arc[0])
        if sink not in parent:
            break
        bottleneck = math.inf
        v = sink
        while parent[v] is not None:
            u, i = parent[v]
            bottleneck = min(bottleneck, arcs[u][i][1])
            v = u
        if math.isinf(bottleneck):
            raise FlowError("unbounded flow")
        v = sink
        while parent[v] is not None:
            u, i = parent[v]
            arc = arcs[u][i]
            arc[1] -= bottleneck
            arcs[arc[0]][arc[2]][1] += bottleneck
            v = u
        value += bottleneck

    flux = {e: 0.0 for e in capacities}
    for u, lst in arcs.items():
        for to, cap, _, e, forward in lst:
            if not forward:
                flux[e] = cap  # reverse residual == flow pushed
    assignment = FlowAssignment(cargo, flux, dict(capacities))
    return value, assignment


def min_cut_value(view: GraphView, source, sink, capacities: Mapping) -> float:
    """Capacity of the minimum source/sink cut by enumerating every vertex bipartition.

    Exponential; meant as an independent check on small graphs.
    """
    others = [v for v in view.vertices if v != source and v != sink]
    best = math.inf
    for mask in range(1 << len(others)):
        side = {source} | {v for i, v in enumerate(others) if mask >> i & 1}
        cut = math.fsum(
            capacities.get(e, 0.0)
            for e, (s, t) in view.edges.items()
            if s in side and t not in side
        )
        best = min(best, cut)
    return best


def apply_assignments(
    view: GraphView, assignments: Sequence[FlowAssignment]
) -> Dict[str, Dict[Hashable, float]]:
    """Per-cargo divergence maps; each cargo is analysed on its own."""
    out: Dict[str, Dict[Hashable, float]] = {}
    for a in assignments:
        if a.cargo.cargo_id in out:
            raise FlowError(f"duplicate cargo {a.cargo.cargo_id!r}")
        out[a.cargo.cargo_id] = divergences(view, a)
    return out


@dataclass
class FlowScenario:
    view: GraphView
    assignment: FlowAssignment
    sources: Set[Hashable]
    sinks: Set[Hashable]


def scenario_from_json(doc: Mapping, view: Optional[GraphView] = None) -> FlowScenario:
    """Parse ``{cargo, edges: [{edge_id, flux, capacity}], sources, sinks}``.

    Edge endpoints come from ``view`` when given, else from ``source``/``target``
    fields on each edge entry.
    """
    cargo = doc.get("cargo")
    if isinstance(cargo, Mapping):
        cargo = CargoType(str(cargo["cargo_id"]), str(cargo.get("unit", "")))
    elif isinstance(cargo, str) and cargo:
        cargo = CargoType(cargo)
    else:
        raise FlowError("scenario needs a cargo")
    own = GraphView()
    flux, caps = {}, {}
    for entry in doc.get("edges", []):
        e = entry["edge_id"]
        if view is not None:
            s, t = _endpoints(view, e)
        else:
            try:
                s, t = entry["source"], entry["target"]
            except KeyError:
                raise FlowError(f"edge {e!r} needs source and target") from None
        own.edges[e] = (s, t)
        flux[e] = float(entry.get("flux", 0.0))
        if entry.get("capacity") is not None:
            caps[e] = float(entry["capacity"])
    seen = []
    for s, t in own.edges.values():
        for v in (s, t):
            if v not in seen:
                seen.append(v)
    own.vertices = seen
    return FlowScenario(own, FlowAssignment(cargo, flux, caps),
                        set(doc.get("sources", [])), set(doc.get("sinks", [])))
