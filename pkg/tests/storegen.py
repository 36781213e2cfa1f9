"""Random stores that touch every persisted feature, and a structural comparison."""

import numpy as np

from tmgraph import (
    CalibrationResult,
    DirectionAmplitudes,
    EmbeddingProvenance,
    EqualityType,
    Histogram,
    KernelDescriptor,
    MetricDescriptor,
    ObserverScope,
    Side,
    Store,
    SuperpositionDescriptor,
    Tensor,
    TopologyKind,
    TypeSchema,
    ValueDictionary,
)
from tmgraph.graph import ReplicationMeta

from conftest import ticking_clock

SENSOR = TypeSchema("Sensor", {
    "reading": ValueDictionary.scalar(range=(-1e6, 1e6), units="V"),
    "step": ValueDictionary.scalar(quantization=0.25),
    "mode": ValueDictionary.enum({"idle", "run", "fault"}),
    "label": ValueDictionary.string(),
    "spectrum": ValueDictionary.histogram(5),
    "embedding": ValueDictionary.tensor([16]),
    "trace": ValueDictionary.tensor([6, 3], axes=["temporal", "spectral"]),
    "big": ValueDictionary.tensor([40, 40]),
    "pose": ValueDictionary.composite({
        "xyz": ValueDictionary.tensor([3], axes=["spatial-x"]),
        "frame": ValueDictionary.string(),
        "meta": ValueDictionary.composite({"q": ValueDictionary.scalar()}),
    }),
})
LINK = TypeSchema("LINK", {"weight": ValueDictionary.scalar(), "tag": ValueDictionary.string()})


def _maybe(rng, p=0.7):
    return rng.random() < p


def random_store(seed: int) -> Store:
    rng = np.random.default_rng(seed)
    s = Store(seed=seed, clock=ticking_clock(1_000 + seed * 10_000))
    s.register_schema(SENSOR)
    s.register_schema(TypeSchema("Empty"))
    s.register_schema(LINK, Side.EDGE)
    s.replication = ReplicationMeta(int(rng.integers(1, 5)), f"note {seed}")

    vids = []
    for _ in range(int(rng.integers(1, 8))):
        attrs, prov = {}, {}
        if _maybe(rng):
            attrs["reading"] = float(rng.normal() * 1e3)
        if _maybe(rng):
            attrs["step"] = int(rng.integers(-8, 8)) * 0.25
        if _maybe(rng):
            attrs["mode"] = str(rng.choice(["idle", "run", "fault"]))
        if _maybe(rng):
            attrs["label"] = "".join(rng.choice(list("aé中\n\"\\z"), size=int(rng.integers(0, 6))))
        if _maybe(rng):
            attrs["spectrum"] = Histogram(rng.random(5), normalized=False)
        if _maybe(rng):
            attrs["embedding"] = Tensor(rng.normal(size=16))
            if _maybe(rng, 0.5):
                prov["embedding"] = EmbeddingProvenance("facenet", str(rng.integers(1, 4)))
        if _maybe(rng, 0.5):
            attrs["trace"] = Tensor(rng.normal(size=(6, 3)))
        if _maybe(rng, 0.2):
            attrs["big"] = Tensor(rng.normal(size=(40, 40)))
        if _maybe(rng, 0.5):
            attrs["pose"] = {"xyz": Tensor(rng.normal(size=3)), "frame": "world",
                             "meta": {"q": int(rng.integers(0, 9))}}
        vids.append(s.add_vertex("Sensor", attrs, prov))
    vids.append(s.add_vertex("Empty"))

    nodes = list(vids)
    if len(vids) >= 3 and _maybe(rng):
        w = rng.random(3) + 0.01
        vn = s.add_virtual_node(dict(zip(vids[:3], (w / w.sum() * rng.uniform(0.5, 1.0)).tolist())))
        nodes.append(vn.id)

    for _ in range(int(rng.integers(0, 12))):
        a, b = (nodes[int(i)] for i in rng.integers(0, len(nodes), size=2))
        kind = int(rng.integers(0, 5))
        sp = None
        if _maybe(rng, 0.4):
            sp = SuperpositionDescriptor(DirectionAmplitudes.normalized(*rng.random(3)))
        if kind == 0:
            s.add_edge("LINK", a, b, {"weight": float(rng.random()), "tag": "t"}, superposition=sp)
        elif kind == 1:
            s.add_edge("IS_SIMILAR_AS_EUCLIDEAN_ON_embedding", a, b, {"distance": float(rng.random())})
        elif kind == 2:
            s.add_edge("EQUALS_functional", a, b, {"score": 0.5, "epsilon": 0.5,
                                                   "kernel": "gaussian", "sigma": "1.5"})
        elif kind == 3:
            s.add_edge("HAPPENS_BEFORE", a, b, superposition=sp)
        else:
            s.add_edge("IN", a, b)

    s.register_lattice("grid", TopologyKind.dense(2, int(rng.integers(1, 4))),
                       shards=int(rng.integers(1, 5)), notes={"spin": "n/a"})
    s.register_lattice("spectra", TopologyKind.sparse(3), cell_kind="histogram", shape=(4,),
                       metric_dimensionality=1)
    s.register_lattice("fields", TopologyKind.dense(2), cell_kind="tensor", shape=(2, 2), shards=3)
    s.lattice("spectra").link(0, 2)
    for name, shape in (("grid", ()), ("spectra", (4,)), ("fields", (2, 2))):
        for p in s.lattice(name).cells:
            cell = s.cell(name, p)
            for _ in range(int(rng.integers(0, 5))):
                delta = int(rng.integers(-5, 6)) if not shape else rng.random(shape)
                if name == "grid" and _maybe(rng, 0.3):
                    delta = float(rng.normal())
                cell.accumulate(delta)
                if _maybe(rng, 0.3):
                    cell.reconcile()

    s.metrics["emb"] = MetricDescriptor("euclidean", "embedding")
    s.metrics["tr"] = MetricDescriptor("dtw", "trace", {"window": 2})
    obs = ObserverScope("cam", {"embedding", "trace"})
    s.kernels["soft"] = KernelDescriptor((0.5, 1.25), EqualityType.EMBODIMENT, obs)
    s.kernels["exact"] = KernelDescriptor.dirac()
    s.calibrations["emb"] = CalibrationResult(float(rng.random()), 1.0, 0.0, 0.25, 0.25,
                                              4, 4, "euclidean", "embedding")
    return s


def _cells_equal(a, b):
    if (a.kind, a.shape, a.version, a.encoding, a.pending) != (
            b.kind, b.shape, b.version, b.encoding, b.pending):
        return False
    pairs = [(a.reconciled, b.reconciled)] + list(zip(a.residues, b.residues))
    return len(a.residues) == len(b.residues) and all(
        type(x) is type(y) and np.asarray(x).tobytes() == np.asarray(y).tobytes() for x, y in pairs)


def stores_equal(a: Store, b: Store) -> bool:
    """Structural identity: same entities, payload bytes, registries and cell state."""
    def lattices(s):
        return {n: (l.topology, dict(l.cells), list(l.links), l.metric_dimensionality, l.notes)
                for n, l in s.lattices.items()}

    return (
        a.metric_registry == b.metric_registry
        and a.vertex_schemas == b.vertex_schemas
        and a.edge_schemas == b.edge_schemas
        and a.vertices == b.vertices
        and a.edges == b.edges
        and a.virtual_nodes == b.virtual_nodes
        and a.cells.keys() == b.cells.keys()
        and all(_cells_equal(a.cells[k], b.cells[k]) for k in a.cells)
        and lattices(a) == lattices(b)
        and a.metrics == b.metrics
        and a.kernels == b.kernels
        and a.calibrations == b.calibrations
        and a.replication == b.replication
    )
