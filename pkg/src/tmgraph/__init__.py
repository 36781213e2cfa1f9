"""Tensor-typed directed multigraph store.

Vertices and edges carry schema-checked attributes (scalars, tokens, strings,
histograms, named-axis tensors, composites). On top of the store sit metric
and kernel based equality, threshold calibration, superposed nodes and edges,
typed flows and sharded hyper-histogram cells.
"""

from .calibration import (
    CalibrationPair,
    CalibrationResult,
    calibrate,
    infer_similarity_edges,
    is_equal,
)
from .derive import derive_comparison_edges, derive_happens_before
from .equality import (
    EqualityJudgement,
    EqualityType,
    KernelDescriptor,
    ObserverScope,
    annotate_equality_edge,
    kernel_compare,
    kernel_compare_cross_observer,
)
from .flow import (
    CargoType,
    FlowAssignment,
    GraphView,
    TopologyKind,
    check_kirchhoff,
    divergence,
    generate_topology,
    max_flow,
)
from .graph import Edge, EmbeddingProvenance, GraphError, Store, Vertex
from .hypergram import CellKind, HypergramCell, TopologyDescriptor, describe_topology
from .ids import EntityId, EntityKind, new_id
from .metrics import (
    MetricDescriptor,
    bhattacharyya_coefficient,
    bhattacharyya_distance,
    distance,
)
from .schema import SchemaError, Side, TypeSchema, ValueDictionary, ValueKind
from .storage import load, save
from .superposition import (
    DirectionAmplitudes,
    SuperpositionDescriptor,
    VirtualNode,
    collapse,
    direction_probabilities,
    expected_adjacency,
    make_virtual_node,
)
from .values import AxisRole, Histogram, Tensor, VectorClock

__version__ = "0.1.0"

__all__ = [
    "AxisRole",
    "CalibrationPair",
    "CalibrationResult",
    "CargoType",
    "CellKind",
    "DirectionAmplitudes",
    "Edge",
    "EmbeddingProvenance",
    "EntityId",
    "EntityKind",
    "EqualityJudgement",
    "EqualityType",
    "FlowAssignment",
    "GraphError",
    "GraphView",
    "Histogram",
    "HypergramCell",
    "KernelDescriptor",
    "MetricDescriptor",
    "ObserverScope",
    "SchemaError",
    "Side",
    "Store",
    "SuperpositionDescriptor",
    "Tensor",
    "TopologyDescriptor",
    "TopologyKind",
    "TypeSchema",
    "ValueDictionary",
    "ValueKind",
    "VectorClock",
    "Vertex",
    "VirtualNode",
    "annotate_equality_edge",
    "bhattacharyya_coefficient",
    "bhattacharyya_distance",
    "calibrate",
    "check_kirchhoff",
    "collapse",
    "derive_comparison_edges",
    "derive_happens_before",
    "describe_topology",
    "direction_probabilities",
    "distance",
    "divergence",
    "expected_adjacency",
    "generate_topology",
    "infer_similarity_edges",
    "is_equal",
    "kernel_compare",
    "kernel_compare_cross_observer",
    "load",
    "make_virtual_node",
    "max_flow",
    "new_id",
    "save",
]
