"""Distance functions over attribute values.

Supported metric ids and the value kinds they bind to:

===================  ==============================================
bhattacharyya        histogram
euclidean            tensor, scalar
cosine_distance      tensor
levenshtein          string, enum
dtw                  tensor with exactly one temporal axis
===================  ==============================================
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, Optional, Sequence

import numpy as np

from .schema import SchemaError, ValueDictionary, ValueKind
from .values import AxisRole, Histogram, Tensor

# BC == 0 maps to this; float('inf') compares above every finite threshold
# and never arises from overflow here because it is returned explicitly
INFINITE_DISTANCE = math.inf

METRIC_IDS = ("bhattacharyya", "euclidean", "cosine_distance", "levenshtein", "dtw")


class MetricError(ValueError):
    pass


def admissible_metrics(
    dictionary: ValueDictionary, registry: Iterable[str] = METRIC_IDS
) -> FrozenSet[str]:
    """Metric ids from ``registry`` that can compare values of ``dictionary``.

    Composite dictionaries admit the union over their leaves.
    """
    registry = frozenset(registry)
    kind = dictionary.kind
    if kind is ValueKind.COMPOSITE:
        out = frozenset()
        for leaf in dictionary.leaves():
            out |= admissible_metrics(leaf, registry)
        return out
    if kind is ValueKind.HISTOGRAM:
        candidates = {"bhattacharyya"}
    elif kind is ValueKind.TENSOR:
        candidates = {"euclidean", "cosine_distance"}
        if len(dictionary.temporal_axes()) == 1:
            candidates.add("dtw")
    elif kind is ValueKind.SCALAR:
        candidates = {"euclidean"}
    else:
        candidates = {"levenshtein"}
    return frozenset(candidates & registry)


@dataclass(frozen=True)
class MetricDescriptor:
    metric_id: str
    field: str
    params: Dict[str, Any] = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        if self.metric_id not in METRIC_IDS:
            raise MetricError(f"unknown metric {self.metric_id!r}")
        if not self.field:
            raise MetricError("metric must bind to an attribute key")

    def check_dictionary(self, dictionary: ValueDictionary) -> None:
        if self.metric_id not in admissible_metrics(dictionary):
            raise MetricError(
                f"{self.metric_id} cannot compare {dictionary.kind.value} values"
            )


def _check_pair(p: Histogram, q: Histogram):
    if not isinstance(p, Histogram) or not isinstance(q, Histogram):
        raise MetricError("bhattacharyya compares two histograms")
    if p.bins != q.bins:
        raise MetricError(f"bin count mismatch: {p.bins} vs {q.bins}")
    try:
        return p.probabilities(), q.probabilities()
    except ValueError as exc:
        raise MetricError(str(exc)) from None


def bhattacharyya_coefficient(p: Histogram, q: Histogram) -> float:
    """Overlap sum of sqrt(p*q) over bins; unnormalized inputs are normalized first."""
    pp, qq = _check_pair(p, q)
    bc = float(np.sum(np.sqrt(pp * qq)))
    # rounding in sqrt/sum can push identical distributions a few ulps past 1
    return min(max(bc, 0.0), 1.0)


def bhattacharyya_distance(p: Histogram, q: Histogram) -> float:
    bc = bhattacharyya_coefficient(p, q)
    if bc == 0.0:
        return INFINITE_DISTANCE
    d = -math.log(bc)
    return d if d > 0.0 else 0.0


def euclidean(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    d = np.abs((a - b).ravel())
    m = d.max(initial=0.0)
    if m == 0.0:
        return 0.0
    # scaled so subnormal differences do not square to zero
    return float(m * np.sqrt(np.sum((d / m) ** 2)))


def cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise MetricError(f"shape mismatch {a.shape} vs {b.shape}")
    ma, mb = np.max(np.abs(a), initial=0.0), np.max(np.abs(b), initial=0.0)
    if ma == 0.0 or mb == 0.0:
        raise MetricError("cosine distance is undefined for a zero vector")
    a, b = a / ma, b / mb  # rescale so tiny vectors keep a nonzero norm
    sim = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
    return max(0.0, 1.0 - min(1.0, max(-1.0, sim)))


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimal number of single-element insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def dtw(x: np.ndarray, y: np.ndarray, window: Optional[int] = None) -> float:
    """Dynamic time warping cost with the symmetric unit-weight step pattern.

    ``x`` and ``y`` are sequences along axis 0; frames are compared with the
    euclidean distance. ``window`` is a Sakoe-Chiba band half-width; it is
    widened to ``|len(x) - len(y)|`` so an alignment always exists.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        raise MetricError("dtw needs nonempty sequences")
    x = x.reshape(n, -1)
    y = y.reshape(m, -1)
    if x.shape[1] != y.shape[1]:
        raise MetricError("dtw frames differ in size")
    w = max(n, m) if window is None else max(int(window), abs(n - m))
    cost = np.sqrt(((x[:, None, :] - y[None, :, :]) ** 2).sum(axis=2))
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        lo, hi = max(1, i - w), min(m, i + w)
        for j in range(lo, hi + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    return float(acc[n, m])


def _temporal_axis(value: Tensor, params: Dict[str, Any]) -> int:
    if "axis" in params:
        return int(params["axis"])
    if value.axes is not None:
        temporal = [i for i, a in enumerate(value.axes) if a is AxisRole.TEMPORAL]
        if len(temporal) == 1:
            return temporal[0]
        raise MetricError("dtw needs exactly one temporal axis")
    return 0


def _as_vector(value) -> np.ndarray:
    if isinstance(value, Tensor):
        return value.data
    if isinstance(value, numbers.Real) and not isinstance(value, bool):
        return np.array([float(value)])
    raise MetricError(f"expected a tensor or scalar, got {type(value).__name__}")


def distance(metric: MetricDescriptor, a: Any, b: Any) -> float:
    """Distance between two attribute values under ``metric``."""
    mid = metric.metric_id
    if mid == "bhattacharyya":
        return bhattacharyya_distance(a, b)
    if mid == "euclidean":
        return euclidean(_as_vector(a), _as_vector(b))
    if mid == "cosine_distance":
        if not isinstance(a, Tensor) or not isinstance(b, Tensor):
            raise MetricError("cosine distance compares tensors")
        return cosine_distance(a.data, b.data)
    if mid == "levenshtein":
        if not isinstance(a, str) or not isinstance(b, str):
            raise MetricError("levenshtein compares strings")
        return float(levenshtein(a, b))
    if mid == "dtw":
        if not isinstance(a, Tensor) or not isinstance(b, Tensor):
            raise MetricError("dtw compares tensors")
        ax_a, ax_b = _temporal_axis(a, metric.params), _temporal_axis(b, metric.params)
        return dtw(
            np.moveaxis(a.data, ax_a, 0),
            np.moveaxis(b.data, ax_b, 0),
            metric.params.get("window"),
        )
    raise MetricError(f"unknown metric {mid!r}")  # pragma: no cover


def check_admissible(dictionary: ValueDictionary, registry: Iterable[str]) -> None:
    """Raise unless some registered metric can compare ``dictionary`` values."""
    if not admissible_metrics(dictionary, registry):
        raise SchemaError(
            f"{dictionary.kind.value} dictionary admits none of the registered metrics"
        )
