"""Threshold calibration for metric-based equality, and similarity-edge inference.

For labeled distance samples the false-positive rate at threshold ``t`` is the
fraction of *different* pairs with distance <= t, and the false-negative rate
the fraction of *same* pairs with distance > t.  :func:`calibrate` picks the
smallest candidate threshold minimizing ``|FPR - (beta + alpha * FNR)|``;
with ``alpha=1, beta=0`` that is the equal error rate point.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, TextIO, Tuple

import numpy as np

from .graph import Store
from .ids import EntityId
from .metrics import MetricDescriptor, distance

log = logging.getLogger(__name__)


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationPair:
    distance: float
    same: bool

    def __post_init__(self):
        if not math.isfinite(self.distance) or self.distance < 0:
            raise CalibrationError(f"calibration distance must be finite and >= 0: {self.distance}")


@dataclass(frozen=True)
class CalibrationResult:
    threshold: float
    alpha: float
    beta: float
    fnr_at_t: float
    fpr_at_t: float
    n_same: int
    n_diff: int
    metric_id: Optional[str] = None
    field: Optional[str] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationResult":
        return cls(**d)


def candidate_thresholds(distances: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive distinct distances, plus one value below
    every sample and the largest sample itself."""
    uniq = np.unique(distances)
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    return np.concatenate(([uniq[0] - 1.0], mids, [uniq[-1]]))


def error_rates(same: np.ndarray, diff: np.ndarray, thresholds: np.ndarray):
    """(FNR, FPR) at each threshold; ties count as accepted (<=)."""
    same = np.sort(same)
    diff = np.sort(diff)
    accepted_same = np.searchsorted(same, thresholds, side="right")
    accepted_diff = np.searchsorted(diff, thresholds, side="right")
    fnr = (len(same) - accepted_same) / len(same)
    fpr = accepted_diff / len(diff)
    return fnr, fpr


def calibrate(pairs: Iterable[CalibrationPair], alpha: float = 1.0, beta: float = 0.0,
              metric: Optional[MetricDescriptor] = None) -> CalibrationResult:
    pairs = list(pairs)
    if alpha < 0 or not math.isfinite(alpha) or not math.isfinite(beta):
        raise CalibrationError(f"alpha must be finite and >= 0, beta finite: {alpha}, {beta}")
    same = np.array([p.distance for p in pairs if p.same], dtype=np.float64)
    diff = np.array([p.distance for p in pairs if not p.same], dtype=np.float64)
    if len(same) == 0 or len(diff) == 0:
        raise CalibrationError("need at least one same pair and one different pair")

    cands = candidate_thresholds(np.concatenate((same, diff)))
    fnr, fpr = error_rates(same, diff, cands)
    if np.any(np.diff(fpr) < 0) or np.any(np.diff(fnr) > 0):
        raise CalibrationError("error rates are not monotone in the threshold")  # pragma: no cover
    objective = np.abs(fpr - (beta + alpha * fnr))
    best = int(np.argmin(objective))  # first minimum == smallest threshold
    return CalibrationResult(
        threshold=float(cands[best]),
        alpha=float(alpha),
        beta=float(beta),
        fnr_at_t=float(fnr[best]),
        fpr_at_t=float(fpr[best]),
        n_same=len(same),
        n_diff=len(diff),
        metric_id=metric.metric_id if metric else None,
        field=metric.field if metric else None,
    )


def is_equal(a, b, metric: MetricDescriptor, cal: CalibrationResult) -> bool:
    """True when the two values are at most ``cal.threshold`` apart."""
    if cal.metric_id is not None and (cal.metric_id, cal.field) != (metric.metric_id, metric.field):
        raise CalibrationError(
            f"calibration for {cal.metric_id}/{cal.field} used with "
            f"{metric.metric_id}/{metric.field}"
        )
    return distance(metric, a, b) <= cal.threshold


class SimilarityEdges(NamedTuple):
    edges: List[EntityId]
    skipped: List[EntityId]


def similarity_edge_type(metric: MetricDescriptor) -> str:
    return f"IS_SIMILAR_AS_{metric.metric_id.upper()}_ON_{metric.field}"


def infer_similarity_edges(store: Store, vertex_ids: Sequence[EntityId],
                           metric: MetricDescriptor, cal: CalibrationResult) -> SimilarityEdges:
    """Connect every pair judged equal with one edge in each direction.

    Vertices without the metric's field are skipped and reported.
    """
    present, skipped = [], []
    for vid in sorted(set(vertex_ids)):
        v = store.get_vertex(vid)
        (present if metric.field in v.attributes else skipped).append(v)
    if skipped:
        log.info("similarity inference skipped %d vertices lacking %r", len(skipped), metric.field)
    if cal.metric_id is not None and (cal.metric_id, cal.field) != (metric.metric_id, metric.field):
        raise CalibrationError("calibration does not belong to this metric/field")
    etype = similarity_edge_type(metric)
    matches: List[Tuple[EntityId, EntityId, float]] = []
    for i, a in enumerate(present):
        for b in present[i + 1:]:
            d = distance(metric, a.attributes[metric.field], b.attributes[metric.field])
            if d <= cal.threshold:
                matches.append((a.id, b.id, d))
    edges = []
    for a, b, d in matches:
        edges.append(store.add_edge(etype, a, b, {"distance": d}))
        edges.append(store.add_edge(etype, b, a, {"distance": d}))
    return SimilarityEdges(edges, [v.id for v in skipped])


def read_pairs_csv(stream: TextIO) -> List[CalibrationPair]:
    """Parse ``distance,label`` rows with label ``same`` or ``diff``."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["distance", "label"]:
        raise CalibrationError("calibration CSV header must be 'distance,label'")
    pairs = []
    for lineno, row in enumerate(reader, start=2):
        label = (row.get("label") or "").strip()
        if label not in ("same", "diff"):
            raise CalibrationError(f"line {lineno}: label must be 'same' or 'diff'")
        try:
            d = float(row["distance"])
        except (TypeError, ValueError):
            raise CalibrationError(f"line {lineno}: bad distance {row['distance']!r}") from None
        pairs.append(CalibrationPair(d, label == "same"))
    return pairs


def result_to_json(result: CalibrationResult) -> str:
    return json.dumps(result.to_dict(), sort_keys=True, indent=2)
