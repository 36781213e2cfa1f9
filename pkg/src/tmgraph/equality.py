"""Kernel-smoothed equality between vertices, as seen by an observer.

Each field the observer can access is smoothed with a discretized Gaussian
(identity when sigma is 0) and the two smoothed values are compared by the
normalized L2 discrepancy ``|a - b| / (|a| + |b| + tiny)``.  The judgement
score is one minus the worst field discrepancy.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from enum import Enum
from typing import Any, FrozenSet, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .graph import Store, Vertex
from .ids import EntityId
from .values import Histogram, Tensor

# keeps the discrepancy finite when both values are zero
MACHINE_FLOOR = np.finfo(np.float64).tiny
SMALLEST_DISCREPANCY = float(np.nextafter(0.0, 1.0))
KERNEL_RADIUS_SIGMAS = 3.0


class EqualityError(ValueError):
    pass


class EqualityType(str, Enum):
    EMBODIMENT = "embodiment"
    FUNCTIONAL = "functional"
    REPRESENTATION = "representation"


@dataclass(frozen=True)
class ObserverScope:
    observer_id: str
    field_mask: FrozenSet[str]

    def __post_init__(self):
        object.__setattr__(self, "field_mask", frozenset(self.field_mask))
        if not self.field_mask:
            raise EqualityError("observer field mask must be nonempty")


@dataclass(frozen=True)
class KernelDescriptor:
    """Dirac (sigma 0) or Gaussian smoothing; ``sigma`` is scalar or per-axis."""

    sigma: Union[float, Tuple[float, ...]] = 0.0
    equality_type: EqualityType = EqualityType.REPRESENTATION
    observer: Optional[ObserverScope] = None

    def __post_init__(self):
        sig = self.sigma
        sig = tuple(float(s) for s in sig) if isinstance(sig, (tuple, list)) else float(sig)
        for s in (sig if isinstance(sig, tuple) else (sig,)):
            if not math.isfinite(s) or s < 0:
                raise EqualityError(f"sigma must be finite and >= 0, got {s}")
        object.__setattr__(self, "sigma", sig)
        object.__setattr__(self, "equality_type", EqualityType(self.equality_type))

    @classmethod
    def dirac(cls, equality_type=EqualityType.REPRESENTATION, observer=None):
        return cls(0.0, equality_type, observer)

    @classmethod
    def gaussian(cls, sigma, equality_type=EqualityType.REPRESENTATION, observer=None):
        return cls(sigma, equality_type, observer)

    @property
    def is_dirac(self) -> bool:
        sig = self.sigma if isinstance(self.sigma, tuple) else (self.sigma,)
        return all(s == 0 for s in sig)

    def sigmas_for(self, ndim: int) -> Tuple[float, ...]:
        if isinstance(self.sigma, tuple):
            if len(self.sigma) != ndim:
                raise EqualityError(f"{len(self.sigma)} sigmas for a {ndim}-d field")
            return self.sigma
        return (self.sigma,) * ndim


@dataclass(frozen=True)
class EqualityJudgement:
    verdict: bool
    score: float
    kernel: KernelDescriptor
    epsilon: float
    observers: Tuple[str, ...] = ()
    discrepancies: Tuple[Tuple[str, float], ...] = ()


def gaussian_weights(sigma: float) -> np.ndarray:
    """Unit-mass Gaussian taps over offsets -r..r, r = ceil(3 sigma)."""
    if sigma == 0:
        return np.ones(1)
    r = int(math.ceil(KERNEL_RADIUS_SIGMAS * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    with np.errstate(over="ignore"):  # tiny sigma: off-center taps vanish
        w = np.exp(-0.5 * (x / sigma) ** 2)
    return w / w.sum()


def smooth(values: np.ndarray, sigmas: Sequence[float]) -> np.ndarray:
    """Separable Gaussian smoothing with mirror padding (edge sample repeated)."""
    out = np.asarray(values, dtype=np.float64)
    for axis, s in enumerate(sigmas):
        if s == 0:
            continue
        w = gaussian_weights(s)
        r = len(w) // 2
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="symmetric")
        moved = np.moveaxis(padded, axis, -1)
        n = out.shape[axis]
        acc = np.zeros(moved.shape[:-1] + (n,))
        for k, wk in enumerate(w):
            acc += wk * moved[..., k:k + n]
        out = np.moveaxis(acc, -1, axis)
    return out


def _l2(x: np.ndarray) -> float:
    # scaled so tiny nonzero differences never underflow to zero
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0:
        return 0.0
    return m * float(np.sqrt(np.sum((x / m) ** 2)))


def _as_array(value, name: str) -> Optional[np.ndarray]:
    if isinstance(value, Tensor):
        return value.data
    if isinstance(value, Histogram):
        return value.counts
    if isinstance(value, numbers.Real) and not isinstance(value, bool):
        return np.array([float(value)])
    return None


def field_discrepancy(a: Any, b: Any, kernel: KernelDescriptor, name: str = "") -> float:
    """Normalized L2 discrepancy in [0, 1] between two smoothed field values."""
    if isinstance(a, Mapping) or isinstance(b, Mapping):
        if not (isinstance(a, Mapping) and isinstance(b, Mapping)) or a.keys() != b.keys():
            return 1.0
        return max((field_discrepancy(a[k], b[k], kernel, f"{name}.{k}") for k in a),
                   default=0.0)
    xa, xb = _as_array(a, name), _as_array(b, name)
    if xa is None or xb is None:
        if xa is not None or xb is not None:
            raise EqualityError(f"field {name!r}: cannot compare {type(a).__name__} "
                                f"with {type(b).__name__}")
        return 0.0 if a == b else 1.0
    if xa.shape != xb.shape:
        raise EqualityError(f"field {name!r}: shape {xa.shape} vs {xb.shape}")
    if kernel.is_dirac:
        if xa.tobytes() == xb.tobytes():
            return 0.0
        delta = float(_l2(xa - xb) / (_l2(xa) + _l2(xb) + MACHINE_FLOOR))
        # signed zeros differ bitwise but not numerically; keep them unequal at epsilon 0
        return max(delta, SMALLEST_DISCREPANCY)
    sig = kernel.sigmas_for(xa.ndim)
    xa, xb = smooth(xa, sig), smooth(xb, sig)
    return float(_l2(xa - xb) / (_l2(xa) + _l2(xb) + MACHINE_FLOOR))


def _judge(fa: Mapping, fb: Mapping, mask: FrozenSet[str], kernel: KernelDescriptor,
           epsilon: float, observers: Tuple[str, ...]) -> EqualityJudgement:
    if not 0 <= epsilon <= 1:
        raise EqualityError(f"epsilon must lie in [0, 1], got {epsilon}")
    deltas = []
    for key in sorted(mask):
        for attrs, side in ((fa, "first"), (fb, "second")):
            if key not in attrs:
                raise EqualityError(f"{side} vertex lacks masked field {key!r}")
        deltas.append((key, field_discrepancy(fa[key], fb[key], kernel, key)))
    worst = max(d for _, d in deltas)
    # compare the discrepancy itself so epsilon=0 never rounds a difference away
    verdict = bool(worst <= epsilon)
    return EqualityJudgement(verdict, 1.0 - worst, kernel, float(epsilon), observers,
                             tuple(deltas))


def _scope(kernel: KernelDescriptor, observer: Optional[ObserverScope]) -> ObserverScope:
    scope = observer or kernel.observer
    if scope is None:
        raise EqualityError("no observer scope given")
    return scope


def kernel_compare(a: Vertex, b: Vertex, kernel: KernelDescriptor, epsilon: float = 0.0,
                   observer: Optional[ObserverScope] = None) -> EqualityJudgement:
    scope = _scope(kernel, observer)
    return _judge(a.attributes, b.attributes, scope.field_mask, kernel, epsilon,
                  (scope.observer_id,))


def kernel_compare_cross_observer(a: Vertex, b: Vertex, kernel: KernelDescriptor,
                                  obs_x: ObserverScope, obs_y: ObserverScope,
                                  epsilon: float = 0.0) -> EqualityJudgement:
    """Compare ``a`` as seen by ``obs_x`` with ``b`` as seen by ``obs_y``.

    Requires the two observers to access exactly the same fields.
    """
    if obs_x.field_mask != obs_y.field_mask:
        raise EqualityError(
            "observers do not overlap functionally: "
            f"{sorted(obs_x.field_mask)} vs {sorted(obs_y.field_mask)}"
        )
    ids = (obs_x.observer_id,) if obs_x.observer_id == obs_y.observer_id else (
        obs_x.observer_id, obs_y.observer_id)
    return _judge(a.attributes, b.attributes, obs_x.field_mask, kernel, epsilon, ids)


def equality_edge_type(equality_type: EqualityType) -> str:
    return f"EQUALS_{EqualityType(equality_type).value}"


def annotate_equality_edge(store: Store, a: EntityId, b: EntityId,
                           judgement: EqualityJudgement) -> EntityId:
    if not judgement.verdict:
        raise EqualityError("cannot record equality for a negative judgement")
    k = judgement.kernel
    sigma = k.sigma if isinstance(k.sigma, tuple) else (k.sigma,)
    attrs = {
        "score": min(1.0, max(0.0, judgement.score)),
        "epsilon": judgement.epsilon,
        "kernel": "dirac" if k.is_dirac else "gaussian",
        "sigma": ",".join(repr(s) for s in sigma),
        "observer": ",".join(judgement.observers),
    }
    return store.add_edge(equality_edge_type(k.equality_type), a, b, attrs)
